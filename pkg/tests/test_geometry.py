import pytest
from hypothesis import given
from hypothesis import strategies as st

from evs.geometry import (
    PatchGeometry,
    TokenSite,
    effective_patch_size,
    flat_index,
    iter_sites,
    site_from_flat,
)


@pytest.mark.parametrize("encoder,downsample,expected", [
    (16, 2, 32),
    (14, 1, 14),
    (16, 4, 64),
])
def test_effective_patch_size(encoder, downsample, expected):
    assert effective_patch_size(encoder, downsample) == expected


@pytest.mark.parametrize("encoder,downsample", [(0, 1), (16, 0), (-3, 2), (16, -1)])
def test_effective_patch_size_rejects_nonpositive(encoder, downsample):
    with pytest.raises(ValueError):
        effective_patch_size(encoder, downsample)


def test_geometry_grid_dimensions():
    geo = PatchGeometry(frame_width=100, frame_height=60, encoder_patch=16, projector_downsample=2)
    assert geo.effective_patch == 32
    assert geo.grid_width == 4  # ceil(100/32)
    assert geo.grid_height == 2  # ceil(60/32)
    assert geo.tokens_per_frame == 8


def test_geometry_rejects_nonpositive_fields():
    with pytest.raises(ValueError):
        PatchGeometry(0, 10, 16)
    with pytest.raises(ValueError):
        PatchGeometry(10, 10, 16, 0)


def test_flat_index_origin_is_zero():
    geo = PatchGeometry(64, 64, 16)
    assert flat_index(TokenSite(0, 0, 0), geo, frames=3) == 0


def test_flat_index_one_frame_offset():
    geo = PatchGeometry(32, 32, 16)  # 2x2 grid
    assert flat_index(TokenSite(1, 0, 0), geo, frames=2) == 4


def test_flat_index_matches_enumeration_oracle():
    # enumerate all 18 sites of a 2-frame 3x3 grid in canonical order
    geo = PatchGeometry(48, 48, 16)
    assert (geo.grid_height, geo.grid_width) == (3, 3)
    ordered = list(iter_sites(geo, frames=2))
    assert len(ordered) == 18
    assert ordered.index(TokenSite(1, 1, 1)) == 13
    assert flat_index(TokenSite(1, 1, 1), geo, frames=2) == 13
    for expected, site in enumerate(ordered):
        assert flat_index(site, geo, frames=2) == expected


@pytest.mark.parametrize("site", [
    TokenSite(-1, 0, 0), TokenSite(2, 0, 0), TokenSite(0, 2, 0), TokenSite(0, 0, 2),
])
def test_flat_index_rejects_out_of_bounds(site):
    geo = PatchGeometry(32, 32, 16)
    with pytest.raises(ValueError):
        flat_index(site, geo, frames=2)


@given(
    frames=st.integers(1, 5),
    grid_h=st.integers(1, 6),
    grid_w=st.integers(1, 6),
    patch=st.integers(1, 8),
)
def test_flat_index_is_a_bijection(frames, grid_h, grid_w, patch):
    geo = PatchGeometry(grid_w * patch, grid_h * patch, patch)
    seen = [flat_index(site, geo, frames) for site in iter_sites(geo, frames)]
    assert seen == list(range(frames * grid_h * grid_w))
    for idx in seen:
        assert flat_index(site_from_flat(idx, geo, frames), geo, frames) == idx


@given(width=st.integers(1, 500), height=st.integers(1, 500), patch=st.integers(1, 64))
def test_grid_covers_every_pixel(width, height, patch):
    geo = PatchGeometry(width, height, patch)
    assert geo.grid_width * geo.effective_patch >= width
    assert geo.grid_height * geo.effective_patch >= height
    # no fully-empty trailing cell
    assert (geo.grid_width - 1) * geo.effective_patch < width
    assert (geo.grid_height - 1) * geo.effective_patch < height
