"""Patch grid geometry and the canonical token ordering.

Every other module agrees on one ordering of token sites: frame-major,
then row-major within a frame. Masks are serialized in this order and
position ids are flat indices into it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

from ._util import ceil_div


class TokenSite(NamedTuple):
    """Coordinates of one token: frame index, grid row, grid column."""

    t: int
    y: int
    x: int


def effective_patch_size(encoder_patch: int, projector_downsample: int) -> int:
    """Pixels covered by one token along each axis.

    The vision encoder's stem patch and the projector's downsampling factor
    compound, so one token accounts for their product in pixels.
    """
    if encoder_patch < 1:
        raise ValueError(f"encoder_patch must be >= 1, got {encoder_patch}")
    if projector_downsample < 1:
        raise ValueError(
            f"projector_downsample must be >= 1, got {projector_downsample}"
        )
    return encoder_patch * projector_downsample


@dataclass(frozen=True)
class PatchGeometry:
    """Maps a frame's pixel dimensions onto the token grid.

    Grid dimensions use ceiling division, so frames whose sides are not
    divisible by the effective patch size get partial edge cells covering
    only the available pixels.
    """

    frame_width: int
    frame_height: int
    encoder_patch: int
    projector_downsample: int = 1

    def __post_init__(self) -> None:
        for name in ("frame_width", "frame_height", "encoder_patch", "projector_downsample"):
            value = getattr(self, name)
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")

    @property
    def effective_patch(self) -> int:
        return effective_patch_size(self.encoder_patch, self.projector_downsample)

    @property
    def grid_width(self) -> int:
        return ceil_div(self.frame_width, self.effective_patch)

    @property
    def grid_height(self) -> int:
        return ceil_div(self.frame_height, self.effective_patch)

    @property
    def tokens_per_frame(self) -> int:
        return self.grid_width * self.grid_height


def flat_index(site: TokenSite, geometry: PatchGeometry, frames: int) -> int:
    """Position of a site in the canonical frame-major, row-major order."""
    t, y, x = site
    if not 0 <= t < frames:
        raise ValueError(f"frame index {t} out of range [0, {frames})")
    if not 0 <= y < geometry.grid_height:
        raise ValueError(f"grid row {y} out of range [0, {geometry.grid_height})")
    if not 0 <= x < geometry.grid_width:
        raise ValueError(f"grid column {x} out of range [0, {geometry.grid_width})")
    return t * geometry.tokens_per_frame + y * geometry.grid_width + x


def site_from_flat(index: int, geometry: PatchGeometry, frames: int) -> TokenSite:
    """Inverse of :func:`flat_index`."""
    total = frames * geometry.tokens_per_frame
    if not 0 <= index < total:
        raise ValueError(f"flat index {index} out of range [0, {total})")
    t, rest = divmod(index, geometry.tokens_per_frame)
    y, x = divmod(rest, geometry.grid_width)
    return TokenSite(t, y, x)


def iter_sites(geometry: PatchGeometry, frames: int) -> Iterator[TokenSite]:
    """All token sites in canonical order."""
    for t in range(frames):
        for y in range(geometry.grid_height):
            for x in range(geometry.grid_width):
                yield TokenSite(t, y, x)
