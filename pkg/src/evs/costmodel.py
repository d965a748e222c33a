"""Latency and KV-cache cost model.

Memory: for sequence length S, batch B, prefill queue Q, per-token KV
dimension D_kv and element sizes s_kv / s_w, the attention footprint in MiB
is

    M = (S * (B + Q) * D_kv * s_kv  +  delta * S * d_model * s_w  +  P * s_w) / 2^20

with the first term alone being the KV-cache. Everything except that first
term is independent of S, so KV memory scales linearly with sequence
length, and pruning vision tokens shrinks it proportionally.

Latency: prefill time is close to linear in the input token count, so TTFT
is fitted as an ordinary least-squares line against the kept fraction
(1 - pruning_rate). The calibration shipped with the package is a
measurement table for two model sizes (tags "7B" and "14B"), 20 rows each,
embedded verbatim as a container data file. One quirk of the published
measurements is preserved: two consecutive rows carry the same rate label
0.30. The second is presumed to be 0.35; the data file keeps the published
labels and records the presumption in a separate annotated column, which
is what the fits use (row lookups use the published labels).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._util import round_half_up
from .errors import CorruptFileError, InsufficientDataError
from .tensorio import parse_container, read_container

MIB = float(2**20)

_CALIBRATION_RESOURCE = "ttft_calibration.tbin"
TTFT_COLUMNS = ("llm", "vlm")


@dataclass(frozen=True)
class KVCacheSpec:
    """All quantities the attention-memory formulas need."""

    seq_len: int
    batch: int = 1
    prefill_queue: int = 0
    kv_dim_per_token: int = 0
    kv_elem_bytes: int = 2
    weight_elem_bytes: int = 2
    model_dim: int = 0
    attn_params: int = 0
    query_prefill_flag: int = 0

    def __post_init__(self) -> None:
        for name in ("seq_len", "batch", "prefill_queue", "kv_dim_per_token",
                     "model_dim", "attn_params"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("kv_elem_bytes", "weight_elem_bytes"):
            if getattr(self, name) not in (1, 2, 4, 8):
                raise ValueError(f"{name} must be one of 1, 2, 4, 8")
        if self.query_prefill_flag not in (0, 1):
            raise ValueError("query_prefill_flag must be 0 or 1")


def kv_cache_memory(spec: KVCacheSpec) -> float:
    """KV-cache footprint in MiB: S * (B + Q) * D_kv * s_kv / 2^20."""
    return (spec.seq_len * (spec.batch + spec.prefill_queue)
            * spec.kv_dim_per_token * spec.kv_elem_bytes) / MIB


def total_attention_memory(spec: KVCacheSpec) -> float:
    """KV-cache plus optional query-prefill buffer plus attention weights, MiB."""
    extra = (spec.query_prefill_flag * spec.seq_len * spec.model_dim
             * spec.weight_elem_bytes + spec.attn_params * spec.weight_elem_bytes)
    return kv_cache_memory(spec) + extra / MIB


def pruned_seq_len(total_vision_tokens: int, q: float, text_tokens: int = 0) -> int:
    """Sequence length after pruning a fraction q of the vision tokens.

    ``total_vision_tokens`` counts the prunable vision tokens; tokens kept
    unconditionally (text, or an anchored first frame) go in
    ``text_tokens``.
    """
    if not 0.0 <= q < 1.0:
        raise ValueError(f"q must be in [0, 1), got {q}")
    if total_vision_tokens < 0 or text_tokens < 0:
        raise ValueError("token counts must be >= 0")
    return round_half_up((1.0 - q) * total_vision_tokens) + text_tokens


@dataclass(frozen=True)
class LatencyTable:
    """TTFT and end-to-end latency measurements for one model configuration.

    ``pruning_rates`` holds the published rate labels (0.0 denotes the
    unpruned baseline) and may contain a repeated label;
    ``rates_annotated`` resolves any annotated presumption and is the
    abscissa used for fitting.
    """

    model_tag: str
    pruning_rates: np.ndarray
    rates_annotated: np.ndarray
    ttft_vlm: np.ndarray
    ttft_llm: np.ndarray
    latency_e2e: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.pruning_rates)
        for name in ("rates_annotated", "ttft_vlm", "ttft_llm", "latency_e2e"):
            if len(getattr(self, name)) != n:
                raise ValueError("latency table columns disagree in length")
        if n == 0:
            raise ValueError("latency table is empty")
        if (np.diff(self.pruning_rates) < 0).any():
            raise ValueError("latency table rows must be sorted ascending by rate")
        for name in ("ttft_vlm", "ttft_llm", "latency_e2e"):
            if (getattr(self, name) <= 0).any():
                raise ValueError(f"{name} must be strictly positive")

    @property
    def rows(self) -> int:
        return len(self.pruning_rates)

    def ttft(self, column: str) -> np.ndarray:
        if column not in TTFT_COLUMNS:
            raise ValueError(f"column must be one of {TTFT_COLUMNS}, got {column!r}")
        return self.ttft_llm if column == "llm" else self.ttft_vlm

    def row_for_rate(self, q: float) -> Optional[int]:
        """Index of the first row published at rate q, or None."""
        hits = np.flatnonzero(np.abs(self.pruning_rates - q) < 1e-9)
        return int(hits[0]) if hits.size else None


@dataclass(frozen=True)
class TtftFit:
    intercept: float
    slope: float
    r_squared: float

    def predict(self, kept_fraction: float) -> float:
        return self.intercept + self.slope * kept_fraction


def fit_ttft_model(table: LatencyTable, column: str = "llm") -> TtftFit:
    """Least-squares line of TTFT against kept fraction (1 - rate)."""
    y = table.ttft(column)
    if table.rows < 3:
        raise InsufficientDataError(
            f"TTFT fit needs at least 3 rows, table has {table.rows}"
        )
    x = 1.0 - table.rates_annotated
    design = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    pred = design @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return TtftFit(float(coef[0]), float(coef[1]), 1.0 - ss_res / ss_tot)


def measured_speedup(table: LatencyTable, q: float, column: str = "llm") -> Optional[float]:
    """Baseline TTFT over TTFT at published rate q; None when q is not tabulated."""
    base = table.row_for_rate(0.0)
    row = table.row_for_rate(q)
    if base is None or row is None:
        return None
    y = table.ttft(column)
    return float(y[base] / y[row])


@dataclass(frozen=True)
class SpeedupRow:
    pruning_rate: float
    measured_llm: Optional[float]
    predicted_llm: float
    measured_vlm: Optional[float]
    predicted_vlm: float


@dataclass(frozen=True)
class SpeedupReport:
    model_tag: str
    rows: tuple[SpeedupRow, ...]
    fit_llm: TtftFit
    fit_vlm: TtftFit

    def format_text(self) -> str:
        lines = [
            f"model {self.model_tag}: ttft fits vs kept fraction "
            f"(llm r2={self.fit_llm.r_squared:.6f}, vlm r2={self.fit_vlm.r_squared:.6f})",
            f"{'q':>6} {'llm_measured':>13} {'llm_predicted':>14} "
            f"{'vlm_measured':>13} {'vlm_predicted':>14}",
        ]
        for r in self.rows:
            m_llm = f"{r.measured_llm:.3f}x" if r.measured_llm is not None else "-"
            m_vlm = f"{r.measured_vlm:.3f}x" if r.measured_vlm is not None else "-"
            lines.append(
                f"{r.pruning_rate:>6.2f} {m_llm:>13} {r.predicted_llm:>13.3f}x "
                f"{m_vlm:>13} {r.predicted_vlm:>13.3f}x"
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["pruning_rate,measured_llm,predicted_llm,measured_vlm,predicted_vlm"]
        for r in self.rows:
            m_llm = f"{r.measured_llm:.6f}" if r.measured_llm is not None else ""
            m_vlm = f"{r.measured_vlm:.6f}" if r.measured_vlm is not None else ""
            lines.append(
                f"{r.pruning_rate:.4f},{m_llm},{r.predicted_llm:.6f},"
                f"{m_vlm},{r.predicted_vlm:.6f}"
            )
        return "\n".join(lines) + "\n"


def speedup_report(q_list: Sequence[float], model_tag: str,
                   calibration: Optional[dict[str, LatencyTable]] = None) -> SpeedupReport:
    """Measured (from the table) and predicted (from the fit) speedups per rate."""
    tables = calibration if calibration is not None else load_calibration()
    if model_tag not in tables:
        raise ValueError(
            f"unknown model tag {model_tag!r}; calibrated tags: {sorted(tables)}"
        )
    table = tables[model_tag]
    fit_llm = fit_ttft_model(table, "llm")
    fit_vlm = fit_ttft_model(table, "vlm")
    rows = []
    for q in q_list:
        if not 0.0 <= q < 1.0:
            raise ValueError(f"q must be in [0, 1), got {q}")
        rows.append(SpeedupRow(
            pruning_rate=float(q),
            measured_llm=measured_speedup(table, q, "llm"),
            predicted_llm=fit_llm.predict(1.0) / fit_llm.predict(1.0 - q),
            measured_vlm=measured_speedup(table, q, "vlm"),
            predicted_vlm=fit_vlm.predict(1.0) / fit_vlm.predict(1.0 - q),
        ))
    return SpeedupReport(model_tag, tuple(rows), fit_llm, fit_vlm)


def _tables_from_container(values: np.ndarray, meta: dict) -> dict[str, LatencyTable]:
    models = meta.get("models")
    columns = meta.get("columns")
    if not models or not columns or values.ndim != 2 or values.shape[1] != len(columns):
        raise CorruptFileError("calibration table metadata is inconsistent")
    col = {name: values[:, i] for i, name in enumerate(columns)}
    out = {}
    for tag in models:
        out[tag] = LatencyTable(
            model_tag=tag,
            pruning_rates=col["pruning_rate"],
            rates_annotated=col["pruning_rate_annotated"],
            ttft_vlm=col[f"ttft_vlm_{tag}"],
            ttft_llm=col[f"ttft_llm_{tag}"],
            latency_e2e=col[f"latency_{tag}"],
        )
    return out


def load_calibration(path: Optional[str | Path] = None) -> dict[str, LatencyTable]:
    """Latency tables keyed by model tag, from `path` or the embedded data file."""
    if path is not None:
        header, payload = read_container(path)
    else:
        blob = resources.files("evs").joinpath(f"data/{_CALIBRATION_RESOURCE}").read_bytes()
        header, payload = parse_container(blob, _CALIBRATION_RESOURCE)
    if header["kind"] != "meta" or header["dtype"] != "f64":
        raise CorruptFileError("calibration file must be a kind=meta f64 table")
    shape = header["shape"]
    if int(np.prod(shape, dtype=np.int64)) * 8 != len(payload):
        raise CorruptFileError("calibration payload length disagrees with its header")
    values = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return _tables_from_container(values, dict(header["meta"]))
