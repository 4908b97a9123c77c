"""Room-acoustic decay metrics.

Octave-band filtering, Schroeder backward integration and the ISO 3382-1
style decay-time fits (T30 with a T20 fallback, EDT), plus MAE/RMSE
aggregation and the plain-text metrics report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence, TextIO

import numpy as np
from scipy import signal as sps

from .bands import BAND_LABELS, N_BANDS, OCTAVE_CENTERS, band_edges
from .errors import NoValidPairs, ParseError, RateTooLow, ZeroEnergy

FILTER_ORDER = 2  # butterworth prototype order; band-pass order is twice this
RING_PERIODS = 10  # zero extension on each side, in periods of the band centre


@lru_cache(maxsize=8)
def octave_sos(sample_rate: float) -> tuple:
    """Second-order sections of the eight band-pass filters."""
    if sample_rate < 2 * OCTAVE_CENTERS[-1] * math.sqrt(2):
        raise RateTooLow(f"sample rate {sample_rate} Hz cannot represent the 8 kHz octave band")
    return tuple(
        sps.butter(FILTER_ORDER, band_edges(fc), btype="bandpass", fs=sample_rate, output="sos")
        for fc in OCTAVE_CENTERS
    )


def octave_filter_bank(x, sample_rate: float) -> np.ndarray:
    """Split a signal into the eight octave bands with zero-phase filtering.

    The signal is treated as zero outside its support: it is extended with
    zeros long enough for each filter to ring out, filtered forward and
    backward, and trimmed back to its original length.

    Parameters
    ----------
    x : array_like, shape (..., n)
    sample_rate : float
        Must be at least ``2 * 8000 * sqrt(2)`` Hz.

    Returns
    -------
    ndarray, shape (8, ..., n)
    """
    octave_sos(float(sample_rate))
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = np.zeros((N_BANDS,) + x.shape)
    if n == 0:
        return out
    for b in range(N_BANDS):
        out[b] = band_filter(x, sample_rate, b)
    return out


def band_filter(x, sample_rate: float, band: int) -> np.ndarray:
    """Zero-phase filtering of ``x`` (last axis) by one octave band."""
    sos = octave_sos(float(sample_rate))[band]
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    pad = int(math.ceil(RING_PERIODS * sample_rate / OCTAVE_CENTERS[band]))
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    y = sps.sosfiltfilt(sos, np.pad(x, widths), axis=-1, padtype=None)
    return y[..., pad:pad + n]


@dataclass
class DecayCurve:
    """Normalized Schroeder decay, level in dB with ``level[0] == 0``."""

    time: np.ndarray
    level: np.ndarray


@dataclass(frozen=True)
class DecayFit:
    seconds: float
    valid: bool
    method: str = ""


def schroeder_decay(h, sample_rate: float) -> DecayCurve:
    """Backward-integrated energy decay of an impulse response.

    Samples after the last nonzero sample have level ``-inf``.
    """
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.size == 0 or not np.all(np.isfinite(h)):
        raise ZeroEnergy("decay curve needs a finite, non-empty signal")
    energy = np.cumsum((h * h)[::-1])[::-1]
    if energy[0] <= 0:
        raise ZeroEnergy("signal has no energy")
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(energy / energy[0])
    level[0] = 0.0
    return DecayCurve(np.arange(h.size) / sample_rate, level)


def _slope(curve: DecayCurve, upper: float, lower: float):
    sel = (curve.level <= upper) & (curve.level >= lower)
    if np.count_nonzero(sel) < 2:
        return None
    t = curve.time[sel]
    y = curve.level[sel]
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom <= 0:
        return None
    slope = float(tc @ (y - y.mean())) / denom
    return slope if slope < 0 else None


def rt60_from_decay(curve: DecayCurve) -> DecayFit:
    """Reverberation time from a -5..-35 dB line fit, or -5..-25 dB as fallback."""
    floor = float(np.min(curve.level))
    if floor <= -35.0:
        slope = _slope(curve, -5.0, -35.0)
        method = "T30"
    elif floor <= -25.0:
        slope = _slope(curve, -5.0, -25.0)
        method = "T20"
    else:
        return DecayFit(math.nan, False, "")
    if slope is None:
        return DecayFit(math.nan, False, method)
    return DecayFit(-60.0 / slope, True, method)


def edt_from_decay(curve: DecayCurve) -> DecayFit:
    """Early decay time from a 0..-10 dB line fit."""
    if float(np.min(curve.level)) > -10.0:
        return DecayFit(math.nan, False, "")
    slope = _slope(curve, 0.0, -10.0)
    if slope is None:
        return DecayFit(math.nan, False, "EDT")
    return DecayFit(-60.0 / slope, True, "EDT")


@dataclass
class BandMetrics:
    """Per-band RT60 and EDT; invalid bands hold NaN."""

    rt60: np.ndarray
    edt: np.ndarray
    rt60_valid: np.ndarray
    edt_valid: np.ndarray
    rt60_method: tuple = ()

    @classmethod
    def from_rt60(cls, rt60, edt=None) -> "BandMetrics":
        """Metrics from tabulated values; NaN entries count as invalid."""
        rt60 = np.asarray(rt60, dtype=float).reshape(N_BANDS)
        edt = np.full(N_BANDS, np.nan) if edt is None else np.asarray(edt, dtype=float).reshape(N_BANDS)
        return cls(rt60, edt, np.isfinite(rt60) & (rt60 > 0), np.isfinite(edt) & (edt > 0))


def measure_bands(rir, sample_rate: float) -> BandMetrics:
    """RT60 and EDT of a single-channel RIR in each octave band."""
    bands = octave_filter_bank(np.asarray(rir, dtype=float).reshape(-1), sample_rate)
    rt, edt = np.full(N_BANDS, np.nan), np.full(N_BANDS, np.nan)
    rt_ok, edt_ok = np.zeros(N_BANDS, bool), np.zeros(N_BANDS, bool)
    methods = []
    for b in range(N_BANDS):
        try:
            curve = schroeder_decay(bands[b], sample_rate)
        except ZeroEnergy:
            methods.append("")
            continue
        fit = rt60_from_decay(curve)
        rt[b], rt_ok[b] = fit.seconds, fit.valid
        methods.append(fit.method)
        fit = edt_from_decay(curve)
        edt[b], edt_ok[b] = fit.seconds, fit.valid
    return BandMetrics(rt, edt, rt_ok, edt_ok, tuple(methods))


@dataclass
class MetricSummary:
    mae: float
    rmse: float
    n: int
    band_mae: np.ndarray = field(default_factory=lambda: np.full(N_BANDS, np.nan))
    band_rmse: np.ndarray = field(default_factory=lambda: np.full(N_BANDS, np.nan))
    band_n: np.ndarray = field(default_factory=lambda: np.zeros(N_BANDS, int))


@dataclass
class ErrorSummary:
    rt60: MetricSummary
    edt: MetricSummary


def _summarize(est: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> MetricSummary:
    err = est - gt
    band_mae = np.full(N_BANDS, np.nan)
    band_rmse = np.full(N_BANDS, np.nan)
    band_n = valid.sum(axis=0)
    for b in range(N_BANDS):
        e = err[valid[:, b], b]
        if e.size:
            band_mae[b] = np.mean(np.abs(e))
            band_rmse[b] = math.sqrt(np.mean(e * e))
    e = err[valid]
    if e.size == 0:
        return MetricSummary(math.nan, math.nan, 0, band_mae, band_rmse, band_n)
    return MetricSummary(float(np.mean(np.abs(e))), math.sqrt(float(np.mean(e * e))), int(e.size),
                         band_mae, band_rmse, band_n)


def error_summary(estimates: Sequence[BandMetrics] | Mapping[str, BandMetrics],
                  ground_truth: Sequence[BandMetrics] | Mapping[str, BandMetrics]) -> ErrorSummary:
    """MAE and RMSE of RT60 and EDT, pooled over (scene, band) pairs.

    Pairs where either side is invalid are left out. Mappings are matched
    by key, sequences by position.
    """
    if isinstance(estimates, Mapping):
        keys = list(estimates)
        if set(keys) != set(ground_truth):
            raise ValueError("estimate and ground-truth scene sets differ")
        estimates = [estimates[k] for k in keys]
        ground_truth = [ground_truth[k] for k in keys]
    if len(estimates) != len(ground_truth):
        raise ValueError("estimates and ground truth have different lengths")
    if not estimates:
        raise NoValidPairs("no scenes given")
    est_rt = np.array([m.rt60 for m in estimates])
    gt_rt = np.array([m.rt60 for m in ground_truth])
    rt_ok = np.array([m.rt60_valid for m in estimates]) & np.array([m.rt60_valid for m in ground_truth])
    est_edt = np.array([m.edt for m in estimates])
    gt_edt = np.array([m.edt for m in ground_truth])
    edt_ok = np.array([m.edt_valid for m in estimates]) & np.array([m.edt_valid for m in ground_truth])
    if not rt_ok.any() and not edt_ok.any():
        raise NoValidPairs("every (scene, band) pair is invalid")
    return ErrorSummary(_summarize(est_rt, gt_rt, rt_ok), _summarize(est_edt, gt_edt, edt_ok))


REPORT_COLUMNS = ("scene", "band", "RT60_est", "RT60_gt", "EDT_est", "EDT_gt")


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.6f}"


def write_report(out: TextIO, estimates: Mapping[str, BandMetrics],
                 ground_truth: Mapping[str, BandMetrics], summary: ErrorSummary) -> None:
    """Write the tab-separated metrics report.

    A per-(scene, band) table is followed by a ``# summary`` block with
    pooled and per-band MAE/RMSE and the number of valid pairs.
    """
    out.write("\t".join(REPORT_COLUMNS) + "\n")
    for scene in sorted(estimates):
        est, gt = estimates[scene], ground_truth[scene]
        for b, label in enumerate(BAND_LABELS):
            row = [scene, label,
                   _fmt(est.rt60[b] if est.rt60_valid[b] else math.nan),
                   _fmt(gt.rt60[b] if gt.rt60_valid[b] else math.nan),
                   _fmt(est.edt[b] if est.edt_valid[b] else math.nan),
                   _fmt(gt.edt[b] if gt.edt_valid[b] else math.nan)]
            out.write("\t".join(row) + "\n")
    out.write("\n# summary\n")
    out.write("metric\tband\tMAE\tRMSE\tn\n")
    for name, s in (("RT60", summary.rt60), ("EDT", summary.edt)):
        out.write(f"{name}\tall\t{_fmt(s.mae)}\t{_fmt(s.rmse)}\t{s.n}\n")
        for b, label in enumerate(BAND_LABELS):
            out.write(f"{name}\t{label}\t{_fmt(s.band_mae[b])}\t{_fmt(s.band_rmse[b])}\t{int(s.band_n[b])}\n")


def parse_rt60_table(text: str) -> dict[str, BandMetrics]:
    """Read ground-truth decay times from tab- or comma-separated text.

    Accepts the report layout (``scene, band, RT60_est, RT60_gt, ...``) or a
    plain ``scene, band, RT60[, EDT]`` table. Missing bands stay invalid.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if "# summary" in lines:
        lines = lines[:lines.index("# summary")]
    if not lines:
        raise ParseError("empty RT60 table")
    sep = "\t" if "\t" in lines[0] else ","
    header = [h.strip() for h in lines[0].split(sep)]
    try:
        i_scene, i_band = header.index("scene"), header.index("band")
    except ValueError:
        raise ParseError("RT60 table needs 'scene' and 'band' columns") from None
    i_rt = next((header.index(c) for c in ("RT60_gt", "RT60") if c in header), None)
    i_edt = next((header.index(c) for c in ("EDT_gt", "EDT") if c in header), None)
    if i_rt is None:
        raise ParseError("RT60 table needs an 'RT60' or 'RT60_gt' column")
    values: dict[str, list] = {}
    for lineno, line in enumerate(lines[1:], 2):
        cols = [c.strip() for c in line.split(sep)]
        try:
            band = BAND_LABELS.index(f"{float(cols[i_band]):g}")
            rt = float(cols[i_rt])
            edt = float(cols[i_edt]) if i_edt is not None else math.nan
        except (ValueError, IndexError):
            raise ParseError(f"RT60 table line {lineno} is malformed") from None
        rows = values.setdefault(cols[i_scene], [np.full(N_BANDS, np.nan), np.full(N_BANDS, np.nan)])
        rows[0][band] = rt
        rows[1][band] = edt
    return {scene: BandMetrics.from_rt60(rt, edt) for scene, (rt, edt) in values.items()}
