"""Room impulse response synthesis.

Early reflections come from an image-source model of the shoebox; the late
tail is spectrally shaped noise whose per-band decay follows Eyring's
reverberation time refined by the scene's acoustic parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import signal as sps

from .bands import N_BANDS, OCTAVE_CENTERS, band_edges
from .context import AcousticParameterVector
from .errors import InvalidGeometry, InvalidLength, SourceOutsideRoom
from .geometry import ShoeboxModel
from .metrics import band_filter, octave_filter_bank, octave_sos, rt60_from_decay, schroeder_decay

log = logging.getLogger(__name__)

SPEED_OF_SOUND = 343.0
MIN_DISTANCE = 0.1
RT60_MIN, RT60_MAX = 0.01, 10.0
ALPHA_MIN, ALPHA_MAX = 0.01, 0.99
MAX_ORDER_CAP = 4
DEFAULT_MAX_ORDER = 2
MIXING_TIME = 0.080
ONSET_GAP = 0.005
DECAY_CONSTANT = 6.91  # ln(1e6) / 2: amplitude envelope constant for a 60 dB energy decay
PEAK_LIMIT = 4.0
EARLY_FILTER_TAIL = 0.1  # seconds of band-filter ringing kept after the last early tap


def eyring_rt60(shoebox: ShoeboxModel, face_absorptions) -> np.ndarray:
    """Per-band RT60 from Eyring's formula.

    The mean absorption is area-weighted over the six faces and clamped to
    [0.01, 0.99]; the result is clamped to [0.01, 10] s.
    """
    alpha = np.asarray(face_absorptions, dtype=float).reshape(6, N_BANDS)
    volume = shoebox.volume
    if not volume > 0:
        raise InvalidGeometry("room volume must be positive")
    areas = shoebox.face_areas
    surface = areas.sum()
    mean_alpha = np.clip(areas @ alpha / surface, ALPHA_MIN, ALPHA_MAX)
    rt = 0.161 * volume / (-surface * np.log1p(-mean_alpha))
    return np.clip(rt, RT60_MIN, RT60_MAX)


def reflection_amplitudes(face_absorptions) -> np.ndarray:
    """Pressure reflection factor sqrt(1 - alpha) per face and band."""
    alpha = np.asarray(face_absorptions, dtype=float)
    return np.sqrt(np.clip(1.0 - alpha, 0.0, 1.0))


def refine_rt60(baseline, params: AcousticParameterVector) -> np.ndarray:
    """Scale the baseline by the time modulator and a brightness tilt.

    The tilt is ``1 + brightness * log2(f / 1 kHz) / 3.5``, so it is 1 at
    1 kHz and ``1 + brightness`` at 8 kHz.
    """
    tilt = 1.0 + params.reverb_brightness * np.log2(OCTAVE_CENTERS / 1000.0) / 3.5
    rt = np.asarray(baseline, dtype=float) * params.rt_modulator * tilt
    return np.clip(rt, RT60_MIN, RT60_MAX)


@dataclass(frozen=True)
class ImageSource:
    lattice_index: tuple
    order: int
    position: np.ndarray
    amplitude: np.ndarray


@dataclass
class ImageSources:
    """All image sources of one source, stored column-wise."""

    lattice: np.ndarray    # (n, 3) int
    positions: np.ndarray  # (n, 3) room-local metres
    amplitudes: np.ndarray  # (n, 8)

    @property
    def orders(self) -> np.ndarray:
        return np.abs(self.lattice).sum(axis=1)

    def __len__(self):
        return len(self.lattice)

    def __iter__(self):
        for idx, pos, amp, order in zip(self.lattice, self.positions, self.amplitudes, self.orders):
            yield ImageSource(tuple(int(v) for v in idx), int(order), pos, amp)


def lattice_indices(max_order: int) -> np.ndarray:
    """Nonzero integer 3-vectors with |i| + |j| + |k| <= max_order, ordered by order."""
    r = range(-max_order, max_order + 1)
    idx = [v for v in product(r, r, r) if 0 < abs(v[0]) + abs(v[1]) + abs(v[2]) <= max_order]
    idx.sort(key=lambda v: (abs(v[0]) + abs(v[1]) + abs(v[2]), v))
    return np.array(idx, dtype=int).reshape(-1, 3)


def compute_image_sources(shoebox: ShoeboxModel, source, max_order: int = DEFAULT_MAX_ORDER,
                          face_reflection=None) -> ImageSources:
    """Image sources up to ``max_order`` reflections.

    Parameters
    ----------
    shoebox : ShoeboxModel
    source : array_like
        Source position in room-local coordinates, strictly inside the box.
    max_order : int
        At most 4.
    face_reflection : array_like, shape (6, 8), optional
        Pressure reflection factor per face and band (1 if omitted).
    """
    if not 0 <= max_order <= MAX_ORDER_CAP:
        raise ValueError(f"max_order must be in 0..{MAX_ORDER_CAP}")
    src = np.asarray(source, dtype=float).reshape(3)
    lo, hi = shoebox.min_corner, shoebox.max_corner
    if not (np.all(src > lo) and np.all(src < hi)):
        raise SourceOutsideRoom(f"source {src.tolist()} is not strictly inside the shoebox")
    refl = np.ones((6, N_BANDS)) if face_reflection is None else np.asarray(face_reflection, dtype=float).reshape(6, N_BANDS)

    lattice = lattice_indices(max_order) if max_order > 0 else np.zeros((0, 3), dtype=int)
    dims = hi - lo
    rel = src - lo
    odd = (lattice % 2) != 0
    positions = lo + lattice * dims + np.where(odd, dims - rel, rel)

    # reflections off the max face of an axis: ceil(i/2) for i > 0, floor(|i|/2) for i < 0
    n = np.abs(lattice)
    hits_max = np.where(lattice > 0, (n + 1) // 2, n // 2)
    hits_min = n - hits_max
    log_refl = np.log(np.maximum(refl, 1e-300))
    log_amp = hits_min @ log_refl[0::2] + hits_max @ log_refl[1::2]
    amps = np.exp(log_amp)
    zero = (refl <= 0.0)
    if zero.any():
        dead = (hits_min @ zero[0::2].astype(int) + hits_max @ zero[1::2].astype(int)) > 0
        amps[dead] = 0.0
    return ImageSources(lattice, positions, amps)


@dataclass
class ReflectionTaps:
    delays: np.ndarray      # (n,) seconds
    amplitudes: np.ndarray  # (n, 8)
    directions: np.ndarray  # (n, 3) unit vectors listener -> image

    def __len__(self):
        return len(self.delays)

    @classmethod
    def empty(cls) -> "ReflectionTaps":
        return cls(np.zeros(0), np.zeros((0, N_BANDS)), np.zeros((0, 3)))


def synthesize_early(images: ImageSources, listener, reflection_gain: float, sample_rate: float,
                     speed_of_sound: float = SPEED_OF_SOUND, shoebox: ShoeboxModel | None = None) -> ReflectionTaps:
    """Turn image sources into delayed, attenuated reflection taps.

    With a ``shoebox`` given, a listener outside it gets no reflections.
    """
    p = np.asarray(listener, dtype=float).reshape(3)
    if shoebox is not None and not shoebox.contains(p):
        return ReflectionTaps.empty()
    if len(images) == 0:
        return ReflectionTaps.empty()
    vec = images.positions - p
    dist = np.linalg.norm(vec, axis=1)
    safe = np.maximum(dist, MIN_DISTANCE)
    amps = reflection_gain * images.amplitudes / safe[:, None]
    directions = vec / np.where(dist > 0, dist, 1.0)[:, None]
    return ReflectionTaps(dist / speed_of_sound, amps, directions)


@dataclass
class LateReverbSpec:
    rt60: np.ndarray
    gain: float
    onset: float
    seed: int = 0

    def __post_init__(self):
        self.rt60 = np.clip(np.asarray(self.rt60, dtype=float).reshape(N_BANDS), RT60_MIN, RT60_MAX)
        if self.gain < 0 or not math.isfinite(self.gain):
            raise ValueError("late reverb gain must be finite and non-negative")
        if self.onset < 0:
            raise ValueError("late reverb onset must be non-negative")


STFT_SEGMENT = 1024
STFT_OVERLAP = 768


def _decay_times_per_bin(freqs: np.ndarray, rt60: np.ndarray) -> np.ndarray:
    """Decay time per STFT bin, log-log interpolated between band centres."""
    lf = np.log2(np.maximum(freqs, 1e-3))
    return np.exp(np.interp(lf, np.log2(OCTAVE_CENTERS), np.log(rt60)))


class _SpectralTail:
    """Fixed noise realisation that can be re-enveloped cheaply."""

    def __init__(self, n: int, sample_rate: float, onset: float, seed: int):
        self.n = n
        self.sample_rate = sample_rate
        self.onset = onset
        noise = np.random.default_rng(seed).standard_normal(n)
        self.freqs, self.times, spec = sps.stft(noise, sample_rate, nperseg=STFT_SEGMENT,
                                                noverlap=STFT_OVERLAP, boundary="even")
        lo, hi = band_edges(OCTAVE_CENTERS[0])[0], band_edges(OCTAVE_CENTERS[-1])[1]
        spec[(self.freqs < lo) | (self.freqs > hi)] = 0.0
        self.spec = spec
        self.gate = np.arange(n) / sample_rate >= onset

    def render(self, rt60: np.ndarray) -> np.ndarray:
        tb = _decay_times_per_bin(self.freqs, rt60)
        age = np.maximum(self.times - self.onset, 0.0)
        env = np.exp(-DECAY_CONSTANT * age[None, :] / tb[:, None])
        _, y = sps.istft(self.spec * env, self.sample_rate, nperseg=STFT_SEGMENT,
                         noverlap=STFT_OVERLAP, boundary=True)
        y = np.pad(y, (0, max(0, self.n - y.size)))[: self.n]
        return np.where(self.gate, y, 0.0)


def _band_decay_times(y: np.ndarray, sample_rate: float) -> np.ndarray:
    bands = octave_filter_bank(y, sample_rate)
    out = np.full(N_BANDS, np.nan)
    for b in range(N_BANDS):
        try:
            fit = rt60_from_decay(schroeder_decay(bands[b], sample_rate))
        except Exception:
            continue
        if fit.valid:
            out[b] = fit.seconds
    return out


def synthesize_late(spec: LateReverbSpec, length: float, sample_rate: float,
                    equalize: bool = True, max_iterations: int = 8, tolerance: float = 0.01) -> np.ndarray:
    """Render the late reverberation tail.

    Gaussian noise is shaped in the short-time Fourier domain: every bin
    between the lowest and highest octave-band edges decays as
    ``exp(-6.91 (t - onset) / T(f))``, with ``T(f)`` interpolated log-log
    between the per-band targets. Output before ``onset`` is zero and the
    total energy is ``gain**2``.

    With ``equalize`` on, the per-band decay times fed to the shaper are
    corrected iteratively until the octave-band T30 measured on the output
    matches ``spec.rt60`` (within ``tolerance``, relative), compensating
    overlap between neighbouring measurement bands.
    """
    n = int(round(length * sample_rate))
    if length < spec.onset or n <= 0:
        raise InvalidLength(f"length {length} s must be positive and not before onset {spec.onset} s")
    if spec.gain == 0.0:
        return np.zeros(n)
    octave_sos(float(sample_rate))
    tail = _SpectralTail(n, sample_rate, spec.onset, spec.seed)
    target = spec.rt60
    x = np.log(target)
    y = tail.render(target)
    if equalize:
        best, best_err, prev = y, math.inf, None
        for _ in range(max_iterations):
            measured = _band_decay_times(y, sample_rate)
            ok = np.isfinite(measured)
            r = np.where(ok, np.log(np.where(ok, measured, 1.0)) - np.log(target), 0.0)
            err = float(np.max(np.abs(r)))
            if err < best_err:
                best, best_err = y, err
            if err < math.log1p(tolerance):
                break
            slope = np.ones(N_BANDS)
            if prev is not None:
                dx, dr = x - prev[0], r - prev[1]
                moved = np.abs(dx) > 1e-6
                slope[moved] = np.clip(dr[moved] / dx[moved], 0.3, 3.0)
            prev = (x.copy(), r.copy())
            x = np.clip(x - r / slope, math.log(RT60_MIN), math.log(RT60_MAX))
            y = tail.render(np.exp(x))
        y = best
    energy = float(y @ y)
    if energy <= 0:
        return np.zeros(n)
    return y * (spec.gain / math.sqrt(energy))


@dataclass
class RoomImpulseResponse:
    """Sampled RIR, shape (channels, n), with component boundaries.

    ``direct_index`` is the direct-path sample, ``early_end`` the last
    early-reflection sample and ``late_start`` the late-tail onset sample.
    """

    samples: np.ndarray
    sample_rate: int
    direct_index: int = 0
    early_end: int = 0
    late_start: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[0] not in (1, 2):
            raise ValueError("RIR samples must have shape (channels, n) with 1 or 2 channels")
        if not np.all(np.isfinite(s)):
            raise ValueError("RIR contains non-finite samples")
        if s.size and np.max(np.abs(s)) > PEAK_LIMIT * (1 + 1e-9):
            raise ValueError(f"RIR peak exceeds {PEAK_LIMIT}")
        self.samples = s
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self):
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def late_onset(direct_delay: float, taps: ReflectionTaps) -> float:
    """Late tail start: 80 ms after the direct sound, and after the last early tap."""
    last = float(taps.delays.max()) if len(taps) else 0.0
    return max(direct_delay + MIXING_TIME, last + ONSET_GAP)


def render_early(taps: ReflectionTaps, n: int, sample_rate: float) -> np.ndarray:
    """Place each tap at its rounded delay, band by band through the octave filters."""
    out = np.zeros(n)
    if len(taps) == 0 or n == 0:
        return out
    idx = np.rint(taps.delays * sample_rate).astype(int)
    keep = idx < n
    idx, amps = idx[keep], taps.amplitudes[keep]
    if idx.size == 0:
        return out
    span = min(n, int(idx.max()) + 1 + int(EARLY_FILTER_TAIL * sample_rate))
    for b in range(N_BANDS):
        train = np.zeros(span)
        np.add.at(train, idx, amps[:, b])
        out[:span] += band_filter(train, sample_rate, b)
    return out


def compose_rir(direct_delay: float, direct_amplitude: float, taps: ReflectionTaps, late,
                sample_rate: int, channels: int = 1, length: int | None = None) -> RoomImpulseResponse:
    """Sum direct path, early taps and late tail into one RIR.

    Parameters
    ----------
    direct_delay, direct_amplitude : float
        Direct-path arrival (seconds) and amplitude. A zero amplitude leaves
        the direct path out.
    taps : ReflectionTaps
    late : ndarray of shape (n,) or (channels, n), or None
        Late tail on the RIR time axis (zeros before its onset). Stereo
        output expects one independently seeded tail per channel.
    length : int, optional
        RIR length in samples. Defaults to the late buffer length, or to
        just past the last early tap when there is no late part.
    """
    direct_idx = int(round(direct_delay * sample_rate))
    tap_idx = np.rint(taps.delays * sample_rate).astype(int) if len(taps) else np.zeros(0, int)
    early_end = int(tap_idx.max()) if tap_idx.size else direct_idx

    if late is not None:
        late = np.asarray(late, dtype=float)
        if late.ndim == 1:
            late = np.tile(late, (channels, 1))
        if late.shape[0] != channels:
            raise ValueError("late tail channel count does not match")
    if length is None:
        if late is not None:
            length = late.shape[1]
        else:
            tail = int(EARLY_FILTER_TAIL * sample_rate) if len(taps) else 1
            length = max(direct_idx, early_end) + tail
    out = np.zeros((channels, length))
    if direct_amplitude != 0.0 and direct_idx < length:
        out[:, direct_idx] += direct_amplitude
    out += render_early(taps, length, sample_rate)[None, :]

    late_start = early_end
    if late is not None:
        m = min(length, late.shape[1])
        out[:, :m] += late[:, :m]
        nz = np.flatnonzero(np.any(late != 0.0, axis=0))
        late_start = int(nz[0]) if nz.size else length

    peak = float(np.max(np.abs(out))) if out.size else 0.0
    if peak > PEAK_LIMIT:
        log.warning("RIR peak %.2f above %.1f, scaling down", peak, PEAK_LIMIT)
        out *= PEAK_LIMIT / peak
    return RoomImpulseResponse(out, sample_rate, direct_idx, early_end, late_start)
