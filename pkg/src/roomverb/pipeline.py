"""Scene to RIR: mode resolution, synthesis and the calibration forward models.

Modes
-----
non_adaptive
    Fixed preset: 6 x 5 x 3 m box, flat 0.8 s RT60, reverb gain 0.15,
    reflection gain 0.8, listener at the box centre and the source 1.5 m
    away along x. Independent of the scene.
geo_only
    Scene geometry with the generic ``other`` material on every face and
    the ``other`` parameter vector.
mat_only
    Observed materials in a canonical 5 x 4 x 3 m room, ``other`` parameters.
ae_only
    Canonical room with default reflective surfaces and the parameters of
    the scene's type.
full
    Scene geometry, observed materials and scene-type parameters.

The canonical rooms keep each pose at the same relative position inside
the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .bands import N_BANDS
from .config import Settings
from .context import DEFAULT_TABLE, AcousticParameterVector, SceneType, params_for_scene
from .errors import ParseError
from .geometry import ShoeboxModel
from .materials import MaterialClass, face_absorptions, load_material_library
from .metrics import DecayCurve, octave_sos, rt60_from_decay
from .scenes import SceneDescriptor
from .synthesis import (DECAY_CONSTANT, MIN_DISTANCE, LateReverbSpec, ReflectionTaps, RoomImpulseResponse,
                        compose_rir, compute_image_sources, eyring_rt60, late_onset, reflection_amplitudes,
                        refine_rt60, synthesize_early, synthesize_late)

PRESET_DIMENSIONS = (6.0, 5.0, 3.0)
PRESET_RT60 = 0.8
PRESET_PARAMS = AcousticParameterVector(0.15, 1.0, 0.0, 0.8)
PRESET_SOURCE_OFFSET = (1.5, 0.0, 0.0)
CANONICAL_DIMENSIONS = (5.0, 4.0, 3.0)
CHANNEL_SEED_STRIDE = 1_000_003


class PipelineMode(str, Enum):
    NON_ADAPTIVE = "non_adaptive"
    GEO_ONLY = "geo_only"
    MAT_ONLY = "mat_only"
    AE_ONLY = "ae_only"
    FULL = "full"

    @classmethod
    def parse(cls, value) -> "PipelineMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ParseError(f"unknown mode {value!r}") from None


def uniform_alpha_for_rt60(shoebox: ShoeboxModel, rt60: float) -> float:
    """Uniform absorption giving ``rt60`` under Eyring's formula."""
    return -math.expm1(-0.161 * shoebox.volume / (shoebox.surface_area * rt60))


@dataclass
class AcousticSetup:
    """Everything synthesis needs, in room-local coordinates."""

    shoebox: ShoeboxModel
    absorption: np.ndarray  # (6, 8)
    params: AcousticParameterVector
    listener: np.ndarray
    sources: list  # [(id, local position)]

    @property
    def rt60(self) -> np.ndarray:
        return refine_rt60(eyring_rt60(self.shoebox, self.absorption), self.params)


def _rescale(point, src: ShoeboxModel, dst: ShoeboxModel) -> np.ndarray:
    rel = (np.asarray(point) - src.min_corner) / src.dimensions
    return dst.min_corner + np.clip(rel, 0.0, 1.0) * dst.dimensions


def resolve(scene: SceneDescriptor, mode, table=None, library=None) -> AcousticSetup:
    """Pick geometry, absorption and parameters for ``mode``."""
    mode = PipelineMode.parse(mode)
    table = DEFAULT_TABLE if table is None else table
    library = load_material_library() if library is None else library
    listener = scene.local_listener()
    sources = scene.local_sources()

    if mode is PipelineMode.NON_ADAPTIVE:
        box = ShoeboxModel.from_dimensions(PRESET_DIMENSIONS)
        alpha = np.full((6, N_BANDS), uniform_alpha_for_rt60(box, PRESET_RT60))
        centre = box.center
        return AcousticSetup(box, alpha, PRESET_PARAMS, centre,
                             [(sid, centre + np.asarray(PRESET_SOURCE_OFFSET)) for sid, _ in sources])

    if mode in (PipelineMode.GEO_ONLY, PipelineMode.FULL):
        box = scene.shoebox
    else:
        box = ShoeboxModel.from_dimensions(CANONICAL_DIMENSIONS)
        listener = _rescale(listener, scene.shoebox, box)
        sources = [(sid, _rescale(p, scene.shoebox, box)) for sid, p in sources]

    if mode is PipelineMode.GEO_ONLY:
        alpha = np.tile(library[MaterialClass.OTHER], (6, 1))
    elif mode is PipelineMode.AE_ONLY:
        alpha = np.tile(library[MaterialClass.DEFAULT_REFLECTIVE], (6, 1))
    else:
        alpha = face_absorptions(scene.profiles, library)

    scene_type = scene.scene_type if mode in (PipelineMode.AE_ONLY, PipelineMode.FULL) else SceneType.OTHER
    return AcousticSetup(box, alpha, params_for_scene(scene_type, table), listener, sources)


@dataclass
class SourcePaths:
    """Direct path and early reflections of one source."""

    direct_delay: float
    direct_amplitude: float
    taps: ReflectionTaps


def source_paths(setup: AcousticSetup, source, settings: Settings, reflection_gain: float | None = None) -> SourcePaths:
    c = settings.speed_of_sound
    box = setup.shoebox
    dist = float(np.linalg.norm(np.asarray(source) - setup.listener))
    gain = setup.params.reflection_gain if reflection_gain is None else reflection_gain
    inside = np.all(source > box.min_corner) and np.all(source < box.max_corner)
    if inside:
        images = compute_image_sources(box, source, settings.max_order, reflection_amplitudes(setup.absorption))
        taps = synthesize_early(images, setup.listener, gain, settings.sample_rate, c, box)
    else:
        taps = ReflectionTaps.empty()
    return SourcePaths(dist / c, 1.0 / max(dist, MIN_DISTANCE), taps)


@dataclass
class SceneRIRs:
    """Per-source direct+early RIRs plus the shared late RIR."""

    early: dict
    late: RoomImpulseResponse
    rt60: np.ndarray
    setup: AcousticSetup

    def combined(self, source_id=None) -> RoomImpulseResponse:
        """Full RIR of one source (the first by default)."""
        sid = next(iter(self.early)) if source_id is None else source_id
        e = self.early[sid]
        n = max(len(e), len(self.late))
        out = np.zeros((self.late.channels, n))
        out[:, : len(e)] += e.samples
        out[:, : len(self.late)] += self.late.samples
        return RoomImpulseResponse(out, e.sample_rate, e.direct_index, e.early_end, self.late.late_start)


def synthesize_scene(scene: SceneDescriptor, mode, settings: Settings, table=None, library=None,
                     setup: AcousticSetup | None = None) -> SceneRIRs:
    """Synthesize the RIR set of a scene."""
    setup = resolve(scene, mode, table, library) if setup is None else setup
    fs = settings.sample_rate
    octave_sos(float(fs))
    channels = settings.channels
    n = int(round(settings.rir_length * fs))
    rt60 = setup.rt60

    early, onsets = {}, []
    for sid, pos in setup.sources:
        paths = source_paths(setup, pos, settings)
        onsets.append(late_onset(paths.direct_delay, paths.taps))
        early[sid] = compose_rir(paths.direct_delay, paths.direct_amplitude, paths.taps, None, fs, channels)
    onset = min(onsets)
    if onset >= settings.rir_length:
        raise ParseError(f"rir_length {settings.rir_length} s ends before the late onset {onset:.3f} s")
    tails = np.stack([
        synthesize_late(LateReverbSpec(rt60, setup.params.reverb_gain, onset, settings.seed + CHANNEL_SEED_STRIDE * ch),
                        n / fs, fs, equalize=settings.equalize_decay)
        for ch in range(channels)])
    late = compose_rir(0.0, 0.0, ReflectionTaps.empty(), tails, fs, channels, n)
    late.direct_index = late.early_end = 0
    return SceneRIRs(early, late, rt60, setup)


def direct_only_rir(settings: Settings, distance: float = 1.0) -> RoomImpulseResponse:
    """Cold-start RIR: the direct path at ``distance`` and nothing else."""
    delay = distance / settings.speed_of_sound
    return compose_rir(delay, 1.0 / max(distance, MIN_DISTANCE), ReflectionTaps.empty(), None,
                       settings.sample_rate, settings.channels)


# calibration forward models

@lru_cache(maxsize=8)
def band_energy_fractions(sample_rate: int) -> np.ndarray:
    """Share of a unit impulse's energy falling in each analysis band."""
    from .metrics import octave_filter_bank
    n = int(sample_rate)
    x = np.zeros(n)
    x[n // 2] = 1.0
    bands = octave_filter_bank(x, sample_rate)
    return (bands ** 2).sum(axis=1)


class DecayModelSynthesizer:
    """Predicts the RT60 that octave-band T30 analysis would report.

    Instead of rendering an RIR, the backward-integrated energy of each band
    is built analytically from the direct path, the early taps and an
    exponential late tail with the refined decay times, sampled on a 1 ms
    grid and fitted like a measured decay curve. Per-scene geometry is
    cached, so one call costs well under a millisecond.
    """

    def __init__(self, settings: Settings | None = None, library=None, grid_step: float = 1e-3):
        self.settings = Settings() if settings is None else settings
        self.library = load_material_library() if library is None else library
        self.step = grid_step
        self._cache: dict = {}

    def _prepare(self, scene: SceneDescriptor):
        key = id(scene)
        if key not in self._cache:
            s = self.settings
            setup = resolve(scene, PipelineMode.FULL, DEFAULT_TABLE, self.library)
            e_band = band_energy_fractions(s.sample_rate)
            baseline = eyring_rt60(setup.shoebox, setup.absorption)
            _, pos = setup.sources[0]
            paths = source_paths(setup, pos, s, reflection_gain=1.0)
            t = np.arange(0.0, s.rir_length, self.step)
            # energy arriving at or after each grid time, per band
            events = np.concatenate([[paths.direct_delay], paths.taps.delays])
            direct = np.full((1, N_BANDS), paths.direct_amplitude ** 2)
            early = paths.taps.amplitudes ** 2
            after = (events[:, None] >= t[None, :]).astype(float)
            direct_tail = (direct.T @ after[:1]) * e_band[:, None]
            early_tail = (early.T @ after[1:]) * e_band[:, None] if len(early) else np.zeros((N_BANDS, t.size))
            onset = late_onset(paths.direct_delay, paths.taps)
            self._cache[key] = (scene, baseline, e_band, t, direct_tail, early_tail, onset)
        return self._cache[key][1:]

    def __call__(self, scene: SceneDescriptor, params: AcousticParameterVector) -> np.ndarray:
        baseline, e_band, t, direct_tail, early_tail, onset = self._prepare(scene)
        rt = refine_rt60(baseline, params)
        length = self.settings.rir_length
        tau = rt / (2.0 * DECAY_CONSTANT)  # energy time constant
        share = e_band * rt
        late_energy = params.reverb_gain ** 2 * share / share.sum()
        span = length - onset
        norm = -np.expm1(-span / tau)
        age = np.clip(t - onset, 0.0, span)
        late_tail = late_energy[:, None] * (np.exp(-age[None, :] / tau[:, None]) - np.exp(-span / tau)[:, None]) / norm[:, None]
        total = direct_tail + params.reflection_gain ** 2 * early_tail + late_tail
        out = np.full(N_BANDS, np.nan)
        for b in range(N_BANDS):
            e = total[b]
            if e[0] <= 0:
                continue
            with np.errstate(divide="ignore"):
                level = 10.0 * np.log10(e / e[0])
            fit = rt60_from_decay(DecayCurve(t, level))
            if fit.valid:
                out[b] = fit.seconds
        return out


class MeasuredSynthesizer:
    """Synthesizes the full-mode RIR and measures its octave-band T30. Slow but literal."""

    def __init__(self, settings: Settings | None = None, library=None):
        self.settings = Settings() if settings is None else settings
        self.library = load_material_library() if library is None else library

    def __call__(self, scene: SceneDescriptor, params: AcousticParameterVector) -> np.ndarray:
        from .metrics import measure_bands
        setup = resolve(scene, PipelineMode.FULL, DEFAULT_TABLE, self.library)
        setup.params = params
        rirs = synthesize_scene(scene, PipelineMode.FULL, self.settings, setup=setup)
        m = measure_bands(rirs.combined().samples[0], self.settings.sample_rate)
        return np.where(m.rt60_valid, m.rt60, np.nan)
