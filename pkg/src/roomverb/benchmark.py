"""Synthetic multi-scene benchmark for comparing pipeline modes.

Each scene has a random shoebox, plausible materials per face and random
poses. The ground truth is the full-mode RIR rendered with the true
absorption, which differs from the observed materials by a random
per-face, per-band factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bands import N_BANDS
from .config import Settings
from .context import SceneType
from .geometry import Pose, ShoeboxModel
from .materials import MaterialClass, SurfaceMaterialProfile, face_absorptions, load_material_library
from .metrics import BandMetrics, error_summary, measure_bands
from .pipeline import PipelineMode, resolve, synthesize_scene
from .scenes import SceneDescriptor

FLOORS = (MaterialClass.CARPET, MaterialClass.WOOD_PANEL, MaterialClass.CONCRETE_BRICK)
CEILINGS = (MaterialClass.ACOUSTIC_TILE, MaterialClass.PLASTER_DRYWALL, MaterialClass.CONCRETE_BRICK)
WALLS = (MaterialClass.PLASTER_DRYWALL, MaterialClass.GLASS, MaterialClass.CONCRETE_BRICK,
         MaterialClass.HEAVY_CURTAIN, MaterialClass.WOOD_PANEL)
INDOOR = (SceneType.CONFERENCE_ROOM, SceneType.LIVING_ROOM, SceneType.BEDROOM, SceneType.OTHER)


@dataclass
class BenchmarkScene:
    scene: SceneDescriptor
    true_absorption: np.ndarray


def _random_point(rng, box: ShoeboxModel, margin: float) -> np.ndarray:
    return rng.uniform(box.min_corner + margin, box.max_corner - margin)


def _mixed_profile(rng, face: int, choices) -> SurfaceMaterialProfile:
    """One to three materials from ``choices`` with random area shares."""
    k = int(rng.integers(1, 4))
    picked = rng.choice(len(choices), size=min(k, len(choices)), replace=False)
    shares = rng.dirichlet(np.ones(len(picked)))
    return SurfaceMaterialProfile.from_entries(face, [(choices[i], float(w), 1.0) for i, w in zip(picked, shares)])


def make_scenes(n: int = 10, seed: int = 0, perturbation: float = 0.15, library=None) -> list:
    """Random benchmark scenes.

    ``perturbation`` is the standard deviation of the log-normal factor
    between observed and true absorption.
    """
    library = load_material_library() if library is None else library
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        box = ShoeboxModel.from_dimensions(rng.uniform([3.0, 3.0, 2.4], [12.0, 10.0, 4.5]))
        choices = [WALLS, WALLS, WALLS, WALLS, FLOORS, CEILINGS]
        profiles = [_mixed_profile(rng, f, c) for f, c in enumerate(choices)]
        observed = face_absorptions(profiles, library)
        true = np.clip(observed * np.exp(rng.normal(0.0, perturbation, (6, N_BANDS))), 0.01, 0.99)
        listener = _random_point(rng, box, 0.5)
        source = _random_point(rng, box, 0.5)
        while np.linalg.norm(source - listener) < 1.0:
            source = _random_point(rng, box, 0.5)
        scene = SceneDescriptor(box, profiles, INDOOR[rng.integers(len(INDOOR))], Pose(listener),
                                [("s0", Pose(source))], scene_id=f"bench{i:02d}")
        out.append(BenchmarkScene(scene, true))
    return out


def ground_truth(item: BenchmarkScene, settings: Settings, table=None, library=None) -> BandMetrics:
    setup = resolve(item.scene, PipelineMode.FULL, table, library)
    setup.absorption = item.true_absorption
    rirs = synthesize_scene(item.scene, PipelineMode.FULL, settings, setup=setup)
    return measure_bands(rirs.combined().samples[0], settings.sample_rate)


def estimate(item: BenchmarkScene, mode, settings: Settings, table=None, library=None) -> BandMetrics:
    rirs = synthesize_scene(item.scene, mode, settings, table, library)
    return measure_bands(rirs.combined().samples[0], settings.sample_rate)


def mode_errors(items, settings: Settings | None = None, modes=tuple(PipelineMode), table=None) -> dict:
    """Pooled RT60 MAE per mode against the perturbed-material ground truth."""
    settings = Settings() if settings is None else settings
    library = load_material_library()
    truth = {it.scene.scene_id: ground_truth(it, settings, table, library) for it in items}
    out = {}
    for mode in modes:
        est = {it.scene.scene_id: estimate(it, mode, settings, table, library) for it in items}
        out[PipelineMode.parse(mode)] = error_summary(est, truth).rt60.mae
    return out
