"""Offline replay of an observation stream through the adaptive pipeline.

Records are applied in time order at a fixed cadence on the audio
timeline. At each tick the room model is refined, and new RIRs are
submitted to the renderer unless the change is negligible: every band's
RT60 within 1% and every face within 2 cm of the last submission.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bands import BAND_LABELS
from .config import Settings
from .errors import InsufficientPlanes
from .geometry import estimate_shoebox, update_shoebox
from .materials import empty_profiles, load_material_library
from .pipeline import PipelineMode, direct_only_rir, resolve, synthesize_scene
from .renderer import LATE_SLOT, Renderer
from .scenes import ObservationStream, SceneDescriptor, segmentation_observations, fold_observations

log = logging.getLogger(__name__)

RT60_TOLERANCE = 0.01
GEOMETRY_TOLERANCE = 0.02


@dataclass
class SnapshotEntry:
    time: float
    rt60: np.ndarray
    dimensions: np.ndarray


@dataclass
class ReplayResult:
    audio: np.ndarray  # (channels, n)
    snapshots: list = field(default_factory=list)

    def log_text(self) -> str:
        lines = ["time\tdim_x\tdim_y\tdim_z\t" + "\t".join(f"RT60_{b}" for b in BAND_LABELS)]
        for s in self.snapshots:
            vals = [f"{s.time:.6f}"] + [f"{v:.6f}" for v in s.dimensions] + [f"{v:.6f}" for v in s.rt60]
            lines.append("\t".join(vals))
        return "\n".join(lines) + "\n"


class _RoomState:
    def __init__(self, stream: ObservationStream):
        self.stream = stream
        self.shoebox = None
        self.pending_planes: list = []
        self.profiles = empty_profiles()
        self.scene_type = stream.scene_type

    def apply(self, rec) -> None:
        if rec.kind == "planes":
            if self.shoebox is None:
                self.pending_planes.extend(rec.planes)
                try:
                    self.shoebox = estimate_shoebox(self.pending_planes, self.stream.listener.position)
                except InsufficientPlanes:
                    return
            else:
                ref = self.shoebox.to_local(self.stream.listener.position)
                self.shoebox = update_shoebox(self.shoebox, rec.planes, ref)
        elif rec.kind == "materials":
            self.profiles = fold_observations(self.profiles, rec.observations)
        elif rec.kind == "segmentation":
            self.profiles = fold_observations(self.profiles,
                                              segmentation_observations(rec.observations, self.shoebox, rec.time))
        elif rec.kind == "scene_type":
            self.scene_type = rec.scene_type

    def scene(self) -> SceneDescriptor | None:
        if self.shoebox is None:
            return None
        return SceneDescriptor(self.shoebox, self.profiles, self.scene_type, self.stream.listener,
                               self.stream.sources)


def replay(stream: ObservationStream, audio, settings: Settings, mode=PipelineMode.FULL,
           table=None, library=None) -> ReplayResult:
    """Render ``audio`` while the room model evolves along ``stream``.

    Parameters
    ----------
    audio : ndarray, shape (channels, n) or (n,)
        One channel per source, or a single channel fed to every source.

    Returns
    -------
    ReplayResult
        Rendered audio of length ``n + rir_length * sample_rate - 1`` and one
        snapshot per submitted RIR set.
    """
    library = load_material_library() if library is None else library
    x = np.atleast_2d(np.asarray(audio, dtype=float))
    ids = [sid for sid, _ in stream.sources]
    inputs = x if x.shape[0] == len(ids) else np.repeat(x[:1], len(ids), axis=0)

    fs = settings.sample_rate
    b = settings.block_size
    n_rir = int(round(settings.rir_length * fs))
    renderer = Renderer(fs, b, settings.channels, max_rir_seconds=settings.rir_length + 1.0)
    for sid, pose in stream.sources:
        dist = float(np.linalg.norm(pose.position - stream.listener.position))
        renderer.add_source(sid, direct_only_rir(settings, dist))

    state = _RoomState(stream)
    records = list(stream.records)
    next_record = 0
    last = None
    result = ReplayResult(np.zeros((settings.channels, 0)))

    n_out = x.shape[1] + n_rir - 1 if x.shape[1] else 0
    blocks = -(-n_out // b)
    padded = np.zeros((len(ids), blocks * b))
    padded[:, : inputs.shape[1]] = inputs
    out = np.zeros((settings.channels, blocks * b))
    period = max(1, int(round(fs / settings.cadence)))
    next_tick = 0
    for k in range(blocks):
        start = k * b
        if start >= next_tick:
            now = start / fs
            while next_record < len(records) and records[next_record].time <= now:
                state.apply(records[next_record])
                next_record += 1
            scene = state.scene()
            if scene is not None:
                setup = resolve(scene, mode, table, library)
                rt60, bounds = setup.rt60, setup.shoebox.bounds
                changed = last is None or (
                    np.any(np.abs(rt60 - last[0]) > RT60_TOLERANCE * last[0])
                    or np.any(np.abs(bounds - last[1]) > GEOMETRY_TOLERANCE))
                if changed:
                    rirs = synthesize_scene(scene, mode, settings, setup=setup)
                    for sid in ids:
                        renderer.submit_rir(sid, rirs.early[sid])
                    renderer.submit_rir(LATE_SLOT, rirs.late)
                    last = (rt60, bounds)
                    result.snapshots.append(SnapshotEntry(now, rt60, setup.shoebox.dimensions))
                    log.info("t=%.2f s: submitted RIR, RT60 %s", now, np.round(rt60, 3).tolist())
            next_tick = (start // period + 1) * period
        out[:, start:start + b] = renderer.render_block(padded[:, start:start + b])
    result.audio = out[:, :n_out]
    return result
