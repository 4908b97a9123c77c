"""Block-based partitioned convolution with crossfaded RIR updates.

Each source is convolved with its own direct+early RIR; the sum of all
source inputs feeds one shared late-reverberation RIR. Convolution uses
uniformly partitioned overlap-save with partitions equal to the block size
and a frequency-domain delay line.

The control context hands new RIRs to the audio context through one
single-slot exchange per RIR slot. Spectra are prepared (and any memory
allocated) by the control context; the audio context only swaps references
at block boundaries.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import BlockSizeMismatch, RateMismatch
from .synthesis import RoomImpulseResponse

LATE_SLOT = "late"
DEFAULT_BLOCK = 256
DEFAULT_MAX_RIR_SECONDS = 10.0


def _check_block_size(block_size: int) -> int:
    b = int(block_size)
    if b < 64 or b > 4096 or b & (b - 1):
        raise BlockSizeMismatch(f"block size {block_size} must be a power of two in [64, 4096]")
    return b


@dataclass(frozen=True)
class PartitionedKernel:
    """Spectra of the uniform partitions of one RIR, shape (channels, partitions, bins)."""

    spectra: np.ndarray
    length: int

    @classmethod
    def from_samples(cls, samples, block_size: int, max_partitions: int | None = None) -> "PartitionedKernel":
        h = np.atleast_2d(np.asarray(samples, dtype=float))
        n = h.shape[1]
        parts = max(1, -(-n // block_size))
        if max_partitions is not None and parts > max_partitions:
            raise ValueError(f"RIR of {n} samples exceeds the engine capacity")
        padded = np.zeros((h.shape[0], parts, 2 * block_size))
        flat = np.zeros((h.shape[0], parts * block_size))
        flat[:, :n] = h
        padded[:, :, :block_size] = flat.reshape(h.shape[0], parts, block_size)
        return cls(np.fft.rfft(padded, axis=-1), n)

    @property
    def partitions(self) -> int:
        return self.spectra.shape[1]


class _ConvolutionSlot:
    """One RIR slot: current kernel, pending kernel and crossfade state."""

    def __init__(self, kernel: PartitionedKernel | None):
        self.current = kernel
        self.pending: deque = deque(maxlen=1)  # append/popleft are atomic in CPython
        self.fading_from: PartitionedKernel | None = None

    def take_update(self):
        try:
            new = self.pending.popleft()
        except IndexError:
            return False
        self.fading_from = self.current
        self.current = new
        return True


def _apply(kernel: PartitionedKernel | None, fdl: np.ndarray, p: int, channels: int, block: int) -> np.ndarray:
    """Output block of one kernel from the frequency-domain delay line."""
    if kernel is None:
        return np.zeros((channels, block))
    k = kernel.partitions
    window = fdl[p:p + k]  # newest spectrum first
    spec = np.einsum("cpk,pk->ck", kernel.spectra, window)
    return np.fft.irfft(spec, axis=-1)[:, block:]


class _InputLine:
    """Input history for overlap-save: last two blocks and the spectrum delay line."""

    def __init__(self, block: int, capacity: int):
        self.block = block
        self.capacity = capacity
        self.frame = np.zeros(2 * block)
        # every spectrum is written twice so that buf[p:p + capacity] is contiguous
        self.buf = np.zeros((2 * capacity, block + 1), dtype=np.complex128)
        self.p = 0

    def push(self, x: np.ndarray) -> int:
        b = self.block
        self.frame[:b] = self.frame[b:]
        self.frame[b:] = x
        self.p = (self.p - 1) % self.capacity
        spec = np.fft.rfft(self.frame)
        self.buf[self.p] = spec
        self.buf[self.p + self.capacity] = spec
        return self.p


class Renderer:
    """Real-time convolution engine for several sources and a shared late RIR.

    Parameters
    ----------
    sample_rate : int
    block_size : int
        Power of two in [64, 4096].
    channels : int
        Output channels, 1 or 2. Mono RIRs are duplicated on stereo engines.
    max_rir_seconds : float
        Capacity of every delay line; longer RIRs are rejected at submission.
    master_gain : float
    """

    def __init__(self, sample_rate: int = 48000, block_size: int = DEFAULT_BLOCK, channels: int = 1,
                 max_rir_seconds: float = DEFAULT_MAX_RIR_SECONDS, master_gain: float = 1.0):
        self.sample_rate = int(sample_rate)
        self.block_size = _check_block_size(block_size)
        if channels not in (1, 2):
            raise ValueError("channels must be 1 or 2")
        self.channels = channels
        self.master_gain = float(master_gain)
        self.capacity = max(1, -(-int(round(max_rir_seconds * sample_rate)) // self.block_size))
        self._sources: dict = {}
        self._order: list = []
        self._late = _ConvolutionSlot(None)
        self._late_line = _InputLine(self.block_size, self.capacity)
        b = self.block_size
        self._fade_in = (np.arange(b) + 1.0) / b
        self._fade_out = 1.0 - self._fade_in

    # control context

    def add_source(self, source_id, rir: RoomImpulseResponse | None = None) -> None:
        """Register a source, optionally with an initial direct+early RIR."""
        if source_id == LATE_SLOT or source_id in self._sources:
            raise ValueError(f"source id {source_id!r} is reserved or already registered")
        kernel = self._prepare(rir) if rir is not None else None
        self._sources[source_id] = (_ConvolutionSlot(kernel), _InputLine(self.block_size, self.capacity))
        self._order.append(source_id)

    @property
    def source_ids(self) -> tuple:
        return tuple(self._order)

    def _prepare(self, rir: RoomImpulseResponse) -> PartitionedKernel:
        if int(rir.sample_rate) != self.sample_rate:
            raise RateMismatch(f"RIR rate {rir.sample_rate} Hz differs from engine rate {self.sample_rate} Hz")
        samples = rir.samples
        if samples.shape[0] != self.channels:
            samples = np.tile(samples[:1], (self.channels, 1))
        return PartitionedKernel.from_samples(samples, self.block_size, self.capacity)

    def submit_rir(self, slot, rir: RoomImpulseResponse) -> bool:
        """Queue an RIR for a source id or for ``LATE_SLOT``.

        It takes effect at the next block boundary with a one-block linear
        crossfade. A still-pending RIR for the same slot is replaced.
        """
        kernel = self._prepare(rir)
        target = self._late if slot == LATE_SLOT else self._sources[slot][0]
        target.pending.append(kernel)
        return True

    def install_rir(self, slot, rir: RoomImpulseResponse) -> None:
        """Replace a slot's RIR at once, without crossfade.

        Only for set-up while no block is being processed.
        """
        kernel = self._prepare(rir)
        target = self._late if slot == LATE_SLOT else self._sources[slot][0]
        target.pending.clear()
        target.current, target.fading_from = kernel, None

    # audio context

    def render_block(self, inputs) -> np.ndarray:
        """Process one block.

        Parameters
        ----------
        inputs : mapping or sequence
            One block of ``block_size`` samples per registered source, keyed by
            source id or in registration order.

        Returns
        -------
        ndarray, shape (channels, block_size)
        """
        b = self.block_size
        if isinstance(inputs, dict):
            blocks = [inputs[s] for s in self._order]
        else:
            blocks = list(inputs)
        if len(blocks) != len(self._order):
            raise BlockSizeMismatch(f"expected {len(self._order)} input blocks, got {len(blocks)}")
        out = np.zeros((self.channels, b))
        mix = np.zeros(b)
        for sid, x in zip(self._order, blocks):
            x = np.asarray(x, dtype=float)
            if x.shape != (b,):
                raise BlockSizeMismatch(f"input block for {sid!r} has shape {x.shape}, expected ({b},)")
            slot, line = self._sources[sid]
            mix += x
            p = line.push(x)
            out += self._slot_output(slot, line, p)
        p = self._late_line.push(mix)
        out += self._slot_output(self._late, self._late_line, p)
        if self.master_gain != 1.0:
            out *= self.master_gain
        return out

    def _slot_output(self, slot: _ConvolutionSlot, line: _InputLine, p: int) -> np.ndarray:
        slot.take_update()
        y = _apply(slot.current, line.buf, p, self.channels, self.block_size)
        if slot.fading_from is not None:
            y_old = _apply(slot.fading_from, line.buf, p, self.channels, self.block_size)
            y = self._fade_out * y_old + self._fade_in * y
            slot.fading_from = None
        return y


def render_offline(renderer: Renderer, inputs, tail: int = 0) -> np.ndarray:
    """Run whole signals through ``renderer`` block by block.

    Parameters
    ----------
    inputs : sequence of 1-D arrays
        One signal per registered source (shorter ones are zero-padded).
    tail : int
        Extra output samples beyond the longest input, e.g. RIR length - 1.

    Returns
    -------
    ndarray, shape (channels, n_in + tail)
    """
    signals = [np.asarray(x, dtype=float).reshape(-1) for x in inputs]
    n = max((s.size for s in signals), default=0) + int(tail)
    b = renderer.block_size
    blocks = -(-n // b)
    padded = np.zeros((len(signals), blocks * b))
    for i, s in enumerate(signals):
        padded[i, : s.size] = s
    out = np.zeros((renderer.channels, blocks * b))
    for k in range(blocks):
        out[:, k * b:(k + 1) * b] = renderer.render_block(padded[:, k * b:(k + 1) * b])
    return out[:, :n]
