"""Synthetic photon-counting frame stacks from the biphoton model.

Pairs are drawn in the crystal plane (near field) or in transverse wavevector
space (far field), imaged onto a pixel grid, and mixed with stray light,
dark events, a deterministic gain and Gaussian readout noise.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import GaussianBiphotonModel
from .numerics import derive_stream


class StackMode(enum.IntEnum):
    DARK = 0
    NEAR = 1
    FAR = 2


class OpticsMode(str, enum.Enum):
    NEAR_FIELD = "near"
    FAR_FIELD = "far"


@dataclass(frozen=True)
class CameraConfig:
    width_px: int = 64
    height_px: int = 64
    pixel_pitch: float = 16e-6
    em_gain: float = 1000.0
    readout_noise_std: float = 10.0
    dark_count_mean: float = 0.0005
    quantum_efficiency: float = 0.5
    saturation: int = 65535
    bias: float = 0.0  # constant pedestal added before clamping

    def __post_init__(self):
        if self.width_px < 8 or self.height_px < 8:
            raise ValueError("sensor must be at least 8x8 pixels")
        if not self.pixel_pitch > 0:
            raise ValueError("pixel pitch must be positive")
        if not 0 <= self.quantum_efficiency <= 1:
            raise ValueError("quantum efficiency must lie in [0, 1]")
        if self.em_gain < 1:
            raise ValueError("EM gain must be >= 1")
        if self.readout_noise_std < 0 or self.dark_count_mean < 0:
            raise ValueError("noise parameters must be non-negative")
        if not 0 < self.saturation <= 65535:
            raise ValueError("saturation must fit in 16 bits")
        if not 0 <= self.bias < self.saturation:
            raise ValueError("bias must lie in [0, saturation)")


@dataclass(frozen=True)
class OpticsConfig:
    mode: OpticsMode = OpticsMode.NEAR_FIELD
    magnification: float = 1.0
    focal_length: float = 0.1
    spdc_wavelength: float = 810e-9

    def __post_init__(self):
        object.__setattr__(self, "mode", OpticsMode(self.mode))
        if self.mode is OpticsMode.NEAR_FIELD and not self.magnification > 0:
            raise ValueError("near-field magnification must be positive")
        if self.mode is OpticsMode.FAR_FIELD and not self.focal_length > 0:
            raise ValueError("far-field focal length must be positive")
        if not self.spdc_wavelength > 0:
            raise ValueError("SPDC wavelength must be positive")

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.spdc_wavelength

    @property
    def stack_mode(self) -> StackMode:
        return StackMode.NEAR if self.mode is OpticsMode.NEAR_FIELD else StackMode.FAR


@dataclass(frozen=True)
class SourceConfig:
    mean_pairs_per_frame: float = 8.0
    stray_mean_per_frame: float = 2.0

    def __post_init__(self):
        if self.mean_pairs_per_frame < 0 or self.stray_mean_per_frame < 0:
            raise ValueError("source rates must be non-negative")


@dataclass
class FrameStack:
    """Ordered frames of one acquisition; ``frames`` has shape (n, height, width)."""
    width: int
    height: int
    seed: int
    mode: StackMode
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.mode = StackMode(self.mode)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (self.height, self.width):
            raise ValueError(f"frames shape {self.frames.shape} does not match "
                             f"{self.height}x{self.width}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def __len__(self):
        return self.n_frames

    def __eq__(self, other):
        if not isinstance(other, FrameStack):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.seed == other.seed and self.mode == other.mode
                and np.array_equal(self.frames, other.frames))


def _draw_pairs(rng, n, width_sum, width_diff):
    # per axis: sum ~ N(0, width_sum), difference ~ N(0, width_diff)
    s = rng.normal(0.0, 1.0, size=(n, 2)) * width_sum
    d = rng.normal(0.0, 1.0, size=(n, 2)) * width_diff
    return (s + d) / 2, (s - d) / 2


def sample_pair_positions(model: GaussianBiphotonModel, rng: np.random.Generator,
                          size: Optional[int] = None):
    """Crystal-plane positions ``(idler, signal)``, each of shape (size, 2) in metres."""
    n = 1 if size is None else size
    sp = np.array([model.sigma_plus_x, model.sigma_plus_y])
    idler, signal = _draw_pairs(rng, n, sp, model.sigma_minus)
    if size is None:
        return idler[0], signal[0]
    return idler, signal


def sample_pair_wavevectors(model: GaussianBiphotonModel, rng: np.random.Generator,
                            size: Optional[int] = None):
    """Transverse wavevectors ``(idler, signal)`` in 1/m (equivalently hbar/m)."""
    n = 1 if size is None else size
    sp = np.array([model.sigma_plus_x, model.sigma_plus_y])
    idler, signal = _draw_pairs(rng, n, 1.0 / sp, 1.0 / model.sigma_minus)
    if size is None:
        return idler[0], signal[0]
    return idler, signal


def map_to_camera(optics: OpticsConfig, coordinate, kind: str):
    """Camera-plane position of a crystal position (near field) or wavevector (far field)."""
    if kind not in ("position", "wavevector"):
        raise ValueError(f"kind must be 'position' or 'wavevector', got {kind!r}")
    expected = "position" if optics.mode is OpticsMode.NEAR_FIELD else "wavevector"
    if kind != expected:
        raise ValueError(f"{optics.mode.value}-field optics expects a {expected}, got {kind}")
    coordinate = np.asarray(coordinate, dtype=float)
    if kind == "position":
        return optics.magnification * coordinate
    return optics.focal_length * coordinate / optics.wavenumber


def pixel_indices(camera: CameraConfig, xy):
    """(column, row, on_sensor) for camera-plane positions with the axis at the sensor centre."""
    col = np.floor(xy[..., 0] / camera.pixel_pitch + camera.width_px / 2).astype(np.int64)
    row = np.floor(xy[..., 1] / camera.pixel_pitch + camera.height_px / 2).astype(np.int64)
    ok = (col >= 0) & (col < camera.width_px) & (row >= 0) & (row < camera.height_px)
    return col, row, ok


def _pair_events(model, camera, optics, source, rng, hits):
    n_pairs = rng.poisson(source.mean_pairs_per_frame)
    if n_pairs:
        if optics.mode is OpticsMode.NEAR_FIELD:
            idler, signal = sample_pair_positions(model, rng, n_pairs)
            kind = "position"
        else:
            idler, signal = sample_pair_wavevectors(model, rng, n_pairs)
            kind = "wavevector"
        photons = np.concatenate([idler, signal])
        alive = rng.random(2 * n_pairs) < camera.quantum_efficiency
        col, row, ok = pixel_indices(camera, map_to_camera(optics, photons[alive], kind))
        hits.append(row[ok] * camera.width_px + col[ok])
    n_stray = rng.poisson(source.stray_mean_per_frame)
    if n_stray:
        hits.append(rng.integers(0, camera.width_px * camera.height_px, size=n_stray))


def _read_out(camera, rng, hits):
    npix = camera.width_px * camera.height_px
    # a Poisson count per pixel is generated as one Poisson total spread
    # uniformly over the pixels, which has the same joint distribution
    n_dark = rng.poisson(camera.dark_count_mean * npix)
    if n_dark:
        hits.append(rng.integers(0, npix, size=n_dark))
    if hits:
        events = np.bincount(np.concatenate(hits), minlength=npix)
    else:
        events = np.zeros(npix, dtype=np.int64)
    events = events.reshape(camera.height_px, camera.width_px)
    signal = camera.bias + camera.em_gain * events
    if camera.readout_noise_std > 0:
        signal = signal + camera.readout_noise_std * rng.standard_normal(events.shape)
    return np.clip(np.rint(signal), 0, camera.saturation).astype(np.uint16)


def render_frame(model: Optional[GaussianBiphotonModel], camera: CameraConfig,
                 optics: Optional[OpticsConfig], source: Optional[SourceConfig],
                 rng: np.random.Generator) -> np.ndarray:
    """One frame as a (height, width) uint16 grid.

    With ``source`` set to None the frame is a dark frame (shutter closed).
    """
    hits = []
    if source is not None:
        _pair_events(model, camera, optics, source, rng, hits)
    return _read_out(camera, rng, hits)


@dataclass(frozen=True)
class SimulatedSource:
    """Deterministic frame generator: frame ``i`` depends only on ``(seed, i)``."""
    camera: CameraConfig
    seed: int
    model: Optional[GaussianBiphotonModel] = None
    optics: Optional[OpticsConfig] = None
    source: Optional[SourceConfig] = None

    @property
    def mode(self) -> StackMode:
        return StackMode.DARK if self.source is None else self.optics.stack_mode

    def frames(self, start: int, stop: int) -> np.ndarray:
        out = np.empty((stop - start, self.camera.height_px, self.camera.width_px), dtype=np.uint16)
        for k, i in enumerate(range(start, stop)):
            out[k] = render_frame(self.model, self.camera, self.optics, self.source,
                                  derive_stream(self.seed, i))
        return out


def map_blocks(fn, blocks, workers: int = 1):
    """Apply ``fn`` to each block, in order, optionally in worker processes."""
    blocks = list(blocks)
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def block_ranges(n: int, block: int):
    return [(a, min(a + block, n)) for a in range(0, n, block)]


class _Render:
    def __init__(self, src):
        self.src = src

    def __call__(self, rng_range):
        return self.src.frames(*rng_range)


def _stack(src: SimulatedSource, n_frames: int, workers: int, block: int) -> FrameStack:
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    parts = map_blocks(_Render(src), block_ranges(n_frames, block), workers)
    return FrameStack(width=src.camera.width_px, height=src.camera.height_px,
                      seed=src.seed, mode=src.mode, frames=np.concatenate(parts))


def simulate_stack(model: GaussianBiphotonModel, camera: CameraConfig, optics: OpticsConfig,
                   source: SourceConfig, n_frames: int, seed: int, workers: int = 1,
                   block: int = 1024) -> FrameStack:
    """Render ``n_frames`` signal frames in memory.

    Large runs should stream through :class:`SimulatedSource` instead.
    """
    return _stack(SimulatedSource(camera, seed, model, optics, source), n_frames, workers, block)


def simulate_dark_stack(camera: CameraConfig, n_frames: int, seed: int, workers: int = 1,
                        block: int = 1024) -> FrameStack:
    return _stack(SimulatedSource(camera, seed), n_frames, workers, block)
