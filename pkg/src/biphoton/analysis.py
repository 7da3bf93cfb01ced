"""Recovering correlation widths from photon-counting frame stacks.

The chain is: dark calibration -> per-pixel thresholding -> marginal sums
along one axis -> joint detection probability (JDP) from same-frame minus
consecutive-frame outer products -> 1-D profile -> double-Gaussian fit ->
combined width -> physical units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .model import EntanglementReport, PumpBeam, asymmetry_factor, epr_entangled
from .numerics import FitError, FitOutcome, FitProblem, least_squares_fit
from .simulator import FrameStack, block_ranges, map_blocks

AXES = ("x", "y")


# ---------------------------------------------------------------- dark frames

@dataclass
class DarkCalibration:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std grids differ in shape")
        if np.any(self.std < 0):
            raise ValueError("negative standard deviation")


@dataclass
class DarkSums:
    """Exact per-pixel first and second moments; merge with ``+``."""
    n: int
    s1: np.ndarray
    s2: np.ndarray

    @classmethod
    def of(cls, frames: np.ndarray) -> "DarkSums":
        f = np.asarray(frames, dtype=np.int64)
        return cls(f.shape[0], f.sum(axis=0), (f * f).sum(axis=0))

    def __add__(self, other: "DarkSums") -> "DarkSums":
        return DarkSums(self.n + other.n, self.s1 + other.s1, self.s2 + other.s2)

    def finalize(self) -> DarkCalibration:
        if self.n < 2:
            raise ValueError(f"dark calibration needs at least 2 frames, got {self.n}")
        n = self.n
        s1 = self.s1.astype(object)
        # integer numerator: no cancellation error
        num = (n * self.s2.astype(object) - s1 * s1).astype(float)
        var = num / (n * (n - 1))
        return DarkCalibration(mean=self.s1 / n, std=np.sqrt(np.maximum(var, 0.0)))


def calibrate_dark(dark: Union[FrameStack, np.ndarray]) -> DarkCalibration:
    """Per-pixel mean and sample standard deviation (N-1) of a dark stack."""
    frames = dark.frames if isinstance(dark, FrameStack) else np.asarray(dark)
    if frames.shape[0] < 2:
        raise ValueError(f"dark calibration needs at least 2 frames, got {frames.shape[0]}")
    total = None
    for a, b in block_ranges(frames.shape[0], 4096):
        part = DarkSums.of(frames[a:b])
        total = part if total is None else total + part
    return total.finalize()


class _DarkBlock:
    def __init__(self, source):
        self.source = source

    def __call__(self, r):
        return DarkSums.of(self.source.frames(*r))


def calibrate_dark_source(source, n_frames: int, block: int = 2048, workers: int = 1) -> DarkCalibration:
    """Streaming :func:`calibrate_dark` over a frame source."""
    if n_frames < 2:
        raise ValueError(f"dark calibration needs at least 2 frames, got {n_frames}")
    parts = map_blocks(_DarkBlock(source), block_ranges(n_frames, block), workers)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total.finalize()


def threshold_frame(frame, calib: DarkCalibration):
    """Zero every pixel whose dark-subtracted value is below the dark std.

    Pixels that pass keep their raw value. Works on a single frame or a
    stack of frames; the output keeps the input dtype.
    """
    frame = np.asarray(frame)
    if frame.shape[-2:] != calib.mean.shape:
        raise ValueError(f"frame shape {frame.shape} does not match calibration {calib.mean.shape}")
    keep = (frame - calib.mean) >= calib.std
    return np.where(keep, frame, 0).astype(frame.dtype, copy=False)


def marginalize(frame, axis: str):
    """Collapse a frame onto one axis: ``x`` sums over rows, ``y`` over columns."""
    frame = np.asarray(frame)
    if axis == "x":
        return frame.sum(axis=-2)
    if axis == "y":
        return frame.sum(axis=-1)
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


# ---------------------------------------------------------------- JDP

@dataclass
class JdpMatrix:
    """Integer accumulators of the JDP estimator along one axis.

    ``cross_frame_sum`` holds ``sum_l outer(m_l, m_{l+1})`` unsymmetrized.
    The ``pixel_*`` vectors hold, per marginal bin, the products of each
    pixel with itself (same frame) and with the same pixel of the next
    frame; they estimate the self-correlation that every photon leaves on
    the main diagonal.
    """
    axis: str
    same_frame_sum: np.ndarray
    cross_frame_sum: np.ndarray
    frames_processed: int = 0
    pairs_processed: int = 0
    marginal_sum: Optional[np.ndarray] = None
    pixel_self_sum: Optional[np.ndarray] = None
    pixel_cross_sum: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.same_frame_sum.shape[0]
        if self.same_frame_sum.shape != (n, n) or self.cross_frame_sum.shape != (n, n):
            raise ValueError("JDP accumulators must be square and equal in size")
        for name in ("marginal_sum", "pixel_self_sum", "pixel_cross_sum"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=np.uint64))

    @classmethod
    def empty(cls, axis: str, n: int) -> "JdpMatrix":
        z = np.zeros((n, n), dtype=np.uint64)
        return cls(axis, z, z.copy())

    @property
    def size(self) -> int:
        return self.same_frame_sum.shape[0]

    def __add__(self, other: "JdpMatrix") -> "JdpMatrix":
        if other.axis != self.axis or other.size != self.size:
            raise ValueError("cannot merge JDP accumulators of different axis or size")
        return JdpMatrix(
            self.axis,
            self.same_frame_sum + other.same_frame_sum,
            self.cross_frame_sum + other.cross_frame_sum,
            self.frames_processed + other.frames_processed,
            self.pairs_processed + other.pairs_processed,
            self.marginal_sum + other.marginal_sum,
            self.pixel_self_sum + other.pixel_self_sum,
            self.pixel_cross_sum + other.pixel_cross_sum,
        )

    def same_term(self) -> np.ndarray:
        return self.same_frame_sum.astype(float) / self.frames_processed

    def cross_term(self) -> np.ndarray:
        c = self.cross_frame_sum.astype(float)
        return (c + c.T) / (2.0 * self.pairs_processed)

    def self_term(self) -> np.ndarray:
        """Diagonal excess from pixels correlating with themselves."""
        return (self.pixel_self_sum.astype(float) / self.frames_processed
                - self.pixel_cross_sum.astype(float) / self.pairs_processed)

    def resolved(self, self_correction: bool = True) -> np.ndarray:
        """Same-frame minus consecutive-frame JDP.

        With ``self_correction`` the pixel self-products are removed from the
        diagonal, leaving only correlations between distinct pixels.
        """
        if self.frames_processed < 2 or self.pairs_processed < 1:
            raise ValueError("JDP needs at least 2 frames")
        r = self.same_term() - self.cross_term()
        if self_correction:
            r[np.diag_indices(self.size)] -= self.self_term()
        return r

    def centroid(self) -> float:
        w = self.marginal_sum.astype(float)
        total = w.sum()
        if total <= 0:
            return (self.size - 1) / 2
        return float(np.arange(self.size) @ w / total)


def accumulate_block(frames: np.ndarray, axes: Sequence[str] = AXES,
                     next_frame: Optional[np.ndarray] = None) -> dict:
    """JDP accumulators for one block of thresholded frames.

    Consecutive pairs inside the block are counted, plus the pair
    (last frame, ``next_frame``) when the following block's first frame is
    supplied, so disjoint blocks sum to the sequential result.
    """
    f = np.asarray(frames, dtype=np.uint32)
    full = f if next_frame is None else np.concatenate([f, np.asarray(next_frame, np.uint32)[None]])
    k = f.shape[0]
    # pixel values fit in 16 bits, so pixel products fit in uint32
    sq = f * f
    nxt = full[:-1] * full[1:]
    out = {}
    for axis in axes:
        red = -2 if axis == "x" else -1
        m_full = full.sum(axis=red, dtype=np.uint64)
        m = m_full[:k]
        out[axis] = JdpMatrix(
            axis,
            m.T @ m,
            m_full[:-1].T @ m_full[1:],
            frames_processed=k,
            pairs_processed=full.shape[0] - 1,
            marginal_sum=m.sum(axis=0),
            pixel_self_sum=sq.sum(axis=red, dtype=np.uint64).sum(axis=0),
            pixel_cross_sum=nxt.sum(axis=red, dtype=np.uint64).sum(axis=0),
        )
    return out


def merge(parts: Iterable[dict]) -> dict:
    total = None
    for p in parts:
        total = p if total is None else {a: total[a] + p[a] for a in total}
    return total


def accumulate_jdp(frames, axis: str, block: int = 1024) -> JdpMatrix:
    """Accumulate the JDP estimator over an ordered stream of thresholded frames.

    ``frames`` may be an array of shape (n, h, w) or any iterable of 2-D frames.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    if isinstance(frames, np.ndarray) and frames.ndim == 3:
        n = frames.shape[0]
        if n < 2:
            raise ValueError("JDP needs at least 2 frames")
        parts = []
        for a, b in block_ranges(n, block):
            nxt = frames[b] if b < n else None
            parts.append(accumulate_block(frames[a:b], (axis,), nxt))
        return merge(parts)[axis]

    total = None
    buf = []
    for fr in frames:
        buf.append(np.asarray(fr))
        if len(buf) == block + 1:
            part = accumulate_block(np.stack(buf[:-1]), (axis,), buf[-1])[axis]
            total = part if total is None else total + part
            buf = buf[-1:]
    if total is None and len(buf) < 2:
        raise ValueError("JDP needs at least 2 frames")
    if buf:
        part = accumulate_block(np.stack(buf), (axis,))[axis]
        total = part if total is None else total + part
    return total


class _JdpBlock:
    def __init__(self, source, calib, n_frames, axes):
        self.source, self.calib, self.n_frames, self.axes = source, calib, n_frames, axes

    def __call__(self, r):
        a, b = r
        stop = min(b + 1, self.n_frames)
        t = threshold_frame(self.source.frames(a, stop), self.calib)
        nxt = t[b - a] if stop > b else None
        return accumulate_block(t[:b - a], self.axes, nxt)


def accumulate_source(source, calib: DarkCalibration, n_frames: int, axes: Sequence[str] = AXES,
                      block: int = 2048, workers: int = 1) -> dict:
    """Threshold and accumulate a whole frame source, block-parallel.

    Block boundaries are fixed by ``block`` alone, and integer merging makes
    the result independent of ``workers``.
    """
    if n_frames < 2:
        raise ValueError("JDP needs at least 2 frames")
    parts = map_blocks(_JdpBlock(source, calib, n_frames, tuple(axes)),
                       block_ranges(n_frames, block), workers)
    return merge(parts)


# ---------------------------------------------------------------- profiles

@dataclass
class CorrelationProfile:
    coordinate: str
    offsets: np.ndarray
    values: np.ndarray
    counts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.counts is None:
            self.counts = np.ones_like(self.values)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.coordinate not in ("difference", "sum"):
            raise ValueError(f"unknown coordinate {self.coordinate!r}")
        if not (self.offsets.shape == self.values.shape == self.counts.shape):
            raise ValueError("offsets, values and counts must have equal length")
        if np.any(np.diff(self.offsets) <= 0):
            raise ValueError("offsets must be strictly increasing")


def extract_profile(jdp: Union[JdpMatrix, np.ndarray], coordinate: str,
                    self_correction: bool = True) -> CorrelationProfile:
    """Average the JDP along its diagonals (``difference``) or anti-diagonals (``sum``).

    The sum coordinate is re-centred on twice the marginal-intensity
    centroid; for a bare matrix the row sums serve as the marginal.
    """
    if isinstance(jdp, JdpMatrix):
        mat = jdp.resolved(self_correction)
        centroid = jdp.centroid()
    else:
        mat = np.asarray(jdp, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("JDP matrix must be square")
        w = mat.sum(axis=1)
        centroid = (float(np.arange(len(w)) @ w / w.sum())
                    if w.sum() > 0 else (mat.shape[0] - 1) / 2)
    n = mat.shape[0]
    i, j = np.indices((n, n))
    if coordinate == "difference":
        key = (i - j + (n - 1)).ravel()
        offsets = np.arange(-(n - 1), n)
    elif coordinate == "sum":
        key = (i + j).ravel()
        s0 = math.floor(2 * centroid + 0.5)
        offsets = np.arange(0, 2 * n - 1) - s0
    else:
        raise ValueError(f"coordinate must be 'difference' or 'sum', got {coordinate!r}")
    counts = np.bincount(key, minlength=2 * n - 1)
    sums = np.bincount(key, weights=mat.ravel(), minlength=2 * n - 1)
    return CorrelationProfile(coordinate, offsets, sums / counts, counts)


# ---------------------------------------------------------------- fitting

@dataclass
class DoubleGaussianFit:
    amp_signal: float
    width_signal_px: float
    amp_noise: float
    width_noise_px: float
    baseline: float
    center_px: float
    residual_norm: float
    converged: bool
    iterations: int = 0


def double_gaussian(params, x):
    """Two unit-peak Gaussians sharing a centre, plus a constant.

    ``params = [A_s, ln S_s, A_n, ln S_n, baseline, centre]``; returns the
    values and the analytic Jacobian.
    """
    a1, l1, a2, l2, base, mu = params
    s1, s2 = math.exp(l1), math.exp(l2)
    dx = np.asarray(x, dtype=float) - mu
    q1 = (dx / s1) ** 2
    q2 = (dx / s2) ** 2
    g1 = np.exp(-0.5 * q1)
    g2 = np.exp(-0.5 * q2)
    f = a1 * g1 + a2 * g2 + base
    jac = np.empty((dx.size, 6))
    jac[:, 0] = g1
    jac[:, 1] = a1 * g1 * q1
    jac[:, 2] = g2
    jac[:, 3] = a2 * g2 * q2
    jac[:, 4] = 1.0
    jac[:, 5] = a1 * g1 * dx / s1 ** 2 + a2 * g2 * dx / s2 ** 2
    return f, jac


MIN_WIDTH_PX = 0.25


def _central(x, n):
    return np.abs(x) <= n / 4


def initial_guess(profile: CorrelationProfile) -> np.ndarray:
    """Centre at the profile maximum within the central half of the offsets."""
    x, y = profile.offsets, profile.values
    n = (len(x) + 1) / 2
    mid = _central(x, n)
    k = np.flatnonzero(mid)[np.argmax(y[mid])]
    reach = np.abs(x - x[k])
    outer = reach >= 0.75 * reach.max()
    base = float(np.median(y[outer]))
    peak = float(y[k]) - base
    return np.array([0.7 * peak, 0.0, 0.3 * peak, math.log(n / 4), base, float(x[k])])


def gaussian(params, x):
    """Single unit-peak Gaussian plus constant, ``[A, ln S, baseline, centre]``."""
    a, l, base, mu = params
    s = math.exp(l)
    dx = np.asarray(x, dtype=float) - mu
    q = (dx / s) ** 2
    g = np.exp(-0.5 * q)
    jac = np.column_stack([g, a * g * q, np.ones_like(dx), a * g * dx / s ** 2])
    return a * g + base, jac


def _bic(rss, m, k, floor):
    return m * math.log(max(rss, floor) / m) + k * math.log(m)


def fit_double_gaussian(profile: CorrelationProfile, weighted: bool = True,
                        tol: float = 1e-10, max_iterations: int = 500) -> DoubleGaussianFit:
    """Least-squares double Gaussian with a shared centre and a baseline.

    With ``weighted`` each profile point is weighted by the square root of
    the number of matrix entries averaged into it.

    A one-component fit is also made. When it scores at least as well on
    BIC (or the two-component fit failed to converge), the second
    component is reported as absent (``amp_noise = 0``,
    ``width_noise_px = inf``): a component without amplitude has no width
    to contribute to :func:`resultant_width`.
    """
    x, y = profile.offsets, profile.values
    if len(x) < 8:
        raise ValueError(f"need at least 8 profile points, got {len(x)}")
    if not np.all(np.isfinite(y)):
        raise ValueError("profile contains non-finite values")
    if np.ptp(y) == 0:
        raise FitError("flat profile: no Gaussian structure to fit")
    n = (len(x) + 1) / 2
    w = np.sqrt(profile.counts) if weighted else None
    lw, hw = math.log(MIN_WIDTH_PX), math.log(4 * n)
    if not _central(x, n).any():
        raise ValueError("profile offsets do not cover the centre")

    p0 = initial_guess(profile)
    lo = np.array([0.0, lw, 0.0, lw, -np.inf, -n / 4])
    hi = np.array([np.inf, hw, np.inf, hw, np.inf, n / 4])
    double = least_squares_fit(FitProblem(double_gaussian, x, y, np.clip(p0, lo, hi), lo, hi, w),
                               tol=tol, max_iterations=max_iterations)

    lo1 = lo[[0, 1, 4, 5]]
    hi1 = hi[[0, 1, 4, 5]]
    a1, l1, a2, l2, base, mu = double.params
    narrow = p0[[0, 1, 4, 5]] * [1 / 0.7, 1, 1, 1]
    broad = narrow.copy()
    broad[1] = p0[3]
    starts = [narrow, broad,
              [a1, l1, base, mu] if a1 * math.exp(l1) >= a2 * math.exp(l2) else [a2, l2, base, mu]]
    single = min((least_squares_fit(FitProblem(gaussian, x, y, np.clip(s, lo1, hi1), lo1, hi1, w),
                                    tol=tol, max_iterations=max_iterations) for s in starts),
                 key=lambda o: o.residual_norm)

    m = len(x)
    floor = (1e-12 * float(np.linalg.norm(y if w is None else w * y))) ** 2
    scores = [(_bic(single.residual_norm ** 2, m, 4, floor), single),
              (_bic(double.residual_norm ** 2, m, 6, floor), double)]
    # a converged candidate always beats one that ran out of iterations
    _, best = min(scores, key=lambda t: (not t[1].converged, t[0]))
    if best is single:
        a, l, base, mu = single.params
        return DoubleGaussianFit(float(a), math.exp(l), 0.0, math.inf, float(base), float(mu),
                                 single.residual_norm, single.converged, single.iterations)
    return _to_fit(double)


def _to_fit(out: FitOutcome) -> DoubleGaussianFit:
    a1, l1, a2, l2, base, mu = out.params
    s1, s2 = math.exp(l1), math.exp(l2)
    if s1 > s2:
        a1, s1, a2, s2 = a2, s2, a1, s1
    return DoubleGaussianFit(float(a1), s1, float(a2), s2, float(base), float(mu),
                             out.residual_norm, out.converged, out.iterations)


def resultant_width(fit: Union[DoubleGaussianFit, float], width_noise: Optional[float] = None) -> float:
    """Combine signal and noise widths as ``S_s S_n / sqrt(S_s^2 + S_n^2)``.

    Accepts a fit, or the two widths directly.
    """
    if isinstance(fit, DoubleGaussianFit):
        if not fit.converged:
            raise FitError("fit did not converge")
        a, b = fit.width_signal_px, fit.width_noise_px
    else:
        a, b = fit, width_noise
    if math.isinf(b):
        return float(a)
    if math.isinf(a):
        return float(b)
    return a * b / math.sqrt(a * a + b * b)


# ---------------------------------------------------------------- units

def to_position_width(width_px: float, pixel_pitch: float, magnification: float) -> float:
    """Camera width in pixels -> crystal-plane length in metres."""
    if not (width_px > 0 and pixel_pitch > 0 and magnification > 0):
        raise ValueError("inputs must be positive")
    return width_px * pixel_pitch / magnification


def to_momentum_width(width_px: float, pixel_pitch: float, focal_length: float,
                      spdc_wavelength: float) -> float:
    """Far-field camera width in pixels -> transverse momentum in hbar/m."""
    if not (width_px > 0 and pixel_pitch > 0 and focal_length > 0 and spdc_wavelength > 0):
        raise ValueError("inputs must be positive")
    k = 2 * math.pi / spdc_wavelength
    return width_px * pixel_pitch * k / focal_length


@dataclass
class MeasuredWidths:
    position_x: float
    position_y: float
    momentum_x: float
    momentum_y: float

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")


def build_report(near_x: float, near_y: float, far_x: float, far_y: float,
                 pump: PumpBeam) -> EntanglementReport:
    """Entanglement figures from measured conditional widths.

    ``near_*`` are position widths in metres and ``far_*`` momentum widths
    in hbar/m. The measured position width stands in for the model's
    position correlation width when counting modes.
    """
    w = MeasuredWidths(near_x, near_y, far_x, far_y)
    gx = w.position_x * w.momentum_x
    gy = w.position_y * w.momentum_y
    return EntanglementReport(
        beta=asymmetry_factor(pump),
        gamma_x=gx,
        gamma_y=gy,
        modes_x=(pump.waist_x / w.position_x) ** 2,
        modes_y=(pump.waist_y / w.position_y) ** 2,
        entangled_x=epr_entangled(gx),
        entangled_y=epr_entangled(gy),
    )
