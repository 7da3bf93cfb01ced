"""Reference computations that do not go through the frame pipeline."""
import math

import numpy as np

from biphoton import analysis
from biphoton.simulator import (OpticsMode, map_to_camera, pixel_indices,
                                sample_pair_positions, sample_pair_wavevectors)


_trapz = getattr(np, "trapezoid", None) or np.trapz


def _amplitude(xi, xs, sp, sm):
    return np.exp(-(xi + xs) ** 2 / (4 * sp ** 2) - (xi - xs) ** 2 / (4 * sm ** 2))


def _moments(w, grid):
    w = w / _trapz(w, grid)
    mean = _trapz(w * grid, grid)
    return mean, math.sqrt(_trapz(w * (grid - mean) ** 2, grid))


def brute_conditional_position_std(sp, sm, n=4001):
    """Std of x_i given a fixed x_s, by quadrature of |psi|^2 along x_i."""
    xs = 0.37 * sp
    scale = min(sp, sm)
    # the conditional density lives within a few min(sp, sm) of its mean
    centre = xs * (sp ** 2 - sm ** 2) / (sm ** 2 + sp ** 2)
    xi = centre + np.linspace(-12 * scale, 12 * scale, n)
    return _moments(np.abs(_amplitude(xi, xs, sp, sm)) ** 2, xi)[1]


def brute_conditional_momentum_std(sp, sm, n=2001, m=20001):
    """Std of k_i given k_s = 0 from a numerical Fourier transform of psi.

    Setting k_s = 0 reduces the transform over x_s to a plain integral, done
    by quadrature; the transform over x_i is an explicit DFT sum.
    """
    big = max(sp, sm)
    xi = np.linspace(-12 * big, 12 * big, n)
    # psi varies on the scale of min(sp, sm) along x_s; resolve that finely
    xs = np.linspace(-14 * big, 14 * big, m)
    g = np.empty(n)
    for a in range(0, n, 200):
        block = _amplitude(xi[a:a + 200, None], xs[None, :], sp, sm)
        g[a:a + 200] = _trapz(block, xs, axis=1)
    kmax = 12 / math.sqrt(sp ** 2 + sm ** 2)
    k = np.linspace(-kmax, kmax, 1601)
    dx = xi[1] - xi[0]
    power = np.abs(np.exp(-1j * np.outer(k, xi)) @ g * dx) ** 2
    return _moments(power, k)[1]


def pair_histogram(model, camera, optics, axis, n_pairs, seed, chunk=1_000_000):
    """Symmetrized column/row histogram of detected pairs, distinct pixels only.

    Also returns the single-photon marginal used to centre sum profiles.
    """
    rng = np.random.default_rng(seed)
    n = camera.width_px if axis == "x" else camera.height_px
    hist = np.zeros((n, n))
    marginal = np.zeros(n)
    k = 0 if axis == "x" else 1
    left = n_pairs
    while left > 0:
        size = min(chunk, left)
        left -= size
        if optics.mode is OpticsMode.NEAR_FIELD:
            a, b = sample_pair_positions(model, rng, size)
            kind = "position"
        else:
            a, b = sample_pair_wavevectors(model, rng, size)
            kind = "wavevector"
        ca, ra, oka = pixel_indices(camera, map_to_camera(optics, a, kind))
        cb, rb, okb = pixel_indices(camera, map_to_camera(optics, b, kind))
        ia, ib = (ca, cb) if k == 0 else (ra, rb)
        marginal += np.bincount(ia[oka], minlength=n) + np.bincount(ib[okb], minlength=n)
        keep = oka & okb & ~((ca == cb) & (ra == rb))
        hist += np.bincount(ia[keep] * n + ib[keep], minlength=n * n).reshape(n, n)
    return hist + hist.T, marginal


def oracle_width_px(model, camera, optics, axis, n_pairs=10_000_000, seed=1):
    """Fitted width (pixels) of noiseless pixelated pairs through the profile/fit path."""
    hist, marginal = pair_histogram(model, camera, optics, axis, n_pairs, seed)
    coordinate = "difference" if optics.mode is OpticsMode.NEAR_FIELD else "sum"
    prof = analysis.extract_profile(hist, coordinate)
    if coordinate == "sum":
        # centre on the photon marginal, as the frame pipeline does
        centroid = float(np.arange(len(marginal)) @ marginal / marginal.sum())
        s0 = math.floor(2 * centroid + 0.5)
        prof = analysis.CorrelationProfile("sum", np.arange(len(prof.offsets)) - s0,
                                           prof.values, prof.counts)
    fit = analysis.fit_double_gaussian(prof)
    return analysis.resultant_width(fit), fit, prof
