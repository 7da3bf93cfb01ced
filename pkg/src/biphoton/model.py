"""Double-Gaussian biphoton model and closed-form entanglement quantities.

Lengths are in metres and transverse momenta in units of hbar per metre, so
uncertainty products come out directly in units of hbar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPR_BOUND = 0.5  # hbar


@dataclass(frozen=True)
class CrystalSpec:
    length: float = 5e-3
    alpha: float = 0.455
    pump_wavelength: float = 405e-9

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"crystal length must be positive, got {self.length}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.pump_wavelength > 0:
            raise ValueError(f"pump wavelength must be positive, got {self.pump_wavelength}")


@dataclass(frozen=True)
class PumpBeam:
    waist_x: float
    waist_y: float

    def __post_init__(self):
        if not (self.waist_x > 0 and self.waist_y > 0):
            raise ValueError(f"beam waists must be positive, got {self.waist_x}, {self.waist_y}")


@dataclass(frozen=True)
class GaussianBiphotonModel:
    """Widths of the two-photon amplitude along the sum and difference coordinates.

    ``|psi|^2`` has std ``sigma_plus`` along ``x_i + x_s`` and ``sigma_minus``
    along ``x_i - x_s`` on each axis.
    """
    sigma_plus_x: float
    sigma_plus_y: float
    sigma_minus: float

    def __post_init__(self):
        if not (self.sigma_plus_x > 0 and self.sigma_plus_y > 0 and self.sigma_minus > 0):
            raise ValueError("all model widths must be positive")

    def sigma_plus(self, axis: str) -> float:
        if axis == "x":
            return self.sigma_plus_x
        if axis == "y":
            return self.sigma_plus_y
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")

    def is_entangling(self, axis: str) -> bool:
        return self.sigma_plus(axis) > self.sigma_minus


@dataclass(frozen=True)
class EntanglementReport:
    beta: float
    gamma_x: float
    gamma_y: float
    modes_x: float
    modes_y: float
    entangled_x: bool
    entangled_y: bool


def sigma_minus_from_crystal(crystal: CrystalSpec) -> float:
    """Position correlation width ``sqrt(alpha * L * lambda_p / 2pi)``."""
    return math.sqrt(crystal.alpha * crystal.length * crystal.pump_wavelength / (2 * math.pi))


def asymmetry_factor(pump: PumpBeam) -> float:
    return pump.waist_y / pump.waist_x


def model_from_pump(pump: PumpBeam, crystal: CrystalSpec) -> GaussianBiphotonModel:
    # position-space sum width taken equal to the pump waist on each axis
    return GaussianBiphotonModel(sigma_plus_x=pump.waist_x, sigma_plus_y=pump.waist_y,
                                 sigma_minus=sigma_minus_from_crystal(crystal))


def _check_widths(sigma_plus, sigma_minus):
    if not (np.all(np.asarray(sigma_plus) > 0) and np.all(np.asarray(sigma_minus) > 0)):
        raise ValueError("widths must be positive")


def conditional_position_width(sigma_plus, sigma_minus):
    """Std of ``x_i`` given ``x_s`` under ``|psi|^2``."""
    _check_widths(sigma_plus, sigma_minus)
    return sigma_plus * sigma_minus / np.sqrt(sigma_plus ** 2 + sigma_minus ** 2)


def conditional_momentum_width(sigma_plus, sigma_minus):
    """Std of ``k_i`` given ``k_s`` in the Fourier domain, in hbar/m."""
    _check_widths(sigma_plus, sigma_minus)
    return 1.0 / np.sqrt(sigma_plus ** 2 + sigma_minus ** 2)


def gamma_product(sigma_plus, sigma_minus):
    """Conditional uncertainty product in units of hbar.

    Written in closed form rather than as a product of the two widths so the
    separable case ``sigma_plus == sigma_minus`` lands on exactly 0.5.
    """
    _check_widths(sigma_plus, sigma_minus)
    ratio = sigma_minus / sigma_plus
    return ratio / (1.0 + ratio * ratio)


def mode_count(waist, sigma_minus):
    if not (np.all(np.asarray(waist) > 0) and np.all(np.asarray(sigma_minus) > 0)):
        raise ValueError("inputs must be positive")
    return (waist / sigma_minus) ** 2


def epr_entangled(gamma: float) -> bool:
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    return bool(gamma < EPR_BOUND)


def theoretical_profile(model: GaussianBiphotonModel, axis: str, coordinate: str,
                        domain: str, grid) -> np.ndarray:
    """Unit-peak Gaussian reference curve for one marginal coordinate.

    Position grids are in metres, momentum grids in hbar/m.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be non-empty")
    if grid.size > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
        raise ValueError("grid must be monotone")
    std = profile_std(model, axis, coordinate, domain)
    return np.exp(-0.5 * (grid / std) ** 2)


def profile_std(model: GaussianBiphotonModel, axis: str, coordinate: str, domain: str) -> float:
    sp = model.sigma_plus(axis)
    sm = model.sigma_minus
    table = {
        ("position", "difference"): sm,
        ("position", "sum"): sp,
        ("momentum", "sum"): 1.0 / sp,
        ("momentum", "difference"): 1.0 / sm,
    }
    try:
        return table[(domain, coordinate)]
    except KeyError:
        raise ValueError(f"unknown domain/coordinate {domain!r}/{coordinate!r}") from None
