"""Power-law interpolation between void and solid material.

E(rho) = Emin + rho^p (E0 - Emin).  The exponent p penalizes intermediate
densities for p > 1; p = 1 is the variable thickness sheet relaxation, for
which the compliance objective is convex.  Emin > 0 keeps the stiffness
matrix nonsingular at zero density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MaterialLaw:
    """Isotropic plane-stress material with penalized density interpolation."""

    E0: float = 1.0
    Emin: float = 1e-9
    nu: float = 0.3
    p: float = 3.0

    def __post_init__(self) -> None:
        if not self.E0 > 0.0:
            raise ValueError(f"E0 must be positive, got {self.E0}")
        if not 0.0 < self.Emin < self.E0:
            raise ValueError(
                f"Emin must satisfy 0 < Emin < E0, got Emin={self.Emin}, E0={self.E0}"
            )
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")
        if not self.p >= 1.0:
            raise ValueError(f"penalization exponent must be >= 1, got {self.p}")


@dataclass
class DesignField:
    """A density field on the element grid, row ey=0 first within the vector."""

    values: np.ndarray
    nx: int
    ny: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.nx * self.ny,):
            raise ValueError(
                f"expected {self.nx * self.ny} values for a {self.nx}x{self.ny} grid, "
                f"got shape {self.values.shape}"
            )
        if self.values.size and (
            self.values.min() < 0.0 or self.values.max() > 1.0
        ):
            raise ValueError("densities must lie in [0, 1]")

    def grid(self) -> np.ndarray:
        """(ny, nx) view with row index ey."""
        return self.values.reshape(self.ny, self.nx)

    def volume_fraction(self, volumes: np.ndarray) -> float:
        volumes = np.asarray(volumes, dtype=float)
        return float(volumes @ self.values / volumes.sum())


def interpolate_modulus(law: MaterialLaw, rho: np.ndarray) -> np.ndarray:
    """E(rho) = Emin + rho^p (E0 - Emin), elementwise."""
    rho = np.asarray(rho, dtype=float)
    _check_unit_interval(rho)
    return law.Emin + rho**law.p * (law.E0 - law.Emin)


def modulus_derivative(law: MaterialLaw, rho: np.ndarray) -> np.ndarray:
    """dE/drho = p rho^(p-1) (E0 - Emin), elementwise.

    For p < 2 the derivative at rho = 0 follows the numpy power convention:
    p = 1 gives the constant E0 - Emin, 1 < p < 2 gives 0^(p-1) = 0.
    """
    rho = np.asarray(rho, dtype=float)
    _check_unit_interval(rho)
    if law.p == 1.0:
        return np.full_like(rho, law.E0 - law.Emin)
    return law.p * rho ** (law.p - 1.0) * (law.E0 - law.Emin)


def _check_unit_interval(rho: np.ndarray) -> None:
    if rho.size and (rho.min() < 0.0 or rho.max() > 1.0):
        bad = rho[(rho < 0.0) | (rho > 1.0)][0]
        raise ValueError(f"density value {bad} outside [0, 1]")
