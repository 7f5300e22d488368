"""Conventions, grid, stencils, and state containers shared by all modules.

Fixed conventions, used without exception throughout the package:

* metric signature (+, -, -, -), natural units;
* fields depend on (t, x) only, but all four covariant components
  B_0..B_3 of the potential are carried;
* raising an index leaves the time component alone and flips the sign
  of spatial components, so B^0 = B_0 and B^i = -B_i;
* the wave operator is d_tt - d_xx and the divergence of the potential
  is dB_0/dt - dB_1/dx.

States hold covariant components and their first time derivatives on a
uniform periodic grid.  Second time derivatives are never state: they are
recomputed from the field equations wherever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

Array = np.ndarray


class SimulationError(Exception):
    """Base class for physics-level failures (exit code 1 territory)."""


class GuardViolation(SimulationError):
    """A floor guard tripped: a division the scheme relies on lost its footing."""


class NonFinite(SimulationError):
    """A NaN or infinity appeared in evolved data."""


# ---------------------------------------------------------------------------
# grid and parameters


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [0, length).

    n must be a power of two, at least 2.  Production runs use n >= 16;
    the tiny sizes exist only for the polynomial embedding, whose state
    dimension grows combinatorially with n.
    """

    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self) -> None:
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid size must be a power of two >= 2, got {self.n}")
        if not (self.length > 0.0 and np.isfinite(self.length)):
            raise ValueError(f"grid length must be positive and finite, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n

    def x(self) -> Array:
        return np.arange(self.n) * self.h

    def zeros(self) -> Array:
        return np.zeros(self.n)


@dataclass(frozen=True)
class Params:
    """Model couplings and the two floor guards.

    b0_floor guards divisions by B_0 in the reconstruction chain; phi_floor
    guards divisions by the scalar intensity in the closure.  With
    soft_guards set, guard trips are recorded and the offending terms are
    dropped instead of raising.
    """

    e: float = 1.0
    m: float = 1.0
    b0_floor: float = 1.0e-6
    phi_floor: float = 1.0e-3
    soft_guards: bool = False

    def __post_init__(self) -> None:
        if self.e == 0.0:
            raise ValueError("coupling e must be nonzero")
        if self.b0_floor <= 0.0 or self.phi_floor <= 0.0:
            raise ValueError("floor guards must be positive")


# ---------------------------------------------------------------------------
# stencils

# Both stencils are the classical second-order centered ones.  They are kept
# as free functions (not grid methods) because every hot loop in the package
# calls them and the call sites read better unqualified.


def deriv_x(f: Array, g: Grid1D) -> Array:
    """Centered first derivative on the periodic grid.

    Second-order accurate; antisymmetric, so its output always sums to
    zero over the grid.  Exact for constants everywhere and for linear
    functions away from the periodic wrap.
    """
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * g.h)


def deriv_xx(f: Array, g: Grid1D) -> Array:
    """Centered second derivative (compact 3-point stencil), periodic."""
    return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / (g.h * g.h)


def lorentz_dot(u: Array, v: Array) -> Array:
    """Invariant contraction of two sets of covariant 4-component fields.

    Inputs are stacked covariant components of shape (4, n); the result is
    u^mu v_mu = u_0 v_0 - u_1 v_1 - u_2 v_2 - u_3 v_3 pointwise.
    """
    return u[0] * v[0] - u[1] * v[1] - u[2] * v[2] - u[3] * v[3]


# ---------------------------------------------------------------------------
# states


def _as_field_block(name: str, arr: Array, n: int) -> None:
    if arr.shape != (4, n):
        raise ValueError(f"{name} must have shape (4, {n}), got {arr.shape}")


@dataclass
class ReducedState:
    """Potential-only state: covariant B_mu and their first time derivatives.

    B and Bdot are arrays of shape (4, n); row 0 is the time component.

    charge_mean is the grid mean of B_0*Phi, the total charge density
    divided by the domain volume.  On a periodic domain the zero mode of
    the time-component equation is not captured by spatial stencils (every
    periodic derivative averages to zero), so this one scalar must ride
    along with the fields.  It is a constant of the motion: the mean of a
    spatial flux divergence vanishes identically.
    """

    t: float
    B: Array
    Bdot: Array
    grid: Grid1D
    charge_mean: float = 0.0

    def __post_init__(self) -> None:
        self.B = np.asarray(self.B, dtype=float)
        self.Bdot = np.asarray(self.Bdot, dtype=float)
        _as_field_block("B", self.B, self.grid.n)
        _as_field_block("Bdot", self.Bdot, self.grid.n)

    def copy(self) -> "ReducedState":
        return replace(self, B=self.B.copy(), Bdot=self.Bdot.copy())

    def field_arrays(self) -> Iterator[tuple[str, Array]]:
        yield "B", self.B
        yield "Bdot", self.Bdot

    def require_finite(self) -> None:
        for name, arr in self.field_arrays():
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"non-finite values in {name} at t={self.t:.6g}")

    def check_b0_floor(self, p: Params) -> None:
        """Raise unless |B_0| clears the floor everywhere.

        The reconstruction chain divides by B_0, so states that graze zero
        are outside the regime the scheme is built for.
        """
        mag = np.abs(self.B[0])
        j = int(np.argmin(mag))
        if mag[j] < p.b0_floor:
            raise GuardViolation(
                f"|B_0| = {mag[j]:.3e} < b0_floor = {p.b0_floor:.3e} "
                f"at grid index {j}, t={self.t:.6g}"
            )


@dataclass
class FullState(ReducedState):
    """Reduced state plus the explicit scalar field and its time derivative."""

    phi: Array = field(default=None)  # type: ignore[assignment]
    phidot: Array = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.phi is None or self.phidot is None:
            raise ValueError("FullState requires phi and phidot")
        self.phi = np.asarray(self.phi, dtype=float)
        self.phidot = np.asarray(self.phidot, dtype=float)
        for name, arr in (("phi", self.phi), ("phidot", self.phidot)):
            if arr.shape != (self.grid.n,):
                raise ValueError(f"{name} must have shape ({self.grid.n},), got {arr.shape}")

    def copy(self) -> "FullState":
        return replace(
            self,
            B=self.B.copy(),
            Bdot=self.Bdot.copy(),
            phi=self.phi.copy(),
            phidot=self.phidot.copy(),
        )

    def field_arrays(self) -> Iterator[tuple[str, Array]]:
        yield from super().field_arrays()
        yield "phi", self.phi
        yield "phidot", self.phidot

    def to_reduced(self) -> ReducedState:
        """Forget the scalar field; the reduced system must recover it.

        The charge mean is recomputed from the fields being dropped, since
        the intensity reconstruction can only ever see the zero-mean part
        of the source through spatial stencils.
        """
        return ReducedState(
            t=self.t,
            B=self.B.copy(),
            Bdot=self.Bdot.copy(),
            grid=self.grid,
            charge_mean=float(np.mean(self.B[0] * self.phi * self.phi)),
        )


@dataclass
class Trajectory:
    """Snapshots emitted by a run, plus per-snapshot diagnostics dictionaries."""

    states: list
    extras: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.states:
            raise ValueError("a trajectory needs at least one snapshot")
        if self.extras and len(self.extras) != len(self.states):
            raise ValueError("extras must be empty or match states one to one")
        if not self.extras:
            self.extras = [{} for _ in self.states]

    @property
    def grid(self) -> Grid1D:
        return self.states[0].grid

    @property
    def times(self) -> Array:
        return np.array([s.t for s in self.states])

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)
