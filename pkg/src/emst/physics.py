"""Desk-scale device physics: tight-binding bands, chain phonons, Drude
conduction and abrupt p-n junction electrostatics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.linalg import solve_banded

Q = constants.e
M_E = constants.m_e


class PhysicsError(ValueError):
    pass


class RegimeError(PhysicsError):
    pass


class ConvergenceError(PhysicsError):
    pass


def _positive(**kw):
    for name, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise PhysicsError(f"{name} must be positive and finite, got {v}")


def _check_zone(k: np.ndarray, a: float):
    edge = math.pi / a
    if np.any(np.abs(k) > edge * (1 + 1e-12)):
        raise PhysicsError(f"k outside the first Brillouin zone [-{edge:g}, {edge:g}]")


@dataclass(frozen=True)
class BandCurve:
    eps0: float
    t: float
    a: float
    k: np.ndarray
    energy: np.ndarray

    def bandwidth(self) -> float:
        return float(self.energy.max() - self.energy.min())

    def rows(self):
        return [("k (1/m)", "E (eV)")] + list(zip(self.k.tolist(), self.energy.tolist()))


@dataclass(frozen=True)
class PhononCurve:
    K: float
    M: float
    a: float
    k: np.ndarray
    omega: np.ndarray

    def rows(self):
        return [("k (1/m)", "omega (rad/s)")] + list(zip(self.k.tolist(), self.omega.tolist()))


@dataclass(frozen=True)
class DrudeParams:
    n: float
    tau: float
    m: float = M_E

    def __post_init__(self):
        _positive(n=self.n, tau=self.tau, m=self.m)


@dataclass(frozen=True)
class JunctionParams:
    Na: float
    Nd: float
    eps: float
    Vbi: float
    Vapplied: float = 0.0

    def __post_init__(self):
        _positive(Na=self.Na, Nd=self.Nd, eps=self.eps, Vbi=self.Vbi)
        if not abs(self.Vapplied) < self.Vbi:
            raise RegimeError("depletion approximation needs |V_applied| < V_bi")


def band_energies(eps0: float, t: float, a: float, k_list) -> BandCurve:
    """E(k) = eps0 - 2 t cos(k a)."""
    _positive(t=t, a=a)
    k = np.asarray(k_list, dtype=float)
    _check_zone(k, a)
    return BandCurve(eps0, t, a, k, eps0 - 2.0 * t * np.cos(k * a))


def phonon_dispersion(K: float, M: float, a: float, k_list) -> PhononCurve:
    """Monatomic chain: omega(k) = 2 sqrt(K/M) |sin(k a / 2)|."""
    _positive(K=K, M=M, a=a)
    k = np.asarray(k_list, dtype=float)
    _check_zone(k, a)
    return PhononCurve(K, M, a, k, 2.0 * math.sqrt(K / M) * np.abs(np.sin(k * a / 2.0)))


def drude_conductivity(p: DrudeParams) -> float:
    return p.n * Q * Q * p.tau / p.m


def depletion_width(j: JunctionParams) -> tuple[float, float, float]:
    """Closed-form abrupt junction: (W, x_n, x_p) with Na x_p = Nd x_n."""
    w = math.sqrt(2.0 * j.eps * (j.Vbi - j.Vapplied) / Q * (j.Na + j.Nd) / (j.Na * j.Nd))
    xn = w * j.Na / (j.Na + j.Nd)
    xp = w * j.Nd / (j.Na + j.Nd)
    return w, xn, xp


@dataclass(frozen=True)
class PoissonProfile:
    x: np.ndarray  # m
    potential: np.ndarray  # V
    charge: np.ndarray  # C/m^3
    xn: float
    xp: float
    iterations: int

    @property
    def width(self) -> float:
        return self.xn + self.xp

    def rows(self):
        return [("x (m)", "V (V)", "rho (C/m^3)")] + list(
            zip(self.x.tolist(), self.potential.tolist(), self.charge.tolist()))


def _charge(x: np.ndarray, j: JunctionParams, xn: float, xp: float) -> np.ndarray:
    rho = np.zeros_like(x)
    rho[(x >= -xp) & (x < 0)] = -Q * j.Na
    rho[(x >= 0) & (x <= xn)] = Q * j.Nd
    return rho


def poisson_depletion_profile(j: JunctionParams, grid_points: int = 512, max_iter: int = 200,
                              span: float = 2.0) -> PoissonProfile:
    """Finite-difference Poisson solve on [-span*W0, span*W0] with Dirichlet ends.

    The left end is held at 0 V and the right at V_bi - V_applied.  x_n is found
    by bisection until the field at the left boundary vanishes; x_p follows from
    charge neutrality.  The charge density is sampled at grid nodes.
    """
    if grid_points < 64:
        raise PhysicsError("grid_points must be at least 64")
    w0, _, _ = depletion_width(j)
    length = span * w0
    x = np.linspace(-length, length, grid_points)
    h = x[1] - x[0]
    drop = j.Vbi - j.Vapplied
    n_inner = grid_points - 2
    ab = np.zeros((3, n_inner))
    ab[0, 1:] = 1.0
    ab[1, :] = -2.0
    ab[2, :-1] = 1.0

    def solve(xn: float):
        xp = xn * j.Nd / j.Na
        rho = _charge(x, j, xn, xp)
        rhs = -rho[1:-1] * h * h / j.eps
        rhs[-1] -= drop
        v = np.empty(grid_points)
        v[0], v[-1] = 0.0, drop
        v[1:-1] = solve_banded((1, 1), ab, rhs)
        field_left = -(v[1] - v[0]) / h
        return v, rho, field_left, xp

    lo, hi = 0.0, length * j.Na / max(j.Na, j.Nd) * 0.999
    _, _, f_lo, _ = solve(lo)
    _, _, f_hi, _ = solve(hi)
    if f_lo * f_hi > 0:
        raise ConvergenceError("zero-field condition not bracketed")
    it = 0
    while it < max_iter and hi - lo > 1e-12 * length:
        mid = 0.5 * (lo + hi)
        _, _, f_mid, _ = solve(mid)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        it += 1
    if hi - lo > 1e-9 * length:
        raise ConvergenceError(f"bisection did not converge in {max_iter} iterations")
    xn = 0.5 * (lo + hi)
    v, rho, _, xp = solve(xn)
    return PoissonProfile(x, v, rho, xn, xp, it)


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()
