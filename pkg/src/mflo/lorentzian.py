"""Discrete Lorentzian functions on a 2^n-point cyclic grid.

A discrete Lorentzian function (LF) of width ``a > 0`` on ``N = 2^n`` grid
points has the profile

    L_k = C_S/sqrt(N) * (1 - e^{-2a}) * (1 - (-1)^k e^{-aN/2})
          / (1 - 2 e^{-a} cos(2 pi k / N) + e^{-2a}),

with ``C_S`` fixed numerically by the unit 2-norm condition.  All entries are
positive, and the profile is symmetric under k -> N - k.  Small ``a`` gives a
near-delta profile at k = 0; large ``a`` flattens it toward 1/sqrt(N).

Basis functions used for fitting are cyclic shifts of this profile to integer
centers k_c.  The shift wraps mod N, consistent with generating the state by
a QFT acting on a periodic register.

Notes
-----
The numerically delicate factors are evaluated with ``expm1`` and
``sin^2(pi k / N)`` forms so that widths down to the optimizer bound 1e-3
(and far below) stay accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Lorentzian1D",
    "LorentzianBasisSpec",
    "lf_profile",
    "lf_state",
    "lf_state_da",
    "lf_profile_da",
    "overlap_1d",
    "boundary_mass",
]

AXES = ("x", "y", "z")


def _axis_index(axis) -> int:
    if axis in (0, 1, 2):
        return int(axis)
    if axis in AXES:
        return AXES.index(axis)
    raise ValueError(f"axis must be one of 0,1,2 or 'x','y','z', got {axis!r}")


def _check_width(a: float) -> float:
    a = float(a)
    if not math.isfinite(a) or a <= 0.0:
        raise ValueError(f"LF width must be a positive finite real, got {a}")
    return a


def _raw_profile(n: int, a: float) -> np.ndarray:
    """Unnormalized LF profile (the formula without C_S/sqrt(N))."""
    N = 1 << n
    k = np.arange(N)
    em = math.exp(-a)
    amp = -math.expm1(-2.0 * a)  # 1 - e^{-2a}
    edge = math.exp(-0.5 * a * N)  # e^{-aN/2}
    # 1 - (-1)^k e^{-aN/2}, kept accurate when a*N/2 is tiny
    alt = np.where(k % 2 == 0, -math.expm1(-0.5 * a * N), 1.0 + edge)
    den = math.expm1(-a) ** 2 + 4.0 * em * np.sin(np.pi * k / N) ** 2
    return amp * alt / den


def _raw_profile_da(n: int, a: float) -> np.ndarray:
    """Width derivative of the unnormalized profile."""
    N = 1 << n
    k = np.arange(N)
    em = math.exp(-a)
    cos = np.cos(2.0 * np.pi * k / N)
    sgn = np.where(k % 2 == 0, 1.0, -1.0)
    edge = math.exp(-0.5 * a * N)

    amp = -math.expm1(-2.0 * a)
    d_amp = 2.0 * math.exp(-2.0 * a)
    alt = 1.0 - sgn * edge
    d_alt = sgn * (0.5 * N) * edge
    den = math.expm1(-a) ** 2 + 4.0 * em * np.sin(np.pi * k / N) ** 2
    d_den = 2.0 * em * (cos - em)

    raw = amp * alt / den
    return (d_amp * alt + amp * d_alt) / den - raw * d_den / den


def lf_profile(n: int, a: float) -> tuple[np.ndarray, float]:
    """Normalized LF profile centered at k = 0 and its norm constant C_S.

    Returns a length-2^n vector with unit 2-norm and the constant C_S such
    that the vector equals C_S/sqrt(N) times the raw formula.
    """
    if n < 1:
        raise ValueError(f"qubit count must be >= 1, got {n}")
    a = _check_width(a)
    raw = _raw_profile(n, a)
    nrm = float(np.linalg.norm(raw))
    return raw / nrm, math.sqrt(1 << n) / nrm


def lf_profile_da(n: int, a: float) -> np.ndarray:
    """Analytic width derivative of the normalized profile.

    Includes the chain-rule term through the norm constant: with l the raw
    profile, d(l/|l|)/da = l'/|l| - l (l.l')/|l|^3, which keeps the
    derivative orthogonal to the profile (unit norm is preserved along a).
    """
    if n < 1:
        raise ValueError(f"qubit count must be >= 1, got {n}")
    a = _check_width(a)
    raw = _raw_profile(n, a)
    d_raw = _raw_profile_da(n, a)
    nrm = float(np.linalg.norm(raw))
    return d_raw / nrm - raw * (float(raw @ d_raw) / nrm**3)


def _check_center(n: int, k_c: int) -> int:
    N = 1 << n
    if int(k_c) != k_c or not (0 <= int(k_c) < N):
        raise ValueError(f"center must be an integer in [0, {N}), got {k_c}")
    return int(k_c)


def lf_state(n: int, a: float, k_c: int) -> np.ndarray:
    """Shifted LF statevector: entry k equals the profile at (k - k_c) mod N."""
    values, _ = lf_profile(n, a)
    return np.roll(values, _check_center(n, k_c))


def lf_state_da(n: int, a: float, k_c: int) -> np.ndarray:
    """Width derivative of the shifted state (shift commutes with d/da)."""
    return np.roll(lf_profile_da(n, a), _check_center(n, k_c))


@dataclass(frozen=True, eq=False)
class Lorentzian1D:
    """One shifted, normalized discrete Lorentzian basis function."""

    n: int
    a: float
    k_c: int
    values: np.ndarray
    norm_const: float

    @classmethod
    def build(cls, n: int, a: float, k_c: int) -> "Lorentzian1D":
        profile, c_s = lf_profile(n, a)
        return cls(n=n, a=float(a), k_c=_check_center(n, k_c),
                   values=np.roll(profile, int(k_c)), norm_const=c_s)


@dataclass(frozen=True, eq=False)
class LorentzianBasisSpec:
    """Per-direction LF widths and integer centers on a shared 2^n grid.

    ``widths[v]`` and ``centers[v]`` hold the n_Lv basis parameters for
    direction v in (x, y, z).  Duplicate (a, k_c) pairs within a direction
    are rejected because they make the overlap metric exactly singular.
    """

    n: int
    widths: tuple[np.ndarray, np.ndarray, np.ndarray]
    centers: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"qubit count must be >= 1, got {self.n}")
        N = 1 << self.n
        widths = []
        centers = []
        for axis in range(3):
            a = np.array(self.widths[axis], dtype=np.float64).ravel().copy()
            k = np.array(self.centers[axis], dtype=np.int64).ravel().copy()
            if a.size == 0 or k.size == 0:
                raise ValueError(f"direction {AXES[axis]}: need at least one LF")
            if a.size != k.size:
                raise ValueError(
                    f"direction {AXES[axis]}: {a.size} widths vs {k.size} centers")
            if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
                raise ValueError(f"direction {AXES[axis]}: widths must be positive")
            raw_k = np.asarray(self.centers[axis]).ravel()
            if not np.array_equal(raw_k, k) or np.any(k < 0) or np.any(k >= N):
                raise ValueError(
                    f"direction {AXES[axis]}: centers must be integers in [0, {N})")
            pairs = {(float(ai), int(ki)) for ai, ki in zip(a, k)}
            if len(pairs) != a.size:
                raise ValueError(
                    f"direction {AXES[axis]}: duplicate (a, k_c) pair "
                    "makes the overlap matrix singular")
            a.setflags(write=False)
            k.setflags(write=False)
            widths.append(a)
            centers.append(k)
        object.__setattr__(self, "widths", tuple(widths))
        object.__setattr__(self, "centers", tuple(centers))

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def n_l(self) -> tuple[int, int, int]:
        return tuple(w.size for w in self.widths)

    @property
    def n_prod(self) -> int:
        nx, ny, nz = self.n_l
        return nx * ny * nz

    def state_matrix(self, axis) -> np.ndarray:
        """Rows are the shifted LF statevectors of one direction, shape (n_Lv, N)."""
        v = _axis_index(axis)
        return np.stack([lf_state(self.n, a, k)
                         for a, k in zip(self.widths[v], self.centers[v])])

    def state_da_matrix(self, axis) -> np.ndarray:
        """Rows are the width derivatives of the shifted states."""
        v = _axis_index(axis)
        return np.stack([lf_state_da(self.n, a, k)
                         for a, k in zip(self.widths[v], self.centers[v])])

    def with_widths(self, widths_flat: np.ndarray) -> "LorentzianBasisSpec":
        """New spec with widths replaced from a flat (x then y then z) vector."""
        nx, ny, nz = self.n_l
        w = np.asarray(widths_flat, dtype=np.float64).ravel()
        if w.size != nx + ny + nz:
            raise ValueError(f"expected {nx + ny + nz} widths, got {w.size}")
        return LorentzianBasisSpec(
            n=self.n,
            widths=(w[:nx].copy(), w[nx:nx + ny].copy(), w[nx + ny:].copy()),
            centers=self.centers,
        )

    def widths_flat(self) -> np.ndarray:
        return np.concatenate(self.widths)

    def same_layout(self, other: "LorentzianBasisSpec") -> bool:
        """True when grid size, widths, and centers all match exactly."""
        return (
            self.n == other.n
            and all(np.array_equal(a, b) for a, b in zip(self.widths, other.widths))
            and all(np.array_equal(a, b) for a, b in zip(self.centers, other.centers))
        )


def overlap_1d(spec: LorentzianBasisSpec, axis) -> np.ndarray:
    """1D overlap matrix S^(v) between the shifted LFs of one direction."""
    states = spec.state_matrix(axis)
    s = states @ states.T
    return 0.5 * (s + s.T)


def boundary_mass(spec: LorentzianBasisSpec, axis, margin: int = 3) -> np.ndarray:
    """Squared amplitude of each LF within ``margin`` points of the grid edge.

    Large values mean the (periodically wrapped) basis function leaks across
    the cell boundary, which a hard-walled physical cell would not support.
    """
    states = spec.state_matrix(axis)
    edge = np.r_[0:margin, spec.N - margin:spec.N]
    return np.sum(states[:, edge] ** 2, axis=1)
