"""Fidelity-maximizing fit of a grid MO by a Lorentzian product basis.

The trial state contracts a 3-way core tensor d with per-direction LF states.
For fixed widths and centers the fidelity

    F(d) = |<ideal|trial>|^2 - P,   P = (alpha/n_prod) Tr((S - I)^2),

is maximized under the metric normalization d.S d = 1 by the top eigenpair of
the generalized problem (t t^T) d = kappa S d, where t collects the overlaps
between the ideal state and each 3D LF product basis (the T tensor).  Because
the left side is rank one, the maximal eigenpair is d ~ S^-1 t with
kappa_max = t.S^-1 t, evaluated in the subspace kept by canonical
orthogonalization of S.  Widths are then improved by projected gradient
ascent using the analytic derivative

    dF/da = 2 f g - kappa_max d.(dS/da) d - dP/da,

with f = sum(T d) and g the core-weighted derivative of T.

Everything here works in LF coefficient space; statevector assembly is
provided only for oracles and exports.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import basis as _basis
from .basis import MolecularOrbital, SimulationCell, build_ideal_state, sample_ao_1d
from .exceptions import ConditioningError
from .lorentzian import AXES, LorentzianBasisSpec, _axis_index, boundary_mass, lf_state, overlap_1d

__all__ = [
    "TTensor",
    "FitProblem",
    "TuckerState",
    "OptimizeOptions",
    "OptimizeDiagnostics",
    "m_integral",
    "t_tensor",
    "overlap_3d",
    "penalty",
    "solve_core",
    "fidelity_gradient",
    "optimize_widths",
    "box_centers",
    "tucker_statevector",
]

EIG_CUTOFF = 1e-10  # relative eigenvalue cutoff of canonical orthogonalization
WIDTH_BOUNDS = (1e-3, 50.0)


def _digest(*arrays) -> str:
    h = hashlib.sha1()
    for arr in arrays:
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class TTensor:
    """Overlaps between the ideal state and each 3D LF product basis."""

    values: np.ndarray  # (n_Lx, n_Ly, n_Lz)
    provenance: tuple[str, str, str]  # (MO id, cell id, spec hash)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise ValueError(f"T tensor must be 3-way, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("T tensor entries must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class FitProblem:
    """One MO, one cell, one LF basis layout, one penalty strength."""

    mo: MolecularOrbital
    cell: SimulationCell
    spec: LorentzianBasisSpec
    alpha_pen: float
    norm_factor: float
    ideal: _basis.GridState | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.alpha_pen < 0.0 or not math.isfinite(self.alpha_pen):
            raise ValueError(f"penalty strength must be >= 0, got {self.alpha_pen}")
        if self.spec.n != self.cell.n_qe:
            raise ValueError(
                f"spec is on a 2^{self.spec.n} grid but the cell uses n_qe={self.cell.n_qe}")

    @classmethod
    def build(
        cls,
        mo: MolecularOrbital,
        cell: SimulationCell,
        spec: LorentzianBasisSpec,
        alpha_pen: float = 0.0,
        max_qubits: int = _basis.DEFAULT_MAX_QUBITS,
        keep_ideal: bool = False,
    ) -> "FitProblem":
        state, norm_factor = build_ideal_state(mo, cell, max_qubits=max_qubits)
        return cls(mo=mo, cell=cell, spec=spec, alpha_pen=float(alpha_pen),
                   norm_factor=norm_factor, ideal=state if keep_ideal else None)

    def with_spec(self, spec: LorentzianBasisSpec) -> "FitProblem":
        return FitProblem(mo=self.mo, cell=self.cell, spec=spec,
                          alpha_pen=self.alpha_pen, norm_factor=self.norm_factor,
                          ideal=self.ideal)

    def provenance(self, spec: LorentzianBasisSpec | None = None) -> tuple[str, str, str]:
        spec = spec or self.spec
        mo_id = _digest(self.mo.coefficients,
                        *[np.concatenate([ao.exponents, ao.coefficients,
                                          np.asarray(ao.powers, dtype=float), ao.center])
                          for ao in self.mo.ao_list])
        cell_id = _digest(self.cell.origin, self.cell.edge_lengths,
                          np.asarray([self.cell.n_qe], dtype=float))
        spec_id = _digest(np.asarray([spec.n], dtype=float),
                          *spec.widths, *[c.astype(float) for c in spec.centers])
        return (mo_id, cell_id, spec_id)


@dataclass(frozen=True)
class OptimizeDiagnostics:
    iterations: int
    grad_norm: float
    converged: bool
    flags: tuple[str, ...]
    restart_fidelities: tuple[float, ...]
    fidelity_history: tuple[float, ...]
    discarded_dim: int


@dataclass(frozen=True, eq=False)
class TuckerState:
    """Optimized Tucker-form fit: core tensor d over the LF product basis."""

    spec: LorentzianBasisSpec
    core: np.ndarray          # d, shape (n_Lx, n_Ly, n_Lz), d.S d = 1
    fidelity: float           # F = squared_overlap - penalty
    squared_overlap: float    # |<ideal|trial>|^2
    penalty: float            # P at the optimized widths
    kappa_max: float          # top generalized eigenvalue, = F + P
    diagnostics: OptimizeDiagnostics | None = field(default=None, compare=False)


def m_integral(ao, axis, s: int, a: float, k_c: int, cell: SimulationCell) -> float:
    """One-axis overlap column: (L_v/sqrt(N)) sum_k h(k dx - tau~) L_{k-k_c}.

    Carries units of length^(m+1) through the h samples and the L_v/sqrt(N)
    prefactor.
    """
    v = _axis_index(axis)
    h = sample_ao_1d(ao, v, s, cell)
    lf = lf_state(cell.n_qe, a, k_c)
    pref = cell.edge_lengths[v] / math.sqrt(cell.N_qe)
    return pref * float(h @ lf)


class _Engine:
    """Caches the width-independent pieces of one fit problem.

    Primitive pairs (mu, s) are flattened to one axis p with weights
    w_p = c_mu * b_{mu s}; the h-sample tables H_v[p, k] never change during
    width optimization, so each evaluation only rebuilds LF profiles and the
    small per-direction matrices.
    """

    def __init__(self, problem: FitProblem):
        mo, cell, spec = problem.mo, problem.cell, problem.spec
        weights = []
        tables = [[], [], []]
        for ao, c in zip(mo.ao_list, mo.coefficients):
            for s in range(ao.n_g):
                weights.append(c * ao.coefficients[s])
                for v in range(3):
                    tables[v].append(sample_ao_1d(ao, v, s, cell))
        self.weights = np.asarray(weights)
        self.h = [np.stack(tables[v]) for v in range(3)]
        self.n = spec.n
        self.centers = spec.centers
        self.n_l = spec.n_l
        self.alpha = problem.alpha_pen
        L = cell.edge_lengths
        self.col_pref = L / math.sqrt(cell.N_qe)
        self.pref = problem.norm_factor / math.sqrt(float(np.prod(L)))

    def spec_for(self, widths: np.ndarray) -> LorentzianBasisSpec:
        nx, ny, nz = self.n_l
        return LorentzianBasisSpec(
            n=self.n,
            widths=(widths[:nx], widths[nx:nx + ny], widths[nx + ny:]),
            centers=self.centers,
        )

    def assemble(self, widths: np.ndarray):
        """Width-dependent pieces: spec, LF states, 1D metrics, M tables, T."""
        spec = self.spec_for(np.asarray(widths, dtype=np.float64))
        V = [spec.state_matrix(v) for v in range(3)]
        S1 = []
        for v in range(3):
            s = V[v] @ V[v].T
            S1.append(0.5 * (s + s.T))
        M = [self.col_pref[v] * (V[v] @ self.h[v].T) for v in range(3)]
        T = self.pref * np.einsum("p,xp,yp,zp->xyz", self.weights, M[0], M[1], M[2])
        return spec, V, S1, M, T

    def evaluate(self, widths: np.ndarray) -> "_Eval":
        spec, V, S1, M, T = self.assemble(widths)
        d, kappa, pen, degenerate, discarded = _solve_core_factored(T, S1, self.alpha)
        f = float(np.sum(T * d))
        return _Eval(spec=spec, widths=np.asarray(widths, dtype=np.float64).copy(),
                     V=V, S1=S1, M=M, T=T, core=d, kappa=kappa, pen=pen,
                     fidelity=kappa - pen, f=f, degenerate=degenerate,
                     discarded=discarded)

    def gradient(self, ev: "_Eval") -> np.ndarray:
        spec = ev.spec
        dV = [spec.state_da_matrix(v) for v in range(3)]
        dM = [self.col_pref[v] * (dV[v] @ self.h[v].T) for v in range(3)]
        w, M, d = self.weights, ev.M, ev.core
        Td = [
            self.pref * np.einsum("p,xp,yp,zp->xyz", w, dM[0], M[1], M[2]),
            self.pref * np.einsum("p,xp,yp,zp->xyz", w, M[0], dM[1], M[2]),
            self.pref * np.einsum("p,xp,yp,zp->xyz", w, M[0], M[1], dM[2]),
        ]
        g = [
            np.einsum("abc,abc->a", Td[0], d),
            np.einsum("abc,abc->b", Td[1], d),
            np.einsum("abc,abc->c", Td[2], d),
        ]
        Sx, Sy, Sz = ev.S1
        # D_v[i, j]: core contracted with the metric on the other two axes
        D = [
            np.einsum("abc,ABC,bB,cC->aA", d, d, Sy, Sz, optimize=True),
            np.einsum("abc,ABC,aA,cC->bB", d, d, Sx, Sz, optimize=True),
            np.einsum("abc,ABC,aA,bB->cC", d, d, Sx, Sy, optimize=True),
        ]
        q = [dV[v] @ ev.V[v].T for v in range(3)]
        tr1 = [float(np.trace(s)) for s in ev.S1]
        tr2 = [float(np.sum(s * s)) for s in ev.S1]
        n_prod = d.size
        grad = []
        for v in range(3):
            others = [u for u in range(3) if u != v]
            d_sdd = 2.0 * np.einsum("lj,lj->l", q[v], D[v])
            tr_s_ds = 2.0 * np.einsum("lj,lj->l", q[v], ev.S1[v])
            tr_ds = 2.0 * np.diag(q[v])
            d_pen = (2.0 * self.alpha / n_prod) * (
                tr_s_ds * tr2[others[0]] * tr2[others[1]]
                - tr_ds * tr1[others[0]] * tr1[others[1]]
            )
            grad.append(2.0 * ev.f * g[v] - ev.kappa * d_sdd - d_pen)
        return np.concatenate(grad)


@dataclass
class _Eval:
    spec: LorentzianBasisSpec
    widths: np.ndarray
    V: list
    S1: list
    M: list
    T: np.ndarray
    core: np.ndarray
    kappa: float
    pen: float
    fidelity: float
    f: float
    degenerate: bool
    discarded: int


def _penalty_from_s1(S1, alpha: float, n_prod: int) -> float:
    # Tr((S - I)^2) = prod Tr(Sv^2) - 2 prod Tr(Sv) + n_prod for S = kron(Sx, Sy, Sz)
    tr2 = 1.0
    tr1 = 1.0
    for s in S1:
        tr2 *= float(np.sum(s * s))
        tr1 *= float(np.trace(s))
    return (alpha / n_prod) * (tr2 - 2.0 * tr1 + n_prod)


def _degenerate_core(lam: np.ndarray, Q: list) -> np.ndarray:
    # T = 0: fidelity is flat in d, return the dominant metric eigenvector
    i, j, k = np.unravel_index(int(np.argmax(lam)), lam.shape)
    d = np.einsum("a,b,c->abc", Q[0][:, i], Q[1][:, j], Q[2][:, k])
    d = d / math.sqrt(float(lam[i, j, k]))
    flat = d.ravel()
    lead = flat[np.argmax(np.abs(flat))]
    return d if lead >= 0 else -d


def _solve_core_factored(T: np.ndarray, S1, alpha: float):
    """Top eigenpair of (t t^T) d = kappa S d using the per-axis eigenbases."""
    eigs = [np.linalg.eigh(s) for s in S1]
    Q = [e[1] for e in eigs]
    lam = np.einsum("i,j,k->ijk", eigs[0][0], eigs[1][0], eigs[2][0])
    lam_max = float(lam.max())
    if not math.isfinite(lam_max) or lam_max <= 0.0:
        raise ConditioningError("overlap metric has no positive eigenvalue",
                                discarded=T.size)
    keep = lam >= EIG_CUTOFF * lam_max
    discarded = int(T.size - np.count_nonzero(keep))
    tt = np.einsum("abc,ai,bj,ck->ijk", T, Q[0], Q[1], Q[2])
    kappa = float(np.sum(np.where(keep, tt * tt / np.where(keep, lam, 1.0), 0.0)))
    pen = _penalty_from_s1(S1, alpha, T.size)
    if kappa <= 0.0:
        return _degenerate_core(lam, Q), 0.0, pen, True, discarded
    dt = np.where(keep, tt / np.where(keep, lam, 1.0), 0.0)
    d = np.einsum("ijk,ai,bj,ck->abc", dt, Q[0], Q[1], Q[2]) / math.sqrt(kappa)
    if float(np.sum(T * d)) < 0.0:
        d = -d
    return d, kappa, pen, False, discarded


def t_tensor(problem: FitProblem) -> TTensor:
    """Assemble the T tensor for the problem's current spec."""
    engine = _Engine(problem)
    *_, T = engine.assemble(problem.spec.widths_flat())
    return TTensor(values=T, provenance=problem.provenance())


def overlap_3d(spec: LorentzianBasisSpec) -> np.ndarray:
    """Full product-basis overlap matrix S, (n_prod x n_prod), C-order vec."""
    s = np.kron(np.kron(overlap_1d(spec, 0), overlap_1d(spec, 1)), overlap_1d(spec, 2))
    return 0.5 * (s + s.T)


def penalty(spec: LorentzianBasisSpec, alpha_pen: float) -> float:
    """Orthonormality penalty (alpha/n_prod) Tr((S - I)^2)."""
    if alpha_pen < 0.0:
        raise ValueError(f"penalty strength must be >= 0, got {alpha_pen}")
    S1 = [overlap_1d(spec, v) for v in range(3)]
    return _penalty_from_s1(S1, alpha_pen, spec.n_prod)


def solve_core(T, S: np.ndarray, alpha_pen: float = 0.0):
    """Optimal core tensor for fixed widths, from the dense metric matrix.

    Returns (d, kappa_max, F) with d.S d = 1, sign fixed so sum(T d) >= 0,
    and F = kappa_max - P.  Eigenpairs of S below EIG_CUTOFF relative to the
    largest are discarded (canonical orthogonalization).
    """
    values = T.values if isinstance(T, TTensor) else np.asarray(T, dtype=np.float64)
    t = values.ravel()
    n_prod = t.size
    S = np.asarray(S, dtype=np.float64)
    if S.shape != (n_prod, n_prod):
        raise ValueError(f"metric shape {S.shape} does not match n_prod={n_prod}")
    if not np.all(np.isfinite(S)):
        raise ValueError("metric entries must be finite")
    w, Q = np.linalg.eigh(0.5 * (S + S.T))
    if w[-1] <= 0.0:
        raise ConditioningError("overlap metric has no positive eigenvalue",
                                discarded=n_prod)
    keep = w >= EIG_CUTOFF * w[-1]
    pen = (alpha_pen / n_prod) * (float(np.sum(S * S)) - 2.0 * float(np.trace(S)) + n_prod)
    tt = Q[:, keep].T @ t
    kappa = float(np.sum(tt * tt / w[keep]))
    if kappa <= 0.0:
        v = Q[:, -1] / math.sqrt(w[-1])
        lead = v[np.argmax(np.abs(v))]
        d = v if lead >= 0 else -v
        return d.reshape(values.shape), 0.0, -pen
    d = (Q[:, keep] @ (tt / w[keep])) / math.sqrt(kappa)
    if float(t @ d) < 0.0:
        d = -d
    return d.reshape(values.shape), kappa, kappa - pen


def fidelity_gradient(problem: FitProblem, d, kappa_max: float) -> np.ndarray:
    """Analytic dF/da at the problem's current widths, flat (x, y, z) order.

    ``d`` must be the solve_core optimum for those widths (the stationarity
    of d is what reduces the total derivative to this expression).
    """
    engine = _Engine(problem)
    ev = engine.evaluate(problem.spec.widths_flat())
    core = np.asarray(d, dtype=np.float64)
    if core.shape != ev.T.shape:
        raise ValueError(f"core shape {core.shape} does not match spec {ev.T.shape}")
    ev.core = core
    ev.kappa = float(kappa_max)
    ev.f = float(np.sum(ev.T * core))
    return engine.gradient(ev)


@dataclass(frozen=True)
class OptimizeOptions:
    max_iter: int = 2000
    grad_tol: float = 1e-7
    f_tol: float = 1e-12
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    width_bounds: tuple[float, float] = WIDTH_BOUNDS
    restarts: int = 1
    restart_jitter: float = 0.25
    seed: int = 0


def _ascend(engine: _Engine, a0: np.ndarray, opt: OptimizeOptions):
    lo, hi = opt.width_bounds
    a = np.clip(a0, lo, hi)
    ev = engine.evaluate(a)
    history = [ev.fidelity]
    flags: list[str] = []
    if ev.degenerate:
        return ev, 0, float("nan"), True, ["degenerate"], history
    iterations = 0
    grad_norm = float("inf")
    converged = False
    step = 1.0
    for iterations in range(1, opt.max_iter + 1):
        g = engine.gradient(ev)
        grad_norm = float(np.max(np.abs(np.clip(a + g, lo, hi) - a)))
        if grad_norm < opt.grad_tol:
            converged = True
            break
        step = min(1.0, 2.0 * step)
        accepted = None
        for _ in range(opt.max_backtracks):
            a_new = np.clip(a + step * g, lo, hi)
            move = a_new - a
            if not np.any(move):
                break
            trial = engine.evaluate(a_new)
            if trial.fidelity >= ev.fidelity + opt.armijo_c * float(g @ move):
                accepted = (a_new, trial)
                break
            step *= opt.backtrack_factor
        if accepted is None:
            flags.append("line-search-stalled")
            break
        a, new_ev = accepted
        improvement = new_ev.fidelity - ev.fidelity
        ev = new_ev
        history.append(ev.fidelity)
        if improvement < opt.f_tol:
            converged = True
            break
    else:
        flags.append("max-iter")
    if not converged:
        flags.append("unconverged")
    return ev, iterations, grad_norm, converged, flags, history


def optimize_widths(
    problem: FitProblem,
    init_widths=None,
    options: OptimizeOptions | None = None,
) -> TuckerState:
    """Projected gradient ascent on the widths; centers stay fixed.

    Restarts beyond the first jitter the initial widths multiplicatively
    (seeded); the best final fidelity wins.  A fit that stops by hitting
    max_iter or a stalled line search is returned flagged "unconverged"
    with the best iterate seen.
    """
    opt = options or OptimizeOptions()
    engine = _Engine(problem)
    if init_widths is None:
        a0 = problem.spec.widths_flat()
    else:
        a0 = np.asarray(init_widths, dtype=np.float64).ravel()
        if a0.size != sum(problem.spec.n_l):
            raise ValueError(f"expected {sum(problem.spec.n_l)} widths, got {a0.size}")
    if np.any(a0 <= 0.0) or not np.all(np.isfinite(a0)):
        raise ValueError("initial widths must be positive and finite")

    rng = np.random.default_rng(opt.seed)
    best = None
    restart_fids = []
    for r in range(max(1, opt.restarts)):
        start = a0 if r == 0 else a0 * np.exp(opt.restart_jitter * rng.standard_normal(a0.size))
        result = _ascend(engine, start, opt)
        restart_fids.append(result[0].fidelity)
        if best is None or result[0].fidelity > best[0].fidelity:
            best = result
    ev, iterations, grad_norm, converged, flags, history = best

    for v in range(3):
        mass = boundary_mass(ev.spec, v)
        for l in np.nonzero(mass > 1e-3)[0]:
            flags = list(flags) + [f"boundary-{AXES[v]}{l}"]
    diag = OptimizeDiagnostics(
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
        flags=tuple(flags),
        restart_fidelities=tuple(restart_fids),
        fidelity_history=tuple(history),
        discarded_dim=ev.discarded,
    )
    return TuckerState(
        spec=ev.spec,
        core=ev.core,
        fidelity=ev.fidelity,
        squared_overlap=ev.f * ev.f,
        penalty=ev.pen,
        kappa_max=ev.kappa,
        diagnostics=diag,
    )


def tucker_statevector(spec: LorentzianBasisSpec, core: np.ndarray) -> np.ndarray:
    """Assemble the trial state on the full grid (k_z fastest), for oracles."""
    V = [spec.state_matrix(v) for v in range(3)]
    d = np.asarray(core, dtype=np.float64)
    return np.einsum("abc,ai,bj,ck->ijk", d, V[0], V[1], V[2]).ravel()


def box_centers(cell: SimulationCell, box_min, box_edges, counts):
    """Regular center layout: n points per axis at box_min + (i + 1/2) L/n.

    Positions are rounded to the nearest grid index; an index collision or
    an index outside the cell raises, since duplicate centers would make the
    metric singular.
    """
    box_min = np.asarray(box_min, dtype=np.float64).ravel()
    box_edges = np.asarray(box_edges, dtype=np.float64).ravel()
    if box_min.size != 3 or box_edges.size != 3 or np.any(box_edges <= 0.0):
        raise ValueError("box_min and box_edges must be 3-vectors with positive edges")
    out = []
    for v in range(3):
        n_pts = int(counts[v])
        if n_pts < 1:
            raise ValueError(f"direction {AXES[v]}: need at least one center")
        pos = box_min[v] + (np.arange(n_pts) + 0.5) * (box_edges[v] / n_pts)
        idx = np.rint((pos - cell.origin[v]) / cell.dx[v]).astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= cell.N_qe):
            raise ValueError(f"direction {AXES[v]}: box centers fall outside the cell grid")
        if len(set(idx.tolist())) != n_pts:
            raise ValueError(
                f"direction {AXES[v]}: center rounding collided on the grid; "
                "use fewer centers or a finer grid")
        out.append(idx)
    return tuple(out)
