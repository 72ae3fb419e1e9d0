"""Real conic programs with linear, second-order-cone and PSD blocks.

Programs are assembled from :class:`~irs_robust.affine.Affine` expressions via
:class:`ProgramBuilder` and solved with Clarabel.  Complex Hermitian LMIs are
mapped to real symmetric ones by :func:`embed_hermitian_lmi`.

Variable layout: variables are allocated in call order.  A complex entry
occupies two consecutive real slots ``(re, im)``; a Hermitian ``n x n`` variable
stores its real diagonal first, then the strictly upper triangle row by row as
``(re, im)`` pairs.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from .affine import Affine, as_affine, bmat, concatenate

DEFAULT_TOL = 1e-8


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class LinearRow:
    coeff: np.ndarray
    rhs: float
    sense: str  # "=" or ">="


@dataclass
class SocBlock:
    """||u_coeff x + u_const|| <= t_coeff . x + t_const"""

    t_coeff: np.ndarray
    t_const: float
    u_coeff: np.ndarray  # (L, n)
    u_const: np.ndarray  # (L,)


@dataclass
class PsdBlock:
    """const + sum_i x_i coeff[i] is PSD (real symmetric)."""

    coeff: np.ndarray  # (n, d, d)
    const: np.ndarray  # (d, d)

    @property
    def dim(self):
        return self.const.shape[0]


@dataclass
class ConicProgram:
    n_vars: int
    objective: np.ndarray
    linear_rows: list = field(default_factory=list)
    soc_blocks: list = field(default_factory=list)
    psd_blocks: list = field(default_factory=list)
    objective_offset: float = 0.0

    def residuals(self, x):
        """Largest scaled violation of each block family at ``x``."""
        x = np.asarray(x, dtype=float)
        lin = 0.0
        for r in self.linear_rows:
            v = r.coeff @ x - r.rhs
            viol = abs(v) if r.sense == "=" else max(-v, 0.0)
            lin = max(lin, viol / (1.0 + abs(r.rhs)))
        soc = 0.0
        for b in self.soc_blocks:
            t = b.t_coeff @ x + b.t_const
            u = b.u_coeff @ x + b.u_const
            soc = max(soc, max(np.linalg.norm(u) - t, 0.0) / (1.0 + abs(b.t_const) + np.linalg.norm(b.u_const)))
        psd = 0.0
        for b in self.psd_blocks:
            S = b.const + np.tensordot(x, b.coeff, axes=(0, 0))
            lam = np.linalg.eigvalsh(0.5 * (S + S.T))[0]
            psd = max(psd, max(-lam, 0.0) / (1.0 + np.linalg.norm(b.const)))
        return {"linear": lin, "soc": soc, "psd": psd}

    def max_residual(self, x):
        return max(self.residuals(x).values())

    def dump(self, stream=None):
        """Write a sparse-triplet text form (one nonzero per line) for cross-solver diffing."""
        out = stream if stream is not None else io.StringIO()
        out.write(f"n_vars {self.n_vars}\n")
        for j in np.flatnonzero(self.objective):
            out.write(f"c {j} {self.objective[j]:.17g}\n")
        for i, r in enumerate(self.linear_rows):
            out.write(f"lin {i} {r.sense} {r.rhs:.17g}\n")
            for j in np.flatnonzero(r.coeff):
                out.write(f"  a {j} {r.coeff[j]:.17g}\n")
        for i, b in enumerate(self.soc_blocks):
            out.write(f"soc {i} {len(b.u_const)} t0 {b.t_const:.17g}\n")
            for j in np.flatnonzero(b.t_coeff):
                out.write(f"  t {j} {b.t_coeff[j]:.17g}\n")
            for r in np.flatnonzero(b.u_const):
                out.write(f"  u0 {r} {b.u_const[r]:.17g}\n")
            for r, j in zip(*np.nonzero(b.u_coeff)):
                out.write(f"  u {r} {j} {b.u_coeff[r, j]:.17g}\n")
        for i, b in enumerate(self.psd_blocks):
            out.write(f"psd {i} {b.dim}\n")
            for r, c in zip(*np.nonzero(np.triu(b.const))):
                out.write(f"  s0 {r} {c} {b.const[r, c]:.17g}\n")
            for j, r, c in zip(*np.nonzero(np.triu(b.coeff))):
                out.write(f"  s {j} {r} {c} {b.coeff[j, r, c]:.17g}\n")
        return out.getvalue() if stream is None else None


@dataclass
class ConicSolution:
    status: Status
    x: np.ndarray
    objective_value: float
    solve_time: float = 0.0
    iterations: int = 0

    @property
    def ok(self):
        return self.status is Status.OPTIMAL


def embed_hermitian_lmi(H):
    """Map a Hermitian affine matrix to the real symmetric [[Re, -Im], [Im, Re]].

    Raises ``ValueError`` if the expression is not Hermitian.
    """
    H = as_affine(H)
    scale = 1.0 + np.abs(H.const).max(initial=0.0)
    if np.abs(H.const - H.const.conj().T).max(initial=0.0) > 1e-9 * scale:
        raise ValueError("constant part is not Hermitian")
    if H.n and np.abs(H.lin - np.conj(np.swapaxes(H.lin, 1, 2))).max() > 1e-9 * (1.0 + np.abs(H.lin).max()):
        raise ValueError("linear part is not Hermitian")
    re, im = H.real, H.imag
    return bmat([[re, -im], [im, re]])


def schur_norm_lmi(scalar, vec):
    """Real-embedded [[scalar, vec^H], [vec, I]], PSD iff ||vec||^2 <= scalar."""
    vec = as_affine(vec)
    L = vec.shape[0]
    s = as_affine(scalar).reshape(1, 1)
    v = vec.reshape(L, 1)
    return embed_hermitian_lmi(bmat([[s, v.H], [v, np.eye(L)]]))


class ProgramBuilder:
    """Collects variables and constraints and emits a :class:`ConicProgram`."""

    def __init__(self):
        self.n = 0
        self._objective = None
        self._lin = []
        self._soc = []
        self._psd = []

    # variables
    def real(self, shape=()):
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        size = int(np.prod(shape)) if shape else 1
        lin = np.zeros((self.n + size, size))
        lin[self.n + np.arange(size), np.arange(size)] = 1.0
        self.n += size
        return Affine(np.zeros(shape), lin.reshape((self.n,) + shape, order="F"))

    def complex(self, shape=()):
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        size = int(np.prod(shape)) if shape else 1
        lin = np.zeros((self.n + 2 * size, size), dtype=complex)
        k = np.arange(size)
        lin[self.n + 2 * k, k] = 1.0
        lin[self.n + 2 * k + 1, k] = 1j
        self.n += 2 * size
        return Affine(np.zeros(shape, dtype=complex), lin.reshape((self.n,) + shape, order="F"))

    def hermitian(self, dim):
        n_real = dim * dim
        lin = np.zeros((self.n + n_real, dim, dim), dtype=complex)
        pos = self.n
        for i in range(dim):
            lin[pos, i, i] = 1.0
            pos += 1
        for i in range(dim):
            for j in range(i + 1, dim):
                lin[pos, i, j] = 1.0
                lin[pos, j, i] = 1.0
                lin[pos + 1, i, j] = 1j
                lin[pos + 1, j, i] = -1j
                pos += 2
        self.n += n_real
        return Affine(np.zeros((dim, dim), dtype=complex), lin)

    # constraints
    @staticmethod
    def _real_parts(expr):
        expr = as_affine(expr)
        if np.abs(expr.const.imag).max(initial=0.0) > 1e-12 * (1 + np.abs(expr.const).max(initial=0.0)) or \
                (expr.n and np.abs(expr.lin.imag).max() > 1e-12 * (1 + np.abs(expr.lin).max())):
            raise ValueError("expression must be real")
        return expr.real

    def minimize(self, expr):
        self._objective = self._real_parts(expr)

    def maximize(self, expr):
        self.minimize(-as_affine(expr))

    def add_nonneg(self, expr):
        """Every entry of a real expression is >= 0."""
        self._lin.append((">=", self._real_parts(expr).reshape(-1)))

    def add_eq(self, expr):
        """Every entry equals zero; complex entries constrain both parts."""
        expr = as_affine(expr).reshape(-1)
        self._lin.append(("=", expr.real))
        if np.abs(expr.const.imag).any() or np.abs(expr.lin.imag).any():
            self._lin.append(("=", expr.imag))

    def add_soc(self, t, u):
        """||u|| <= t with u complex (split into real and imaginary parts) or real."""
        u = as_affine(u).reshape(-1)
        if np.abs(u.const.imag).any() or np.abs(u.lin.imag).any():
            u = concatenate([u.real, u.imag])
        self._soc.append((self._real_parts(t).reshape(()), self._real_parts(u)))

    def add_psd(self, S):
        """Real symmetric affine matrix is PSD."""
        S = self._real_parts(S)
        S = 0.5 * (S + S.T)
        self._psd.append(S)

    def add_hermitian_psd(self, H):
        self._psd.append(self._real_parts(embed_hermitian_lmi(H)))

    def build(self):
        n = self.n
        obj = np.zeros(n) if self._objective is None else self._objective.padded(n)
        prog = ConicProgram(n_vars=n, objective=np.zeros(n) if self._objective is None else obj.lin.real.copy(),
                            objective_offset=0.0 if self._objective is None else float(obj.const.real))
        for sense, e in self._lin:
            e = e.padded(n)
            for r in range(e.shape[0]):
                prog.linear_rows.append(LinearRow(e.lin[:, r].real.copy(), float(-e.const[r].real), sense))
        for t, u in self._soc:
            t, u = t.padded(n), u.padded(n)
            prog.soc_blocks.append(SocBlock(t.lin.real.copy(), float(t.const.real),
                                            u.lin.real.T.copy(), u.const.real.copy()))
        for S in self._psd:
            S = S.padded(n)
            prog.psd_blocks.append(PsdBlock(S.lin.real.copy(), S.const.real.copy()))
        return prog


def _svec_index(d):
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows, cols = np.array(rows), np.array(cols)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


def _to_clarabel(prog):
    n = prog.n_vars
    A_parts, b_parts, cones = [], [], []
    eq = [r for r in prog.linear_rows if r.sense == "="]
    ge = [r for r in prog.linear_rows if r.sense != "="]
    if eq:
        A_parts.append(sp.csr_matrix(np.array([r.coeff for r in eq])))
        b_parts.append(np.array([r.rhs for r in eq]))
        cones.append(clarabel.ZeroConeT(len(eq)))
    if ge:
        A_parts.append(sp.csr_matrix(-np.array([r.coeff for r in ge])))
        b_parts.append(-np.array([r.rhs for r in ge]))
        cones.append(clarabel.NonnegativeConeT(len(ge)))
    for b in prog.soc_blocks:
        A_parts.append(sp.csr_matrix(-np.vstack([b.t_coeff[None, :], b.u_coeff])))
        b_parts.append(np.concatenate([[b.t_const], b.u_const]))
        cones.append(clarabel.SecondOrderConeT(1 + len(b.u_const)))
    for b in prog.psd_blocks:
        rows, cols, scale = _svec_index(b.dim)
        A_parts.append(sp.csr_matrix(-(b.coeff[:, rows, cols] * scale).T))
        b_parts.append(b.const[rows, cols] * scale)
        cones.append(clarabel.PSDTriangleConeT(b.dim))
    A = sp.vstack(A_parts, format="csc") if A_parts else sp.csc_matrix((0, n))
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    return A, b, cones


def solve(prog, tol=DEFAULT_TOL, max_iter=200):
    """Solve ``prog`` with Clarabel and map the result to a :class:`ConicSolution`."""
    A, b, cones = _to_clarabel(prog)
    n = prog.n_vars
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol
    settings.max_iter = max_iter
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), np.asarray(prog.objective, float), A, b, cones, settings)
    res = solver.solve()
    x = np.asarray(res.x, dtype=float)
    name = str(res.status)
    obj = float(prog.objective @ x + prog.objective_offset) if len(x) == n else np.nan
    if name == "Solved":
        status = Status.OPTIMAL
    elif name == "AlmostSolved":
        status = Status.OPTIMAL if prog.max_residual(x) <= 1e-6 else Status.NUMERICAL_FAILURE
    elif name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = Status.INFEASIBLE
    elif name == "MaxIterations":
        status = Status.ITERATION_LIMIT
    else:
        status = Status.NUMERICAL_FAILURE
    return ConicSolution(status, x, obj, float(res.solve_time), int(res.iterations))
