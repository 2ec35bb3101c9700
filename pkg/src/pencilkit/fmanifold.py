"""(Weak) 𝔉-manifolds, (weak) quasi-homogeneous pencils and the constructions
between them.

Index conventions: ``c[k, i, j]`` is c^k_ij with ∂_i·∂_j = c^k_ij ∂_k; the
operator T on 1-forms is stored as a matrix ``Tm[b, j]`` with
T(u)_j = u_b Tm[b, j].  The multiplication induced on T*M by g̃ is
α·β = g̃(g̃*α · g̃*β).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from . import expr as ex
from . import numeric as nu
from .circalg import structure
from .errors import (AsymmetryDetected, MissingPotential, NotAutomorphism,
                     NotInvertibleEulerMultiplication, PreconditionFailed)
from .geometry import (CONTRAVARIANT, COVARIANT, DEGENERACY_EPS, Chart, MetricField, VectorField,
                       covariant_derivative_vector, inverse_matrix, matmul, determinant)
from .pencil import DEFAULT_POINTS, DEFAULT_SEED, PencilSpec, check_almost_compatible, check_compatible
from .report import (DEFAULT_TOL, FAIL, PASS, CheckReport, SubVerdict, combine, judge, magnitude,
                     pointwise_residual, precondition_failed, timed)


def _expr_tensor(chart: Chart, values, shape):
    arr = np.asarray(values, dtype=object)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    out = np.empty(shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = v if isinstance(v, ex.Expr) else (
            ex.const(v) if isinstance(v, (int, float)) else chart.parse(v))
    return out


@dataclass(frozen=True, eq=False)
class FManSpec:
    """Multiplication c^k_ij, invariant metric g̃, Euler field E, constants k and D."""

    chart: Chart
    c: np.ndarray
    g_tilde: MetricField
    E: VectorField
    k: float = 1.0
    D: float = 1.0
    e: VectorField | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.chart.n
        object.__setattr__(self, "c", _expr_tensor(self.chart, self.c, (n, n, n)))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "D", float(self.D))
        if not isinstance(self.E, VectorField):
            object.__setattr__(self, "E", VectorField(self.chart, self.E))
        if self.e is not None and not isinstance(self.e, VectorField):
            object.__setattr__(self, "e", VectorField(self.chart, self.e))

    @property
    def d(self) -> float:
        """Degree of the associated pencil: d = 1 + k − D."""
        return 1.0 + self.k - self.D

    @property
    def euler_multiplication(self) -> np.ndarray:
        """(E·)^i_k = E^a c^i_ak."""
        if "EM" not in self._cache:
            n = self.chart.n
            m = ex.expr_array((n, n))
            for i in range(n):
                for kk in range(n):
                    m[i, kk] = ex.total(self.E[a] * self.c[i, a, kk] for a in range(n)
                                        if not (self.E[a].is_zero() or self.c[i, a, kk].is_zero()))
            self._cache["EM"] = m
        return self._cache["EM"]

    def guards(self):
        return [self.g_tilde.det]

    def sample(self, npoints=DEFAULT_POINTS, seed=DEFAULT_SEED):
        return self.chart.sample(npoints, seed, self.guards())

    def numerics(self, points) -> "FManNumerics":
        points = np.ascontiguousarray(points, dtype=float)
        key = points.tobytes() + str(points.shape).encode()
        got = self._cache.get(key)
        if got is None:
            got = self._cache[key] = FManNumerics(self, points)
        return got

    def perturbed(self, delta: float, index=(0, 1, 1)) -> "FManSpec":
        """Copy with ``delta`` added to one structure function and its mirror c^k_ji."""
        c = self.c.copy()
        kk, i, j = index
        c[kk, i, j] = c[kk, i, j] + ex.const(delta)
        if i != j:
            c[kk, j, i] = c[kk, j, i] + ex.const(delta)
        return FManSpec(self.chart, c, self.g_tilde, self.E, self.k, self.D, self.e)


def fman_from_potential(chart: Chart, F, g_tilde: MetricField, E, k=1.0, D=1.0, e=None) -> FManSpec:
    """Fill c^l_ij = η^{lk} ∂_i∂_j∂_k F from a WDVV-type potential."""
    n = chart.n
    F = F if isinstance(F, ex.Expr) else chart.parse(F)
    names = chart.coords
    third = np.empty((n, n, n), dtype=object)
    for i in range(n):
        fi = ex.differentiate(F, names[i])
        for j in range(n):
            fij = ex.differentiate(fi, names[j])
            for kk in range(n):
                third[i, j, kk] = ex.differentiate(fij, names[kk])
    inv = g_tilde.contravariant.matrix
    c = ex.expr_array((n, n, n))
    for l in range(n):
        for i in range(n):
            for j in range(n):
                c[l, i, j] = ex.total(inv[l, kk] * third[i, j, kk] for kk in range(n)
                                      if not (inv[l, kk].is_zero() or third[i, j, kk].is_zero()))
    if not isinstance(E, VectorField):
        E = VectorField(chart, E)
    if e is not None and not isinstance(e, VectorField):
        e = VectorField(chart, e)
    return FManSpec(chart, c, g_tilde, E, k, D, e)


# -- numerics -------------------------------------------------------------------

def _cov_derivative_vector(gamma, v, dv):
    """(∇v)^b_j = ∂_j v^b + Γ^b_js v^s as [p, b, j]."""
    return np.einsum("pjb->pbj", dv) + np.einsum("pbjs,ps->pbj", gamma, v)


def _hessian(gamma, dgamma, v, dv, ddv):
    """H[p, b, i, j] = ∇_i(∇v)^b_j."""
    DV = _cov_derivative_vector(gamma, v, dv)
    dDV = (np.einsum("pijb->pbij", ddv) + np.einsum("pibjs,ps->pbij", dgamma, v)
           + np.einsum("pbjs,pis->pbij", gamma, dv))
    return (dDV + np.einsum("pbis,psj->pbij", gamma, DV) - np.einsum("psij,pbs->pbij", gamma, DV))


def _solve_unity(cv):
    """Least-squares e with e^i c^k_ij = δ^k_j at each point; returns (e, residual)."""
    npts, n = cv.shape[0], cv.shape[1]
    e = np.empty((npts, n))
    res = np.empty(npts)
    rhs = np.eye(n).ravel()
    for p in range(npts):
        M = np.transpose(cv[p], (0, 2, 1)).reshape(n * n, n)  # rows (k, j), cols i
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        e[p] = sol
        res[p] = np.abs(M @ sol - rhs).max()
    return e, res


class FManNumerics:
    def __init__(self, spec: FManSpec, points: np.ndarray):
        self.spec = spec
        self.points = points
        coords = spec.chart.coords
        self.mjt = nu.metric_jet(spec.g_tilde, points)
        self.cjt = nu.levi_civita(self.mjt)
        self.cv, self.dc = nu.jet(spec.c, coords, points, 1)
        self.Ev, self.dE, self.ddE = nu.jet(spec.E.components, coords, points, 2)
        if spec.e is not None:
            self.ev = nu.jet(spec.e.components, coords, points, 0)[0]
            self.e_residual = None
        else:
            self.ev, self.e_residual = _solve_unity(self.cv)
        G = self.cjt.gamma
        self.DE = _cov_derivative_vector(G, self.Ev, self.dE)      # ∇̃_j E^b  [p, b, j]
        self.HE = _hessian(G, self.cjt.dgamma, self.Ev, self.dE, self.ddE)
        cv, dc = self.cv, self.dc
        self.Dc = (dc
                   + np.einsum("pkms,psij->pmkij", G, cv)
                   - np.einsum("psmi,pksj->pmkij", G, cv)
                   - np.einsum("psmj,pkis->pmkij", G, cv))         # ∇̃_m c^k_ij
        self.T4 = np.einsum("plm,pilJk->piJkm", self.mjt.H, self.Dc)   # g̃_lm ∇̃_i c^l_jk
        self.EM = np.einsum("pa,piak->pik", self.Ev, cv)
        self.dEM = np.einsum("pma,piak->pmik", self.dE, cv) + np.einsum("pa,pmiak->pmik", self.Ev, dc)
        # cotangent product M[a, b, j] = (dx^a·dx^b)_j
        self.M = np.einsum("pjl,plxy,pxa,pyb->pabj", self.mjt.H, cv, self.mjt.G, self.mjt.G)

    def t_matrix(self, d):
        n = self.spec.chart.n
        return 0.5 * (d - 1.0) * np.eye(n)[None] + self.DE

    def t_matrix_alt(self):
        """((D+k)/2)δ − g̃^{mb} ∇̃_m E^l g̃_lj."""
        s = self.spec
        n = s.chart.n
        return (0.5 * (s.D + s.k) * np.eye(n)[None]
                - np.einsum("pmb,plm,plj->pbj", self.mjt.G, self.DE, self.mjt.H))

    def cot_product(self, u, v):
        return np.einsum("pa,pb,pabj->pj", u, v, self.M)

    def euler_inverse_flat(self):
        """(E♭)⁻¹ = g̃(E⁻¹) with (E·)E⁻¹ = e solved pointwise."""
        v = np.linalg.solve(self.EM, self.ev[..., None])[..., 0]
        return np.einsum("pij,pj->pi", self.mjt.H, v)


# -- checks -------------------------------------------------------------------

def _points(spec, points, npoints=DEFAULT_POINTS, seed=DEFAULT_SEED):
    if points is None:
        return spec.sample(npoints, seed)
    return np.atleast_2d(np.asarray(points, dtype=float))


def check_algebra(f: FManSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """Commutativity, associativity and unity of the multiplication."""
    holder = {}
    with timed(holder):
        points = _points(f, points)
        num = f.numerics(points)
        cv = num.cv
        n = f.chart.n
        subs = [judge("commutativity", pointwise_residual(cv, cv.transpose(0, 1, 3, 2)), points, tol)]
        lhs = np.einsum("psij,plsk->plijk", cv, cv)       # ((∂i·∂j)·∂k)^l
        rhs = np.einsum("psjk,plis->plijk", cv, cv)       # (∂i·(∂j·∂k))^l
        subs.append(judge("associativity", pointwise_residual(lhs, rhs), points, tol))
        unit = np.einsum("pi,pkij->pkj", num.ev, cv)
        subs.append(judge("unity", pointwise_residual(unit, np.broadcast_to(np.eye(n), unit.shape)),
                          points, tol))
        notes = []
        if num.e_residual is not None:
            notes.append("unity solved pointwise from e^i c^k_ij = delta^k_j")
            if num.e_residual.max() > tol:
                notes.append("no unity: linear system inconsistent at some points")
    rep = combine("algebra", subs, notes=notes)
    rep.millis = holder["millis"]
    return rep


def check_invariant_metric(f: FManSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """g̃(∂i·∂j, ∂k) = g̃(∂i, ∂j·∂k)."""
    holder = {}
    with timed(holder):
        points = _points(f, points)
        num = f.numerics(points)
        H = num.mjt.H
        lhs = np.einsum("plij,plk->pijk", num.cv, H)
        rhs = np.einsum("pil,pljk->pijk", H, num.cv)
        sub = judge("invariance", pointwise_residual(lhs, rhs), points, tol)
    rep = combine("invariant_metric", [sub])
    rep.millis = holder["millis"]
    return rep


def check_euler(f: FManSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """L_E(·) = k·, L_E(g̃) = D g̃, E· invertible, T regular; both T forms compared."""
    holder = {}
    with timed(holder):
        points = _points(f, points)
        num = f.numerics(points)
        cv, dc, Ev, dE = num.cv, num.dc, num.Ev, num.dE
        lie_c = (np.einsum("pm,pmkij->pkij", Ev, dc) - np.einsum("pmij,pmk->pkij", cv, dE)
                 + np.einsum("pkmj,pim->pkij", cv, dE) + np.einsum("pkim,pjm->pkij", cv, dE))
        subs = [judge("lie_multiplication", pointwise_residual(lie_c, f.k * cv), points, tol)]
        H, dH = num.mjt.H, num.mjt.dH
        lie_g = (np.einsum("pm,pmij->pij", Ev, dH) + np.einsum("pmj,pim->pij", H, dE)
                 + np.einsum("pim,pjm->pij", H, dE))
        subs.append(judge("lie_metric", pointwise_residual(lie_g, f.D * H), points, tol))
        det_em = np.abs(np.linalg.det(num.EM))
        subs.append(_regular("euler_invertible", det_em, points))
        T = num.t_matrix(f.d)
        subs.append(_regular("t_regular", np.abs(np.linalg.det(T)), points))
        Talt = num.t_matrix_alt()
        diff = np.abs(T - Talt).max()
    rep = combine("euler", subs, data={"t_forms_max_difference": float(diff),
                                       "min_abs_det_T": float(np.abs(np.linalg.det(T)).min())})
    rep.millis = holder["millis"]
    return rep


def _regular(name, absdet, points):
    bad = absdet <= DEGENERACY_EPS
    if bad.any():
        i = int(np.argmin(absdet))
        return SubVerdict(name, FAIL, None, [{"point": points[i].tolist(), "abs_det": float(absdet[i])}])
    return SubVerdict(name, PASS, None, None)


def _require(report: CheckReport, check: str, reason: str):
    if not report.passed:
        rep = precondition_failed(check, reason, report)
        raise PreconditionFailed(f"{check}: {reason}", rep)


def check_weak_f_condition(f: FManSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """∇̃(·)(X,Y,Z,E) = ∇̃(·)(E,X,Y,Z) on coordinate frames."""
    holder = {}
    with timed(holder):
        points = _points(f, points)
        _require(check_algebra(f, points, tol), "weak_f_condition", "multiplication is not a unital algebra")
        _require(check_invariant_metric(f, points, tol), "weak_f_condition", "metric is not invariant")
        num = f.numerics(points)
        T4, Ev = num.T4, num.Ev
        lhs = np.einsum("pijkm,pm->pijk", T4, Ev)
        rhs = np.einsum("pm,pmijk->pijk", Ev, T4)
        scale = (magnitude(T4) * magnitude(Ev))[:, None]
        sub = judge("euler_symmetry", pointwise_residual(lhs, rhs, scale), points, tol)
    rep = combine("weak_f_condition", [sub])
    rep.millis = holder["millis"]
    return rep


def check_f_condition(f: FManSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """Total symmetry of the (4,0)-tensor ∇̃(·)."""
    holder = {}
    with timed(holder):
        points = _points(f, points)
        _require(check_algebra(f, points, tol), "f_condition", "multiplication is not a unital algebra")
        _require(check_invariant_metric(f, points, tol), "f_condition", "metric is not invariant")
        num = f.numerics(points)
        T4 = num.T4
        worst = np.zeros(len(points))
        for perm in permutations(range(4)):
            if perm == (0, 1, 2, 3):
                continue
            worst = np.maximum(worst, pointwise_residual(T4, T4.transpose((0,) + tuple(q + 1 for q in perm))))
        sub = judge("total_symmetry", worst, points, tol)
    rep = combine("f_condition", [sub])
    rep.millis = holder["millis"]
    return rep


def check_nijenhuis_euler(f: FManSpec, points=None, tol: float = DEFAULT_TOL,
                          require_weak: bool = True) -> CheckReport:
    """N_{E·} = 0."""
    from .pencil import nijenhuis_numeric
    holder = {}
    with timed(holder):
        points = _points(f, points)
        if require_weak:
            _require(check_weak_f_condition(f, points, tol), "nijenhuis_euler", "weak F-condition fails")
        num = f.numerics(points)
        N, scale = nijenhuis_numeric(num.EM, num.dEM)
        sub = judge("nijenhuis", magnitude(N) / (1.0 + scale), points, tol)
    rep = combine("nijenhuis_euler", [sub])
    rep.millis = holder["millis"]
    return rep


# -- T operator -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TOperator:
    """T on 1-forms: ``matrix`` is the ((d−1)/2)u + u(∇̃E) form, ``alt_matrix``
    the ((D+k)/2)u − g̃(∇̃_{g̃*u}E) form (when k is known)."""

    chart: Chart
    matrix: np.ndarray
    alt_matrix: np.ndarray | None
    d: float

    def apply(self, u):
        n = self.chart.n
        return np.array([ex.total(u[b] * self.matrix[b, j] for b in range(n)) for j in range(n)],
                        dtype=object)

    def det(self) -> ex.Expr:
        return determinant(self.matrix)

    def regularity(self, points) -> SubVerdict:
        vals = ex.evaluate_array(self.matrix, points, self.chart.coords)
        return _regular("t_regular", np.abs(np.linalg.det(vals)), np.asarray(points))

    def forms_difference(self, points) -> float:
        if self.alt_matrix is None:
            return float("nan")
        a = ex.evaluate_array(self.matrix, points, self.chart.coords)
        b = ex.evaluate_array(self.alt_matrix, points, self.chart.coords)
        return float(np.abs(a - b).max())


def t_operator(obj, points=None) -> TOperator:
    """T for a QHPencilSpec (degree d) or an FManSpec (d = 1 + k − D).

    With ``points`` the operator is checked to be invertible there and
    :class:`NotAutomorphism` is raised otherwise.
    """
    if isinstance(obj, FManSpec):
        chart, gt, E, d, k, D = obj.chart, obj.g_tilde, obj.E, obj.d, obj.k, obj.D
    else:
        chart, gt, E, d, D = obj.pencil.chart, obj.pencil.g_tilde, obj.E, obj.d, obj.D
        k = d + D - 1.0
    n = chart.n
    DE = covariant_derivative_vector(gt.connection, E)  # [b, j] = ∇̃_j E^b
    m = ex.expr_array((n, n))
    for b in range(n):
        for j in range(n):
            m[b, j] = DE[b, j] + ex.const(0.5 * (d - 1.0)) if b == j else DE[b, j]
    cov, con = gt.covariant.matrix, gt.contravariant.matrix
    alt = ex.expr_array((n, n))
    for b in range(n):
        for j in range(n):
            val = -ex.total(con[mm, b] * DE[l, mm] * cov[l, j] for mm in range(n) for l in range(n)
                            if not (con[mm, b].is_zero() or DE[l, mm].is_zero() or cov[l, j].is_zero()))
            alt[b, j] = val + ex.const(0.5 * (D + k)) if b == j else val
    T = TOperator(chart, m, alt, d)
    if points is not None:
        reg = T.regularity(points)
        if not reg.passed:
            raise NotAutomorphism(reg.witness[0]["point"], reg.residual)
    return T


# -- pencils from 𝔉-manifolds ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class QHPencilSpec:
    """A pencil with Euler data: degree d, bi-degree D, optional potential f and unity e."""

    pencil: PencilSpec
    E: VectorField
    d: float
    D: float | None = None
    f: ex.Expr | None = None
    e: VectorField | None = None

    def __post_init__(self):
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "D", 2.0 - self.d if self.D is None else float(self.D))
        if self.f is not None and not isinstance(self.f, ex.Expr):
            object.__setattr__(self, "f", self.pencil.chart.parse(self.f))

    @property
    def chart(self):
        return self.pencil.chart

    def sample(self, npoints=DEFAULT_POINTS, seed=DEFAULT_SEED):
        return self.pencil.sample(npoints, seed)


def build_pencil_from_fman(f: FManSpec, points=None) -> PencilSpec:
    """g^{ij} = (E·)^i_k g̃^{kj}, paired with g̃."""
    n = f.chart.n
    EM = f.euler_multiplication
    gt_con = f.g_tilde.contravariant.matrix
    g = matmul(EM, gt_con)
    if points is None:
        points = f.sample()
    dets = np.abs(ex.evaluate_array([determinant(EM)], points, f.chart.coords)[:, 0])
    if (dets <= DEGENERACY_EPS).any():
        i = int(np.argmin(dets))
        raise NotInvertibleEulerMultiplication(f"E· is not invertible at {points[i].tolist()}")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if pairs:
        vals = ex.evaluate_array([g[i, j] - g[j, i] for i, j in pairs], points, f.chart.coords)
        scale = ex.evaluate_array([g[i, j] for i, j in pairs], points, f.chart.coords)
        if (np.abs(vals) > 1e-9 * (1 + np.abs(scale))).any():
            raise AsymmetryDetected("g* = (E·)g~* is not symmetric: inconsistent input")
    for i, j in pairs:
        g[j, i] = g[i, j]
    return PencilSpec(f.chart, MetricField(f.chart, g, CONTRAVARIANT), f.g_tilde)


def qh_pencil_from_fman(f: FManSpec, points=None) -> QHPencilSpec:
    """The pencil of an 𝔉-manifold with its Euler data: bi-degree (1 + k − D, D)."""
    return QHPencilSpec(build_pencil_from_fman(f, points), f.E, f.d, f.D, None, f.e)


def check_built_pencil(f: FManSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """Degree bookkeeping for the built pencil: L_E(g*) = (k − D) g*."""
    holder = {}
    with timed(holder):
        points = _points(f, points)
        p = build_pencil_from_fman(f, points)
        num = p.numerics(points)
        fn = f.numerics(points)
        G, dG = num.mj.G, num.mj.dG
        lie = _lie_contravariant(G, dG, fn.Ev, fn.dE)
        sub = judge("lie_g_star", pointwise_residual(lie, (f.k - f.D) * G), points, tol)
    rep = combine("built_pencil", [sub])
    rep.millis = holder["millis"]
    return rep


def _lie_contravariant(G, dG, v, dv):
    """(L_v G)^{ij} = v^k ∂_k G^{ij} − G^{kj} ∂_k v^i − G^{ik} ∂_k v^j."""
    return (np.einsum("pk,pkij->pij", v, dG) - np.einsum("pkj,pki->pij", G, dv)
            - np.einsum("pik,pkj->pij", G, dv))


class _QHNumerics:
    def __init__(self, q: QHPencilSpec, points):
        coords = q.chart.coords
        self.num = q.pencil.numerics(points)
        self.Ev, self.dE, self.ddE = nu.jet(q.E.components, coords, points, 2)
        self.DEt = _cov_derivative_vector(self.num.cjt.gamma, self.Ev, self.dE)
        self.T = 0.5 * (q.d - 1.0) * np.eye(q.chart.n)[None] + self.DEt
        self.C = structure(self.num.mj.G, self.num.K)


def _require_compatible(q, points, tol, check):
    almost = check_almost_compatible(q.pencil, points, tol)
    _require(almost, check, "pencil is not almost compatible")
    comp = check_compatible(q.pencil, points, tol, almost=almost)
    _require(comp, check, "pencil is not compatible")


def check_weak_qh(q: QHPencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """L_E(g) = (1−d)g, L_E(g̃) = Dg̃, T automorphism and T(u) = g(E)∘u."""
    holder = {}
    with timed(holder):
        points = _points(q, points)
        _require_compatible(q, points, tol, "weak_qh")
        qn = _QHNumerics(q, points)
        num = qn.num
        subs = []
        lie = _lie_contravariant(num.mj.G, num.mj.dG, qn.Ev, qn.dE)
        subs.append(judge("lie_g", pointwise_residual(lie, (q.d - 1.0) * num.mj.G), points, tol))
        liet = _lie_contravariant(num.mjt.G, num.mjt.dG, qn.Ev, qn.dE)
        subs.append(judge("lie_g_tilde", pointwise_residual(liet, -q.D * num.mjt.G), points, tol))
        subs.append(_regular("t_regular", np.abs(np.linalg.det(qn.T)), points))
        gE = np.einsum("pai,pi->pa", num.mj.H, qn.Ev)
        rhs = np.einsum("pa,pabj->pbj", gE, qn.C)
        subs.append(judge("t_equals_gE_circ", pointwise_residual(qn.T, rhs), points, tol))
    rep = combine("weak_qh", subs, data={"d": q.d, "D": q.D})
    rep.millis = holder["millis"]
    return rep


def check_qh(q: QHPencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """Quasi-homogeneous pencil of degree d with potential f, plus the
    consequences ∇̃e = 0, ∇_X E = ((1−d)/2)X, L_E(g̃*) = (d−2)g̃*, T(u) = df∘u."""
    if q.f is None:
        raise MissingPotential("check_qh needs the potential f")
    holder = {}
    with timed(holder):
        points = _points(q, points)
        _require_compatible(q, points, tol, "qh")
        qn = _QHNumerics(q, points)
        num = qn.num
        coords = q.chart.coords
        n = q.chart.n
        fv, df, ddf = nu.jet([q.f], coords, points, 2)
        df, ddf = df[..., 0], ddf[..., 0]
        G, Gt = num.mj.G, num.mjt.G
        gradg = np.einsum("pij,pj->pi", G, df)
        gradgt = np.einsum("pij,pj->pi", Gt, df)
        # ∂_m of grad_g̃ f
        dgradgt = np.einsum("pmij,pj->pmi", num.mjt.dG, df) + np.einsum("pij,pmj->pmi", Gt, ddf)
        if q.e is not None:
            ev, dev = nu.jet(q.e.components, coords, points, 1)
        else:
            ev, dev = gradgt, dgradgt
        Ev, dE = qn.Ev, qn.dE
        subs = [judge("E_is_grad_g_f", pointwise_residual(Ev, gradg), points, tol),
                judge("e_is_grad_gt_f", pointwise_residual(ev, gradgt), points, tol)]
        bracket = np.einsum("pj,pji->pi", ev, dE) - np.einsum("pj,pji->pi", Ev, dev)
        subs.append(judge("bracket_e_E", pointwise_residual(bracket, ev), points, tol))
        subs.append(judge("lie_E_g_star", pointwise_residual(
            _lie_contravariant(G, num.mj.dG, Ev, dE), (q.d - 1.0) * G), points, tol))
        subs.append(judge("lie_e_g_star", pointwise_residual(
            _lie_contravariant(G, num.mj.dG, ev, dev), Gt), points, tol))
        subs.append(judge("lie_e_g_tilde_star", pointwise_residual(
            _lie_contravariant(Gt, num.mjt.dG, ev, dev), np.zeros_like(Gt), Gt), points, tol))
        subs.append(_regular("t_regular", np.abs(np.linalg.det(qn.T)), points))
        # consequences
        De = _cov_derivative_vector(num.cjt.gamma, ev, dev)
        subs.append(judge("e_parallel", pointwise_residual(De, np.zeros_like(De), dev), points, tol))
        DE = _cov_derivative_vector(num.cj.gamma, Ev, dE)
        subs.append(judge("cov_E", pointwise_residual(DE, np.broadcast_to(0.5 * (1.0 - q.d) * np.eye(n), DE.shape)), points, tol))
        subs.append(judge("lie_E_g_tilde_star", pointwise_residual(
            _lie_contravariant(Gt, num.mjt.dG, Ev, dE), (q.d - 2.0) * Gt), points, tol))
        rhs = np.einsum("pa,pabj->pbj", df, qn.C)
        subs.append(judge("t_equals_df_circ", pointwise_residual(qn.T, rhs), points, tol))
    rep = combine("qh", subs, data={"d": q.d})
    rep.millis = holder["millis"]
    return rep


# -- 𝔉-manifolds from pencils -------------------------------------------------------

def build_fman_from_pencil(q: QHPencilSpec, points=None, tol: float = DEFAULT_TOL,
                           require_weak_qh: bool = True) -> FManSpec:
    """u·v := u∘T⁻¹(v) on T*M, pushed to TM with g̃; unity e = g̃*g(E)."""
    p = q.pencil
    chart = p.chart
    n = chart.n
    if points is None:
        points = q.sample()
    if require_weak_qh:
        _require(check_weak_qh(q, points, tol), "build_fman", "pencil is not weak quasi-homogeneous")
    T = t_operator(q, points)
    Tinv = inverse_matrix(T.matrix)
    # C[a, b, j] = (dx^a∘dx^b)_j = −g^{ia} K^b_ij
    from .pencil import contorsion
    K = contorsion(p).K
    G = p.g_star.matrix
    C = ex.expr_array((n, n, n))
    for a in range(n):
        for b in range(n):
            for j in range(n):
                C[a, b, j] = -ex.total(G[i, a] * K[b, i, j] for i in range(n)
                                       if not (G[i, a].is_zero() or K[b, i, j].is_zero()))
    # cotangent product (dx^a·dx^b) = dx^a∘T⁻¹(dx^b) = Tinv[b, c] C[a, c, :]
    P = ex.expr_array((n, n, n))
    for a in range(n):
        for b in range(n):
            for j in range(n):
                P[a, b, j] = ex.total(Tinv[b, cc] * C[a, cc, j] for cc in range(n)
                                      if not (Tinv[b, cc].is_zero() or C[a, cc, j].is_zero()))
    cov, con = p.g_tilde.covariant.matrix, p.g_tilde.contravariant.matrix
    c = ex.expr_array((n, n, n))
    for l in range(n):
        for i in range(n):
            for j in range(n):
                c[l, i, j] = ex.total(con[l, jj] * P[a, b, jj] * cov[a, i] * cov[b, j]
                                      for jj in range(n) for a in range(n) for b in range(n)
                                      if not (con[l, jj].is_zero() or P[a, b, jj].is_zero()
                                              or cov[a, i].is_zero() or cov[b, j].is_zero()))
    gcov = p.g.covariant.matrix
    gE = matmul(gcov, q.E.components)
    e = VectorField(chart, matmul(con, gE))
    k = q.d + q.D - 1.0
    gt = p.g_tilde if p.g_tilde.variance == COVARIANT else p.g_tilde.covariant
    return FManSpec(chart, c, gt, q.E, k, q.D, e)


def check_cotangent_algebra(q: QHPencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """u·v = u∘T⁻¹(v) is commutative and associative with unity g(E), and
    g*(α, β) = (α·β)(E)."""
    holder = {}
    with timed(holder):
        points = _points(q, points)
        qn = _QHNumerics(q, points)
        num = qn.num
        absdet = np.abs(np.linalg.det(qn.T))
        if (absdet <= DEGENERACY_EPS).any():
            i = int(np.argmin(absdet))
            raise NotAutomorphism(points[i].tolist(), float(absdet[i]))
        Tinv = np.linalg.inv(qn.T)
        P = np.einsum("pbc,pacj->pabj", Tinv, qn.C)
        subs = [judge("commutativity", pointwise_residual(P, P.transpose(0, 2, 1, 3)), points, tol)]
        lhs = np.einsum("pabm,pmcj->pabcj", P, P)
        rhs = np.einsum("pbcm,pamj->pabcj", P, P)
        subs.append(judge("associativity", pointwise_residual(lhs, rhs), points, tol))
        gE = np.einsum("pai,pi->pa", num.mj.H, qn.Ev)
        unit = np.einsum("pa,pabj->pbj", gE, P)
        subs.append(judge("unity_gE", pointwise_residual(unit, np.broadcast_to(np.eye(q.chart.n), unit.shape)),
                          points, tol))
        pairing = np.einsum("pabj,pj->pab", P, qn.Ev)
        subs.append(judge("g_star_pairing", pointwise_residual(num.mj.G, pairing), points, tol))
    rep = combine("cotangent_algebra", subs)
    rep.millis = holder["millis"]
    return rep


def compare_fman(a: FManSpec, b: FManSpec, points, tol: float = DEFAULT_TOL) -> CheckReport:
    """Round-trip comparison of structure functions, unity and Euler field."""
    na, nb = a.numerics(points), b.numerics(points)
    subs = [judge("structure_functions", pointwise_residual(na.cv, nb.cv), points, tol),
            judge("unity", pointwise_residual(na.ev, nb.ev), points, tol),
            judge("euler", pointwise_residual(na.Ev, nb.Ev), points, tol)]
    return combine("round_trip", subs)


# -- curvature criteria ------------------------------------------------------------

def check_ec_identity(f: FManSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """∇_{g̃*γ}α − ∇̃_{g̃*γ}α = ½((D+k)α − 2∇̃_{g̃*α}E♭)·(E♭)⁻¹·γ."""
    holder = {}
    with timed(holder):
        points = _points(f, points)
        p = build_pencil_from_fman(f, points)
        num = p.numerics(points)
        fn = f.numerics(points)
        # lhs[c, a, j] with γ = dx^c, α = dx^a
        lhs = -np.einsum("pci,paij->pcaj", num.mjt.G, num.K)
        Q = fn.t_matrix_alt()                            # rows: T(dx^a)
        einv = fn.euler_inverse_flat()
        Qe = np.einsum("pax,py,pxyj->paj", Q, einv, fn.M)   # T(α)·(E♭)⁻¹
        rhs = np.einsum("paj,pcjk->pcak", Qe, fn.M)         # ·γ (commutative)
        sub = judge("euler_curvature", pointwise_residual(lhs, rhs), points, tol)
    rep = combine("ec_identity", [sub])
    rep.millis = holder["millis"]
    return rep


def check_curvature_relation(f: FManSpec, points=None, tol: float = DEFAULT_TOL,
                             require_weak: bool = True) -> CheckReport:
    """Curvature relation of the built pencil for a weak 𝔉-manifold.

    full:    R_{E·X,E·Y}α − R̃_{E·X,E·Y}α = ∇̃_{E·X}(·)(T(α)·(E♭)⁻¹, E♭·Y♭)
             − ∇̃_{E·Y}(·)(T(α)·(E♭)⁻¹, E♭·X♭) + ∇̃_{E·X}(T)(α)·Y♭ − ∇̃_{E·Y}(T)(α)·X♭
    reduced: the same without the ∇̃(·) terms (holds iff the 𝔉-condition holds).
    """
    holder = {}
    with timed(holder):
        points = _points(f, points)
        if require_weak:
            _require(check_weak_f_condition(f, points, tol), "curvature_relation", "weak F-condition fails")
        p = build_pencil_from_fman(f, points)
        num = p.numerics(points)
        fn = f.numerics(points)
        R, sc = num.curvature("g")
        Rt, sct = num.curvature("g_tilde")
        EM, H, Gt, M = fn.EM, fn.mjt.H, fn.mjt.G, fn.M
        # lhs[a, x, y, k] = −(R − R̃)^a_{k i j} (E·)^i_x (E·)^j_y
        lhs = -np.einsum("pakij,pix,pjy->paxyk", R - Rt, EM, EM)
        # ∇̃_i T^b_j for the ((D+k)/2) − g̃(∇̃_{g̃*u}E) form: −g̃^{mb} ∇̃_i(∇̃E)^l_m g̃_lj
        DT = -np.einsum("pmb,plim,plj->pibj", Gt, fn.HE, H)
        F = np.einsum("pix,piaj->paxj", EM, DT)            # ∇̃_{E·X}(T)(dx^a)
        Yflat_prod = np.einsum("pym,pjmk->pyjk", H, M)     # (· Y♭) as a map on 1-forms
        red = np.einsum("paxj,pyjk->paxyk", F, Yflat_prod)
        red = red - red.transpose(0, 1, 3, 2, 4)
        # ∇̃(·) on T*M: DM[i, b, c, k] = g̃_kl ∇̃_i c^l_pq g̃^{pb} g̃^{qc}
        DM = np.einsum("pkl,pilxy,pxb,pyc->pibck", H, fn.Dc, Gt, Gt)
        Q = fn.t_matrix_alt()
        einv = fn.euler_inverse_flat()
        beta = np.einsum("pax,py,pxyj->paj", Q, einv, M)   # T(α)·(E♭)⁻¹
        Eflat = np.einsum("pij,pj->pi", H, fn.Ev)
        gam = np.einsum("px,pym,pxmk->pyk", Eflat, H, M)   # E♭·Y♭
        nab = np.einsum("pix,pibck,pab,pyc->paxyk", EM, DM, beta, gam)
        nab = nab - nab.transpose(0, 1, 3, 2, 4)
        subs = [judge("full_identity", pointwise_residual(lhs, red + nab, red, nab), points, tol),
                judge("reduced_identity", pointwise_residual(lhs, red, nab), points, tol)]
    rep = combine("curvature_relation", subs, primary="full_identity",
                  notes=["reduced identity is the F-manifold criterion; compare with f_condition"])
    rep.millis = holder["millis"]
    return rep
