"""Metric pairs: the pencil g*_λ = g* + λ g̃*, the endomorphism A = g̃*g, its
Nijenhuis tensor, (almost) compatibility, flat pencils and semi-simplicity.

All identities are evaluated on coordinate frames ∂_i and coordinate
1-forms dx^a at sample points.  With K = Γ − Γ̃ (the contorsion), the
connection difference on 1-forms is (∇̃_i α − ∇_i α)_j = K^k_ij α_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from . import numeric as nu
from .errors import PreconditionFailed, SingularMetric, SingularPencil
from .geometry import (CONTRAVARIANT, DEGENERACY_EPS, Chart, MetricField, check_invertible,
                       connection_difference, matmul)
from .report import (DEFAULT_LAMBDAS, DEFAULT_TOL, FAIL, PASS, CheckReport, SubVerdict, combine,
                     judge, magnitude, pointwise_residual, precondition_failed, timed)

DEFAULT_POINTS = 100
DEFAULT_SEED = 42
MIN_LAMBDAS = 3
EIGEN_GAP = 1e-6


@dataclass(frozen=True, eq=False)
class PencilSpec:
    """An ordered pair of metrics on one chart plus the λ-samples.

    ``g`` and ``g_tilde`` may be given in either variance; ``g_star`` and
    ``g_tilde_star`` are the contravariant forms the pencil is built from.
    """

    chart: Chart
    g: MetricField
    g_tilde: MetricField
    lambdas: tuple = DEFAULT_LAMBDAS
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.g.chart.coords != self.chart.coords or self.g_tilde.chart.coords != self.chart.coords:
            raise ValueError("both metrics must live on the pencil's chart")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))

    @property
    def g_star(self) -> MetricField:
        return self.g.contravariant

    @property
    def g_tilde_star(self) -> MetricField:
        return self.g_tilde.contravariant

    def swapped(self) -> "PencilSpec":
        return PencilSpec(self.chart, self.g_tilde, self.g, self.lambdas)

    def guards(self):
        return [self.g.det, self.g_tilde.det]

    def sample(self, npoints: int = DEFAULT_POINTS, seed: int = DEFAULT_SEED) -> np.ndarray:
        return self.chart.sample(npoints, seed, self.guards())

    def numerics(self, points) -> "PencilNumerics":
        points = np.ascontiguousarray(points, dtype=float)
        key = points.tobytes() + str(points.shape).encode()
        got = self._cache.get(key)
        if got is None:
            if len(self._cache) > 8:
                self._cache.clear()
            got = self._cache[key] = PencilNumerics(self, points)
        return got


def resolve_points(spec, points, npoints=DEFAULT_POINTS, seed=DEFAULT_SEED):
    if points is None:
        return spec.sample(npoints, seed)
    return np.atleast_2d(np.asarray(points, dtype=float))


class PencilNumerics:
    """Jets of both metrics, their connections and curvatures at fixed points."""

    def __init__(self, spec: PencilSpec, points: np.ndarray):
        self.spec = spec
        self.points = points
        for m in (spec.g, spec.g_tilde):
            check_invertible(m, points)
        self.mj = nu.metric_jet(spec.g, points)
        self.mjt = nu.metric_jet(spec.g_tilde, points)
        self.cj = nu.levi_civita(self.mj)
        self.cjt = nu.levi_civita(self.mjt)
        self.K = self.cj.gamma - self.cjt.gamma
        self.dK = self.cj.dgamma - self.cjt.dgamma
        self._curv = {}
        self._lam = {}
        self.notes = []
        self._valid = None

    def curvature(self, which: str):
        if which not in self._curv:
            self._curv[which] = nu.curvature(self.cj if which == "g" else self.cjt)
        return self._curv[which]

    def valid_lambdas(self):
        """λ-samples at which g*_λ is non-degenerate at every point."""
        if self._valid is None:
            valid = []
            for lam in self.spec.lambdas:
                det = np.linalg.det(self.mj.G + lam * self.mjt.G)
                bad = np.abs(det) <= DEGENERACY_EPS
                if bad.any():
                    w = self.points[int(np.argmax(bad))]
                    self.notes.append(f"lambda={lam:g} skipped: g*_lambda degenerate at {w.tolist()}")
                else:
                    valid.append(lam)
            if len(valid) < min(MIN_LAMBDAS, len(self.spec.lambdas)):
                raise SingularPencil(message=f"only {len(valid)} non-degenerate lambda samples")
            self._valid = valid
        return self._valid

    def pencil(self, lam: float):
        """(metric jet, connection jet) of g_λ."""
        if lam not in self._lam:
            mj = self.mj.combine(self.mjt, lam)
            self._lam[lam] = (mj, nu.levi_civita(mj))
        return self._lam[lam]

    def pencil_curvature(self, lam: float):
        mj, cj = self.pencil(lam)
        key = ("R", lam)
        if key not in self._lam:
            self._lam[key] = nu.curvature(cj)
        return self._lam[key]

    @property
    def A(self):
        """A^i_j = g̃^{ik} g_kj and ∂_m A."""
        if "A" not in self._curv:
            A = np.einsum("pik,pkj->pij", self.mjt.G, self.mj.H)
            dA = (np.einsum("pmik,pkj->pmij", self.mjt.dG, self.mj.H)
                  + np.einsum("pik,pmkj->pmij", self.mjt.G, self.mj.dH))
            self._curv["A"] = (A, dA)
        return self._curv["A"]


# -- symbolic constructions -----------------------------------------------

def pencil_metric(p: PencilSpec, lam: float) -> MetricField:
    """g*_λ as a contravariant MetricField; affine in λ by construction."""
    n = p.chart.n
    a, b = p.g_star.matrix, p.g_tilde_star.matrix
    m = ex.expr_array((n, n))
    for i in range(n):
        for j in range(n):
            m[i, j] = a[i, j] + ex.const(lam) * b[i, j]
    return MetricField(p.chart, m, CONTRAVARIANT)


def operator_A(p: PencilSpec) -> np.ndarray:
    """A^i_j = g̃^{ik} g_kj as an Expr matrix."""
    return matmul(p.g_tilde_star.matrix, p.g.covariant.matrix)


def nijenhuis(A: np.ndarray, coords: Sequence[str]) -> np.ndarray:
    """N_A(∂_i, ∂_j)^k as an Expr array [k, i, j].

    N_A(X, Y) = −[AX, AY] + A[AX, Y] + A[X, AY] − A²[X, Y], i.e.
    N^k_ij = −(A^s_i ∂_s A^k_j − A^s_j ∂_s A^k_i) + A^k_s(∂_i A^s_j − ∂_j A^s_i).
    """
    n = A.shape[0]
    coords = getattr(coords, "coords", coords)
    dA = np.empty((n, n, n), dtype=object)  # dA[s, k, j] = ∂_s A^k_j
    for s in range(n):
        for k in range(n):
            for j in range(n):
                dA[s, k, j] = ex.differentiate(A[k, j], coords[s])
    N = ex.expr_array((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(i + 1, n):
                val = ex.total(A[s, j] * dA[s, k, i] - A[s, i] * dA[s, k, j]
                               + A[k, s] * (dA[i, s, j] - dA[j, s, i]) for s in range(n))
                N[k, i, j] = val
                N[k, j, i] = -val
    return N


def nijenhuis_numeric(A, dA):
    """Pointwise N^k_ij from A[p, k, j] and dA[p, s, k, j]; also the term scale."""
    t1 = np.einsum("psj,pski->pkij", A, dA)
    t2 = np.einsum("psi,pskj->pkij", A, dA)
    t3 = np.einsum("pks,pisj->pkij", A, dA)
    t4 = np.einsum("pks,pjsi->pkij", A, dA)
    N = t1 - t2 + t3 - t4
    npts = N.shape[0]
    scale = np.max(np.abs(np.stack([t1, t2, t3, t4]).reshape(4, npts, -1)), axis=(0, 2))
    return N, scale


@dataclass(frozen=True, eq=False)
class ContorsionField:
    chart: Chart
    K: np.ndarray  # [k, i, j] = Γ^k_ij − Γ̃^k_ij

    def __getitem__(self, idx):
        return self.K[idx]


def contorsion(p: PencilSpec) -> ContorsionField:
    return ContorsionField(p.chart, connection_difference(p.g.connection, p.g_tilde.connection))


# -- checks -------------------------------------------------------------------

def _scale_col(s):
    return np.asarray(s)[:, None]


def check_almost_compatible(p: PencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """Affine law for the pencil connection (λ-sampled) and N_A = 0: two verdicts that must agree."""
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        num = p.numerics(points)
        lams = num.valid_lambdas()
        G, Gt = num.mj.G, num.mjt.G
        base = np.einsum("pmj,paij->pmai", G, num.cj.gamma)
        base_t = np.einsum("pmj,paij->pmai", Gt, num.cjt.gamma)
        worst = np.zeros(len(points))
        worst_lam = np.full(len(points), lams[0])
        for lam in lams:
            mj, cj = num.pencil(lam)
            lhs = np.einsum("pmj,paij->pmai", mj.G, cj.gamma)
            rhs = base + lam * base_t
            r = pointwise_residual(lhs, rhs, base, lam * base_t)
            upd = r > worst
            worst = np.where(upd, r, worst)
            worst_lam = np.where(upd, lam, worst_lam)
        sub_a = judge("pencil_connection", worst, points, tol, extra={"lambda": worst_lam})
        A, dA = num.A
        N, scale = nijenhuis_numeric(A, dA)
        sub_b = judge("nijenhuis", magnitude(N) / (1.0 + scale), points, tol)
    rep = combine("almost_compatible", [sub_a, sub_b], require_agreement=True,
                  notes=list(num.notes), data={"lambdas": lams})
    rep.millis = holder["millis"]
    return rep


def _require_almost(p, points, tol, almost, check):
    if almost is None:
        almost = check_almost_compatible(p, points, tol)
    if not almost.passed:
        rep = precondition_failed(check, "pair is not almost compatible", almost)
        raise PreconditionFailed(f"{check}: pair is not almost compatible", rep)
    return almost


def _contorsion_square(Ginv, K):
    # S[a, b, i, j] = G^{mn} K^a_jm K^b_in
    return np.einsum("pmn,pajm,pbin->pabij", Ginv, K, K)


def check_compatible(p: PencilSpec, points=None, tol: float = DEFAULT_TOL,
                     almost: CheckReport | None = None) -> CheckReport:
    """Curvature-pencil identity, condition with g*, condition with g̃*: must agree."""
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        _require_almost(p, points, tol, almost, "compatible")
        num = p.numerics(points)
        lams = num.valid_lambdas()
        R, sc = num.curvature("g")
        Rt, sct = num.curvature("g_tilde")
        G, Gt = num.mj.G, num.mjt.G
        base = np.einsum("pmk,pakij->pmaij", G, R)
        base_t = np.einsum("pmk,pakij->pmaij", Gt, Rt)
        gmag = magnitude(G)
        gtmag = magnitude(Gt)
        worst = np.zeros(len(points))
        worst_lam = np.full(len(points), lams[0])
        for lam in lams:
            mj, _ = num.pencil(lam)
            Rl, scl = num.pencil_curvature(lam)
            lhs = np.einsum("pmk,pakij->pmaij", mj.G, Rl)
            rhs = base + lam * base_t
            extra = _scale_col(np.maximum.reduce([scl * magnitude(mj.G), sc * gmag,
                                                  abs(lam) * sct * gtmag]))
            r = pointwise_residual(lhs, rhs, extra)
            upd = r > worst
            worst = np.where(upd, r, worst)
            worst_lam = np.where(upd, lam, worst_lam)
        sub1 = judge("curvature_pencil", worst, points, tol, extra={"lambda": worst_lam})
        subs = [sub1]
        for name, Ginv in (("condition_g", G), ("condition_g_tilde", Gt)):
            S = _contorsion_square(Ginv, num.K)
            subs.append(judge(name, pointwise_residual(S, S.transpose(0, 1, 2, 4, 3)), points, tol))
    rep = combine("compatible", subs, require_agreement=True, notes=list(num.notes),
                  data={"lambdas": lams})
    rep.millis = holder["millis"]
    return rep


def check_prop_au(p: PencilSpec, points=None, tol: float = DEFAULT_TOL,
                  almost: CheckReport | None = None) -> CheckReport:
    """g*(∇̃_{g̃*γ}α − ∇_{g̃*γ}α) = g̃*(∇̃_{g*γ}α − ∇_{g*γ}α) on coordinate forms."""
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        _require_almost(p, points, tol, almost, "prop_au")
        num = p.numerics(points)
        G, Gt, K = num.mj.G, num.mjt.G, num.K
        lhs = np.einsum("pnj,pci,paij->pnca", G, Gt, K)
        rhs = np.einsum("pnj,pci,paij->pnca", Gt, G, K)
        sub = judge("identity", pointwise_residual(lhs, rhs), points, tol)
    rep = combine("prop_au", [sub])
    rep.millis = holder["millis"]
    return rep


def check_flat_pencil(p: PencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """R^λ = 0 at every λ-sample, with |R| and |R̃| reported separately."""
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        num = p.numerics(points)
        lams = num.valid_lambdas()
        worst = np.zeros(len(points))
        worst_lam = np.full(len(points), lams[0])
        for lam in lams:
            Rl, scl = num.pencil_curvature(lam)
            r = magnitude(Rl) / (1.0 + scl)
            upd = r > worst
            worst = np.where(upd, r, worst)
            worst_lam = np.where(upd, lam, worst_lam)
        subs = [judge("pencil_curvature", worst, points, tol, extra={"lambda": worst_lam})]
        for name, which in (("curvature_g", "g"), ("curvature_g_tilde", "g_tilde")):
            R, sc = num.curvature(which)
            subs.append(judge(name, magnitude(R) / (1.0 + sc), points, tol))
    rep = combine("flat_pencil", subs, notes=list(num.notes), data={"lambdas": lams})
    rep.millis = holder["millis"]
    return rep


def check_semisimple(p: PencilSpec, points=None, tol: float = DEFAULT_TOL) -> CheckReport:
    """Pointwise-distinct real eigenvalues of A = g̃*g (gap > 1e-6 everywhere).

    The semi-simplicity definition speaks of eigenvalues of N_A, which
    vanishes for every almost-compatible pair; the proof diagonalises A, so
    the verdict is taken on A.  For transparency the largest eigenvalue
    modulus of N_A(∂_i, ·) is reported alongside.
    """
    holder = {}
    with timed(holder):
        points = resolve_points(p, points)
        num = p.numerics(points)
        A, dA = num.A
        eig = np.linalg.eigvals(A)
        notes = ["semi-simplicity judged on eigenvalues of A = g~* g; "
                 "eigenvalues of N_A(d_i, .) reported in data.nijenhuis_eigen_max"]
        n = A.shape[1]
        imag = np.abs(eig.imag).max(axis=1)
        complex_pts = imag > 1e-9 * (1.0 + np.abs(eig).max(axis=1))
        if n > 1:
            diffs = np.abs(eig[:, :, None] - eig[:, None, :])
            diffs[:, np.arange(n), np.arange(n)] = np.inf
            gap = diffs.min(axis=(1, 2))
        else:
            gap = np.full(len(points), np.inf)
        gap = np.where(complex_pts, 0.0, gap)
        bad = gap <= EIGEN_GAP
        if complex_pts.any():
            notes.append("complex eigenvalues of A at some sample points (treated as not semi-simple)")
        if bad.any():
            order = np.argsort(gap)[:3]
            witness = [{"point": points[i].tolist(), "min_gap": float(gap[i]),
                        "eigenvalues": [complex(z).real for z in eig[i]]} for i in order]
            sub = SubVerdict("eigenvalue_gap", FAIL, float(gap.min()), witness)
        else:
            sub = SubVerdict("eigenvalue_gap", PASS, float(gap.min()), None)
        N, _ = nijenhuis_numeric(A, dA)
        neig = max((np.abs(np.linalg.eigvals(N[:, :, i, :])).max() for i in range(n)), default=0.0)
    rep = combine("semisimple", [sub], notes=notes,
                  data={"min_gap": float(gap.min()), "nijenhuis_eigen_max": float(neig)})
    rep.residual = None
    rep.millis = holder["millis"]
    return rep
