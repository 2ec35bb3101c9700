"""Single-metric differential geometry on a coordinate chart.

Fields are numpy object arrays of :class:`~pencilkit.expr.Expr`.  Index
conventions used throughout the package:

* ``gamma[k, i, j]`` is the Christoffel symbol Γ^k_ij;
* ``R[l, k, i, j]`` is R^l_kij with R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y]Z,
  i.e. R^l_kij = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_is Γ^s_jk − Γ^l_js Γ^s_ik;
* on 1-forms (R_{X,Y} α)(Z) = −α(R(X,Y)Z).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import expr as ex
from .errors import AsymmetryDetected, DimensionError, SingularMetric
from .expr import Expr, Program
from .report import CheckReport, PASS, combine, judge, pointwise_residual, precondition_failed

COVARIANT = "covariant"
CONTRAVARIANT = "contravariant"

MAX_DIM = 4
DEGENERACY_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Chart:
    """Coordinate names, a sampling box and excluded loci.

    A point is admitted for sampling only if every exclusion expression has
    ``|value| >= 1e-9`` there.
    """

    coords: tuple
    box: tuple
    exclusions: tuple = ()

    def __post_init__(self):
        coords = tuple(str(c) for c in self.coords)
        box = tuple((float(a), float(b)) for a, b in self.box)
        if len(coords) < 1:
            raise DimensionError("a chart needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise DimensionError(f"duplicate coordinate names in {coords}")
        if len(box) != len(coords):
            raise DimensionError(f"box has {len(box)} intervals for {len(coords)} coordinates")
        for a, b in box:
            if not a < b:
                raise DimensionError(f"empty box interval [{a}, {b}]")
        excl = tuple(e if isinstance(e, Expr) else ex.parse(e, coords) for e in self.exclusions)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "exclusions", excl)

    @property
    def n(self) -> int:
        return len(self.coords)

    def parse(self, text) -> Expr:
        return ex.parse(text, self.coords)

    def var(self, i: int) -> Expr:
        return ex.var(self.coords[i])

    def sample(self, npoints: int, seed: int, guards: Sequence[Expr] = (),
               max_rounds: int = 200) -> np.ndarray:
        """Rejection-sample ``npoints`` admissible points from the box.

        ``guards`` are extra expressions (typically metric determinants) that
        must be finite with ``|value| > 1e-9`` at accepted points.
        """
        rng = np.random.default_rng(seed)
        lo = np.array([a for a, _ in self.box])
        hi = np.array([b for _, b in self.box])
        checks = list(self.exclusions) + list(guards)
        prog = Program(checks, self.coords) if checks else None
        accepted = []
        have = 0
        for _ in range(max_rounds):
            batch = lo + (hi - lo) * rng.random((max(2 * (npoints - have), 32), self.n))
            if prog is not None:
                vals = prog(batch, strict=False)
                ok = np.all(np.isfinite(vals) & (np.abs(vals) >= DEGENERACY_EPS), axis=1)
                batch = batch[ok]
            accepted.append(batch)
            have += len(batch)
            if have >= npoints:
                break
        pts = np.concatenate(accepted)[:npoints] if accepted else np.zeros((0, self.n))
        if len(pts) < npoints:
            raise SingularMetric(message=f"could only admit {len(pts)} of {npoints} sample points")
        return pts


# -- field containers ---------------------------------------------------

def _as_matrix(chart: Chart, rows, shape) -> np.ndarray:
    arr = np.asarray(rows, dtype=object)
    if arr.shape != shape:
        raise DimensionError(f"expected shape {shape}, got {arr.shape}")
    out = np.empty(shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = v if isinstance(v, Expr) else (ex.const(v) if isinstance(v, (int, float)) else chart.parse(v))
    return out


@dataclass(frozen=True, eq=False)
class MetricField:
    chart: Chart
    matrix: np.ndarray
    variance: str = CONTRAVARIANT

    def __post_init__(self):
        n = self.chart.n
        object.__setattr__(self, "matrix", _as_matrix(self.chart, self.matrix, (n, n)))
        if self.variance not in (COVARIANT, CONTRAVARIANT):
            raise ValueError(f"variance must be {COVARIANT!r} or {CONTRAVARIANT!r}")
        _require_symmetric(self.chart, self.matrix)

    @property
    def n(self):
        return self.chart.n

    def __getitem__(self, idx):
        return self.matrix[idx]

    @cached_property
    def det(self) -> Expr:
        return determinant(self.matrix)

    @cached_property
    def inverse(self) -> "MetricField":
        return invert_metric(self)

    @property
    def covariant(self) -> "MetricField":
        return self if self.variance == COVARIANT else self.inverse

    @property
    def contravariant(self) -> "MetricField":
        return self if self.variance == CONTRAVARIANT else self.inverse

    @cached_property
    def connection(self) -> "ConnectionField":
        return christoffel(self)

    @cached_property
    def curvature(self) -> "CurvatureField":
        return riemann(self.connection)

    def evaluate(self, points) -> np.ndarray:
        return ex.evaluate_array(self.matrix, points, self.chart.coords)


def _require_symmetric(chart: Chart, m: np.ndarray):
    n = m.shape[0]
    pending = [(i, j) for i in range(n) for j in range(i + 1, n) if m[i, j] is not m[j, i]]
    if not pending:
        return
    rng = np.random.default_rng(0)
    lo = np.array([a for a, _ in chart.box])
    hi = np.array([b for _, b in chart.box])
    pts = lo + (hi - lo) * rng.random((20, n))
    prog = Program([m[i, j] - m[j, i] for i, j in pending] + [m[i, j] for i, j in pending], chart.coords)
    vals = prog(pts, strict=False)
    k = len(pending)
    diff, scale = vals[:, :k], vals[:, k:]
    ok = np.isfinite(diff)
    if np.any(np.abs(diff[ok]) > 1e-12 * (1 + np.abs(scale[ok]))):
        raise AsymmetryDetected(f"metric matrix is not symmetric: {[pending[c] for c in np.where((np.abs(np.where(ok, diff, 0)) > 1e-12 * (1 + np.abs(np.where(ok, scale, 0)))).any(axis=0))[0]]}")


@dataclass(frozen=True, eq=False)
class VectorField:
    chart: Chart
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", _as_matrix(self.chart, self.components, (self.chart.n,)))

    def __getitem__(self, i):
        return self.components[i]


@dataclass(frozen=True, eq=False)
class OneForm:
    chart: Chart
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", _as_matrix(self.chart, self.components, (self.chart.n,)))

    def __getitem__(self, i):
        return self.components[i]


@dataclass(frozen=True, eq=False)
class ConnectionField:
    chart: Chart
    gamma: np.ndarray  # [k, i, j]

    def __getitem__(self, idx):
        return self.gamma[idx]


@dataclass(frozen=True, eq=False)
class CurvatureField:
    chart: Chart
    R: np.ndarray  # [l, k, i, j]

    def __getitem__(self, idx):
        return self.R[idx]


# -- linear algebra on Expr matrices -------------------------------------

def determinant(m: np.ndarray) -> Expr:
    n = m.shape[0]
    if n > MAX_DIM:
        raise DimensionError(f"symbolic inversion is limited to dimension <= {MAX_DIM}")
    if n == 1:
        return m[0, 0]
    if n == 2:
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    total = ex.ZERO
    for j in range(n):
        if m[0, j].is_zero():
            continue
        term = m[0, j] * determinant(_minor(m, 0, j))
        total = total + term if j % 2 == 0 else total - term
    return total


def _minor(m, i, j):
    keep_r = [r for r in range(m.shape[0]) if r != i]
    keep_c = [c for c in range(m.shape[1]) if c != j]
    return m[np.ix_(keep_r, keep_c)]


def adjugate(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    out = ex.expr_array((n, n))
    if n == 1:
        out[0, 0] = ex.ONE
        return out
    for i in range(n):
        for j in range(n):
            cof = determinant(_minor(m, i, j))
            out[j, i] = cof if (i + j) % 2 == 0 else -cof
    return out


def inverse_matrix(m: np.ndarray, det: Expr | None = None) -> np.ndarray:
    det = determinant(m) if det is None else det
    adj = adjugate(m)
    n = m.shape[0]
    out = ex.expr_array((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = adj[i, j] / det
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of Expr matrices (or matrix-vector)."""
    a2 = a if a.ndim == 2 else a[None, :]
    b2 = b if b.ndim == 2 else b[:, None]
    out = ex.expr_array((a2.shape[0], b2.shape[1]))
    for i in range(a2.shape[0]):
        for j in range(b2.shape[1]):
            out[i, j] = ex.total(a2[i, k] * b2[k, j] for k in range(a2.shape[1])
                                 if not (a2[i, k].is_zero() or b2[k, j].is_zero()))
    if a.ndim == 1:
        out = out[0]
    if b.ndim == 1:
        out = out[:, 0] if a.ndim == 2 else out[0]
    return out


def check_invertible(m: MetricField, points) -> None:
    """Raise SingularMetric with a witness if det vanishes at any point."""
    vals = Program([m.det], m.chart.coords)(points, strict=False)[:, 0]
    bad = ~np.isfinite(vals) | (np.abs(vals) <= DEGENERACY_EPS)
    if bad.any():
        raise SingularMetric(points[int(np.argmax(bad))])


# -- operations ------------------------------------------------------------

def invert_metric(m: MetricField, points=None) -> MetricField:
    """Symbolic inverse (adjugate over determinant) with the opposite variance."""
    if m.n > MAX_DIM:
        raise DimensionError(f"symbolic inversion is limited to dimension <= {MAX_DIM}")
    if points is not None:
        check_invertible(m, points)
    inv = inverse_matrix(m.matrix, m.det)
    for i in range(m.n):
        for j in range(i + 1, m.n):
            inv[j, i] = inv[i, j]
    other = CONTRAVARIANT if m.variance == COVARIANT else COVARIANT
    out = MetricField(m.chart, inv, other)
    # the inverse of the inverse is the original matrix, not a re-derived one
    out.__dict__["inverse"] = m
    return out


def christoffel(metric: MetricField) -> ConnectionField:
    """Levi-Civita connection, Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)."""
    chart = metric.chart
    n = chart.n
    cov = metric.covariant.matrix
    con = metric.contravariant.matrix
    names = chart.coords
    dg = np.empty((n, n, n), dtype=object)  # dg[l, i, j] = ∂_l g_ij
    for l in range(n):
        for i in range(n):
            for j in range(i, n):
                dg[l, i, j] = dg[l, j, i] = ex.differentiate(cov[i, j], names[l])
    # first kind: Γ_{l,ij} = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    first = np.empty((n, n, n), dtype=object)
    for l in range(n):
        for i in range(n):
            for j in range(i, n):
                first[l, i, j] = first[l, j, i] = ex.const(0.5) * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
    gamma = np.empty((n, n, n), dtype=object)
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                gamma[k, i, j] = gamma[k, j, i] = ex.total(
                    con[k, l] * first[l, i, j] for l in range(n)
                    if not (con[k, l].is_zero() or first[l, i, j].is_zero()))
    return ConnectionField(chart, gamma)


def riemann(conn: ConnectionField) -> CurvatureField:
    chart = conn.chart
    n = chart.n
    G = conn.gamma
    names = chart.coords
    R = ex.expr_array((n, n, n, n))
    for l in range(n):
        for k in range(n):
            for i in range(n):
                for j in range(i + 1, n):
                    val = ex.differentiate(G[l, j, k], names[i]) - ex.differentiate(G[l, i, k], names[j])
                    val = val + ex.total(G[l, i, s] * G[s, j, k] - G[l, j, s] * G[s, i, k] for s in range(n))
                    R[l, k, i, j] = val
                    R[l, k, j, i] = -val
    return CurvatureField(chart, R)


def connection_difference(a: ConnectionField, b: ConnectionField) -> np.ndarray:
    n = a.chart.n
    out = ex.expr_array((n, n, n))
    for idx in np.ndindex(n, n, n):
        out[idx] = a.gamma[idx] - b.gamma[idx]
    return out


def covariant_derivative_oneform(conn: ConnectionField, alpha: OneForm) -> np.ndarray:
    """(∇α)_ij = ∂_i α_j − Γ^k_ij α_k, returned as an n×n Expr matrix [i, j]."""
    n = conn.chart.n
    names = conn.chart.coords
    out = ex.expr_array((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = ex.differentiate(alpha[j], names[i]) - ex.total(
                conn.gamma[k, i, j] * alpha[k] for k in range(n))
    return out


def covariant_derivative_vector(conn: ConnectionField, X: VectorField) -> np.ndarray:
    """(∇X)^k_i = ∂_i X^k + Γ^k_is X^s as a matrix [k, i] (column i is ∇_{∂i} X)."""
    n = conn.chart.n
    names = conn.chart.coords
    out = ex.expr_array((n, n))
    for k in range(n):
        for i in range(n):
            out[k, i] = ex.differentiate(X[k], names[i]) + ex.total(
                conn.gamma[k, i, s] * X[s] for s in range(n))
    return out


def lower(m: MetricField, X: VectorField) -> OneForm:
    cov = m.covariant.matrix
    return OneForm(m.chart, matmul(cov, X.components))


def raise_(m: MetricField, alpha: OneForm) -> VectorField:
    con = m.contravariant.matrix
    return VectorField(m.chart, matmul(con, alpha.components))


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    n = X.chart.n
    names = X.chart.coords
    comps = [ex.total(X[j] * ex.differentiate(Y[i], names[j]) - Y[j] * ex.differentiate(X[i], names[j])
                      for j in range(n)) for i in range(n)]
    return VectorField(X.chart, np.array(comps, dtype=object))


def lie_derivative_metric(E: VectorField, m: MetricField) -> np.ndarray:
    """Lie derivative of a symmetric 2-tensor in the variance of ``m``."""
    return lie_derivative_tensor2(E, m.matrix, m.variance)


def lie_derivative_tensor2(E: VectorField, mat: np.ndarray, variance: str) -> np.ndarray:
    n = E.chart.n
    names = E.chart.coords
    dE = np.empty((n, n), dtype=object)  # dE[i, k] = ∂_k E^i
    for i in range(n):
        for k in range(n):
            dE[i, k] = ex.differentiate(E[i], names[k])
    out = ex.expr_array((n, n))
    for i in range(n):
        for j in range(n):
            transport = ex.total(E[k] * ex.differentiate(mat[i, j], names[k]) for k in range(n))
            if variance == CONTRAVARIANT:
                rest = ex.total(mat[k, j] * dE[i, k] + mat[i, k] * dE[j, k] for k in range(n))
                out[i, j] = transport - rest
            else:
                rest = ex.total(mat[k, j] * dE[k, i] + mat[i, k] * dE[k, j] for k in range(n))
                out[i, j] = transport + rest
    return out


def second_covariant_derivative_vector(conn: ConnectionField, X: VectorField) -> np.ndarray:
    """(∇∇X)^l_{xy} = ∇_x of the (1,1)-tensor ∇X, evaluated on ∂_y: array [l, x, y]."""
    n = conn.chart.n
    names = conn.chart.coords
    G = conn.gamma
    DX = covariant_derivative_vector(conn, X)  # [l, y]
    out = ex.expr_array((n, n, n))
    for l in range(n):
        for x in range(n):
            for y in range(n):
                out[l, x, y] = (ex.differentiate(DX[l, y], names[x])
                                + ex.total(G[l, x, s] * DX[s, y] for s in range(n))
                                - ex.total(G[s, x, y] * DX[l, s] for s in range(n)))
    return out


def metric_compatibility_residual(metric: MetricField, points) -> np.ndarray:
    """Per-point normalised |∇g| for the metric's own Levi-Civita connection."""
    n = metric.n
    cov = metric.covariant.matrix
    G = metric.connection.gamma
    names = metric.chart.coords
    terms = ex.expr_array((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                terms[k, i, j] = ex.differentiate(cov[i, j], names[k]) - ex.total(
                    G[s, k, i] * cov[s, j] + G[s, k, j] * cov[i, s] for s in range(n))
    vals = ex.evaluate_array(terms, points, names)
    scale = ex.evaluate_array(cov, points, names)
    return pointwise_residual(vals, np.zeros_like(vals), scale)


def check_killing_identity(g_tilde: MetricField, E: VectorField, D: float, points,
                           tol: float = 1e-8) -> CheckReport:
    """Conformal-Killing curvature identity g̃(R̃_{Z,X}E, Y) = g̃((∇̃²E)(Y, X), Z).

    Here (∇̃²E)(Y, X) = ∇̃_Y∇̃_X E − ∇̃_{∇̃_Y X}E.  With the opposite slot
    order the identity is false already on the round sphere, so this is the
    order that is checked.  The precondition L_E g̃ = D g̃ is verified first; if it fails the report
    carries that residual and no verdict on the identity.
    """
    chart = g_tilde.chart
    n = chart.n
    cov = g_tilde.covariant.matrix
    names = chart.coords
    lie = lie_derivative_metric(E, g_tilde.covariant)
    pre_vals = ex.evaluate_array(lie, points, names)
    cov_vals = ex.evaluate_array(cov, points, names)
    pre = judge("lie_derivative_conformal", pointwise_residual(pre_vals, D * cov_vals), points, tol)
    if not pre.passed:
        rep = precondition_failed("killing_identity", f"L_E g~ != {D} g~")
        rep.sub_verdicts.append(pre)
        rep.witnesses = pre.witness or []
        return rep
    R = g_tilde.curvature.R
    hess = second_covariant_derivative_vector(g_tilde.connection, E)
    Rv = ex.evaluate_array(R, points, names)          # [p, l, k, i, j]
    Ev = ex.evaluate_array(E.components, points, names)
    Hv = ex.evaluate_array(hess, points, names)       # [p, l, x, y]
    # LHS[z, x, y] = g_ly R^l_{k z x} E^k ; RHS[z, x, y] = g_lz (∇∇E)^l_{yx}
    lhs = np.einsum("ply,plkzx,pk->pzxy", cov_vals, Rv, Ev)
    rhs = np.einsum("plz,plyx->pzxy", cov_vals, Hv)
    ident = judge("identity", pointwise_residual(lhs, rhs), points, tol)
    return combine("killing_identity", [pre, ident], primary="identity")
