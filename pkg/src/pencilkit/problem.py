"""Problem files: TOML descriptions of a chart, a metric pair, an 𝔉-manifold,
quasi-homogeneity data and embeddings, plus the checks to run on them.

Layout (every block except ``chart`` is optional)::

    name = "semisimple-diag-2d"
    checks = ["almost_compatible", "compatible"]

    [chart]        coords, box, exclusions
    [metrics]      variance, g, g_tilde          (matrices of expression strings)
    [fman]         potential + eta, or c = [[k, i, j, "expr"], ...] + g_tilde;
                   E, e, k, D                    (indices are 1-based)
    [qh]           d, D, f
    [[embeddings]] name, params, box, components
    [sampling]     seed, points, tol, lambdas
    [expected]     check name -> verdict         (used by the bundled corpus)
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import (ClosureFailed, ConfigError, MissingPotential, NotAutomorphism, NotDistinguished,
                     NotInvertibleEulerMultiplication, PencilkitError, PreconditionFailed, RankDeficient,
                     SingularMetric)
from .geometry import CONTRAVARIANT, COVARIANT, Chart, MetricField
from .pencil import DEFAULT_POINTS, DEFAULT_SEED, PencilSpec
from .report import DEFAULT_LAMBDAS, DEFAULT_TOL, FAIL, CheckReport, SubVerdict, precondition_failed

PENCIL_CHECKS = ("almost_compatible", "compatible", "prop_au", "flat_pencil", "semisimple", "invariance",
                 "right_symmetry", "curvature_circ", "dn_operator", "bi_hamiltonian")
FMAN_CHECKS = ("algebra", "invariant_metric", "euler", "weak_f_condition", "f_condition", "nijenhuis_euler",
               "built_pencil", "ec_identity", "curvature_relation")
QH_CHECKS = ("weak_qh", "qh", "cotangent_algebra", "round_trip")
EMBEDDING_CHECKS = ("distinguished", "induced_compatibility", "fman_submanifold")
# hard-coded dependency order: almost-compatibility is settled before anything built on it
ORDER = FMAN_CHECKS + PENCIL_CHECKS + QH_CHECKS + EMBEDDING_CHECKS
NEEDS_ALMOST = ("compatible", "prop_au", "right_symmetry")


@dataclass
class Sampling:
    seed: int = DEFAULT_SEED
    points: int = DEFAULT_POINTS
    tol: float = DEFAULT_TOL
    lambdas: tuple = DEFAULT_LAMBDAS


@dataclass
class Embedding:
    name: str
    spec: object


@dataclass
class Problem:
    name: str
    chart: Chart
    checks: tuple
    sampling: Sampling
    description: str = ""
    exercises: str = ""
    pair: PencilSpec | None = None
    fman: object = None
    qh: dict | None = None
    embeddings: list = field(default_factory=list)
    expected: dict = field(default_factory=dict)

    def with_overrides(self, points=None, seed=None, tol=None, lambdas=None) -> "Problem":
        s = self.sampling
        s = Sampling(s.seed if seed is None else int(seed), s.points if points is None else int(points),
                     s.tol if tol is None else float(tol),
                     s.lambdas if lambdas is None else tuple(float(x) for x in lambdas))
        pair = self.pair
        if pair is not None:
            pair = PencilSpec(pair.chart, pair.g, pair.g_tilde, s.lambdas)
        return replace(self, sampling=s, pair=pair)


# -- loading ------------------------------------------------------------------

def _need(block, key, where):
    if key not in block:
        raise ConfigError(f"missing key {key!r} in {where}")
    return block[key]


def _chart(block, where="[chart]") -> Chart:
    coords = _need(block, "coords", where)
    box = _need(block, "box", where)
    return Chart(tuple(coords), tuple(tuple(b) for b in box), tuple(block.get("exclusions", ())))


def _metric(chart, rows, variance, where) -> MetricField:
    if variance not in (COVARIANT, CONTRAVARIANT):
        raise ConfigError(f"{where}: variance must be 'covariant' or 'contravariant'")
    return MetricField(chart, [[_entry(v) for v in row] for row in rows], variance)


def _entry(v):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"expression entries must be strings or numbers, got {v!r}")
    return v


def _fman(chart, block, pair):
    from .fmanifold import FManSpec, fman_from_potential
    n = chart.n
    variance = block.get("variance", COVARIANT)
    if "eta" in block:
        gt = _metric(chart, block["eta"], variance, "[fman] eta")
    elif "g_tilde" in block:
        gt = _metric(chart, block["g_tilde"], variance, "[fman] g_tilde")
    elif pair is not None:
        gt = pair.g_tilde
    else:
        raise ConfigError("[fman] needs eta/g_tilde or a [metrics] block")
    E = [_entry(v) for v in _need(block, "E", "[fman]")]
    e = block.get("e")
    e = None if e is None else [_entry(v) for v in e]
    k, D = float(block.get("k", 1.0)), float(block.get("D", 1.0))
    for vec, what in ((E, "E"), (e, "e")):
        if vec is not None and len(vec) != n:
            raise ConfigError(f"[fman] {what} has {len(vec)} components for dimension {n}")
    if "potential" in block:
        return fman_from_potential(chart, block["potential"], gt, E, k, D, e)
    entries = _need(block, "c", "[fman]")
    c = [[["0"] * n for _ in range(n)] for _ in range(n)]
    for item in entries:
        if len(item) != 4:
            raise ConfigError(f"[fman] c entries are [k, i, j, expr], got {item!r}")
        kk, i, j = (int(x) - 1 for x in item[:3])
        if not all(0 <= x < n for x in (kk, i, j)):
            raise ConfigError(f"[fman] index out of range in {item!r}")
        c[kk][i][j] = c[kk][j][i] = _entry(item[3])
    return FManSpec(chart, c, gt, E, k, D, e)


def _embedding(ambient, block, i) -> Embedding:
    from .submanifold import EmbeddingSpec
    where = f"[[embeddings]] #{i + 1}"
    params = Chart(tuple(_need(block, "params", where)), tuple(tuple(b) for b in _need(block, "box", where)),
                   tuple(block.get("exclusions", ())))
    comps = [_entry(v) for v in _need(block, "components", where)]
    try:
        spec = EmbeddingSpec(ambient, params, tuple(comps))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return Embedding(block.get("name", f"embedding{i + 1}"), spec)


def load_problem(source) -> Problem:
    """Parse a problem from a path or a TOML string."""
    try:
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and source.endswith(".toml")):
            text = Path(source).read_text()
        else:
            text = source
        data = tomllib.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read problem file: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    try:
        return _build(data)
    except ConfigError:
        raise
    except PencilkitError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"malformed problem: {exc}") from None


KEYS = {
    "": {"name", "description", "exercises", "checks", "chart", "metrics", "fman", "qh", "embeddings", "sampling",
         "expected"},
    "chart": {"coords", "box", "exclusions"},
    "metrics": {"variance", "g", "g_tilde"},
    "fman": {"potential", "eta", "g_tilde", "variance", "c", "E", "e", "k", "D"},
    "qh": {"d", "D", "f", "E", "e"},
    "embeddings": {"name", "params", "box", "exclusions", "components"},
    "sampling": {"seed", "points", "tol", "lambdas"},
}


def _check_keys(data):
    blocks = [("", data)] + [(k, data[k]) for k in KEYS if k and isinstance(data.get(k), dict)]
    blocks += [("embeddings", b) for b in data.get("embeddings", []) if isinstance(b, dict)]
    for name, block in blocks:
        unknown = sorted(set(block) - KEYS[name])
        if unknown:
            where = f"[{name}]" if name else "top level"
            raise ConfigError(f"unknown key(s) {', '.join(unknown)} at {where}")


def _build(data) -> Problem:
    _check_keys(data)
    chart = _chart(_need(data, "chart", "problem file"))
    s = data.get("sampling", {})
    sampling = Sampling(int(s.get("seed", DEFAULT_SEED)), int(s.get("points", DEFAULT_POINTS)),
                        float(s.get("tol", DEFAULT_TOL)), tuple(float(x) for x in s.get("lambdas", DEFAULT_LAMBDAS)))
    pair = None
    if "metrics" in data:
        m = data["metrics"]
        variance = m.get("variance", CONTRAVARIANT)
        pair = PencilSpec(chart, _metric(chart, _need(m, "g", "[metrics]"), variance, "[metrics] g"),
                          _metric(chart, _need(m, "g_tilde", "[metrics]"), variance, "[metrics] g_tilde"),
                          sampling.lambdas)
    fman = _fman(chart, data["fman"], pair) if "fman" in data else None
    qh = dict(data["qh"]) if "qh" in data else None
    embeddings = [_embedding(chart, b, i) for i, b in enumerate(data.get("embeddings", []))]
    checks = tuple(data.get("checks", ()))
    if not checks:
        raise ConfigError("no checks requested (top-level 'checks' list, before any [table])")
    known = set(ORDER)
    for c in checks:
        if c not in known:
            raise ConfigError(f"unknown check {c!r}; known: {', '.join(ORDER)}")
    for c in checks:
        if c in PENCIL_CHECKS and pair is None and fman is None:
            raise ConfigError(f"check {c!r} needs a [metrics] or [fman] block")
        if c in FMAN_CHECKS and fman is None:
            raise ConfigError(f"check {c!r} needs an [fman] block")
        if c in QH_CHECKS and fman is None and (qh is None or pair is None):
            raise ConfigError(f"check {c!r} needs [fman], or [metrics] with [qh]")
        if c in EMBEDDING_CHECKS and not embeddings:
            raise ConfigError(f"check {c!r} needs at least one [[embeddings]] block")
        if c == "fman_submanifold" and fman is None:
            raise ConfigError("check 'fman_submanifold' needs an [fman] block")
        if c in ("distinguished", "induced_compatibility") and pair is None and fman is None:
            raise ConfigError(f"check {c!r} needs a [metrics] or [fman] block")
    if qh is not None and fman is None and "E" not in qh:
        raise ConfigError("[qh] needs E when there is no [fman] block")
    return Problem(str(data.get("name", "problem")), chart, checks, sampling, str(data.get("description", "")),
                   str(data.get("exercises", "")), pair, fman, qh, embeddings, dict(data.get("expected", {})))


# -- running ------------------------------------------------------------------

class _Context:
    """Lazily built objects shared by the checks of one problem."""

    def __init__(self, prob: Problem):
        self.prob = prob
        self.s = prob.sampling
        self._cache = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def points(self):
        def make():
            if self.prob.fman is not None:
                return self.prob.fman.sample(self.s.points, self.s.seed)
            return self.prob.pair.sample(self.s.points, self.s.seed)
        return self._get("points", make)

    @property
    def pair(self) -> PencilSpec:
        def make():
            if self.prob.pair is not None:
                return self.prob.pair
            from .fmanifold import build_pencil_from_fman
            built = build_pencil_from_fman(self.prob.fman, self.points)
            return PencilSpec(built.chart, built.g, built.g_tilde, self.s.lambdas)
        return self._get("pair", make)

    @property
    def qh(self):
        def make():
            from .fmanifold import QHPencilSpec
            from .geometry import VectorField
            q = self.prob.qh or {}
            f = self.prob.fman
            if "E" in q:
                E = VectorField(self.prob.chart, [_entry(v) for v in q["E"]])
            else:
                E = f.E
            e = q.get("e")
            e = VectorField(self.prob.chart, [_entry(v) for v in e]) if e is not None else (f.e if f else None)
            d = float(q["d"]) if "d" in q else f.d
            D = float(q["D"]) if "D" in q else (f.D if f is not None else None)
            return QHPencilSpec(self.pair, E, d, D, q.get("f"), e)
        return self._get("qh", make)

    @property
    def almost(self) -> CheckReport:
        from .pencil import check_almost_compatible
        return self._get("almost", lambda: check_almost_compatible(self.pair, self.points, self.s.tol))


def _fail_report(name, exc, witness=None, residual=None):
    rep = CheckReport(name, FAIL, residual, notes=[f"{type(exc).__name__}: {exc}"])
    if witness is not None:
        rep.witnesses = [{"point": [float(x) for x in witness]}]
    return rep


def _run_one(ctx: _Context, name: str) -> list:
    from . import circalg, fmanifold as fm, hamiltonian as ham, pencil as pc, submanifold as sm
    s = ctx.s
    if name in PENCIL_CHECKS:
        p, pts = ctx.pair, ctx.points
        if name == "almost_compatible":
            return [ctx.almost]
        if name == "compatible":
            return [pc.check_compatible(p, pts, s.tol, ctx.almost)]
        if name == "prop_au":
            return [pc.check_prop_au(p, pts, s.tol, ctx.almost)]
        if name == "right_symmetry":
            return [circalg.check_right_symmetry(p, pts, s.tol, ctx.almost)]
        if name == "flat_pencil":
            return [pc.check_flat_pencil(p, pts, s.tol)]
        if name == "semisimple":
            return [pc.check_semisimple(p, pts, s.tol)]
        if name == "invariance":
            return [circalg.check_invariance(p, pts, s.tol)]
        if name == "curvature_circ":
            return [circalg.curvature_circ_residual(p, pts, s.tol)]
        if name == "dn_operator":
            out = []
            for label, metric in (("g", p.g), ("g_tilde", p.g_tilde)):
                op = ham.assemble_dn_operator(metric, pts, s.tol)
                rep = op.report
                rep.check = f"dn_operator[{label}]"
                rep.data.update({"label": op.label, "g": [[str(e) for e in row] for row in op.g],
                                 "b": [[[str(e) for e in r] for r in m] for m in op.b]})
                out.append(rep)
            return out
        if name == "bi_hamiltonian":
            ops = ham.assemble_pencil_operators(p, pts, s.tol)
            rep = ops.flat_pencil if ops.compatible is None else ops.compatible
            out = CheckReport("bi_hamiltonian", rep.verdict, rep.residual, list(rep.witnesses),
                              [SubVerdict("flat_pencil", ops.flat_pencil.verdict, ops.flat_pencil.residual)],
                              [ops.label], {"label": ops.label}, rep.millis, rep.inconsistent)
            if ops.compatible is not None:
                out.sub_verdicts.append(SubVerdict("compatible", ops.compatible.verdict, ops.compatible.residual))
            return [out]
    if name in FMAN_CHECKS:
        f, pts = ctx.prob.fman, ctx.points
        fn = {"algebra": fm.check_algebra, "invariant_metric": fm.check_invariant_metric,
              "euler": fm.check_euler, "weak_f_condition": fm.check_weak_f_condition,
              "f_condition": fm.check_f_condition, "nijenhuis_euler": fm.check_nijenhuis_euler,
              "built_pencil": fm.check_built_pencil, "ec_identity": fm.check_ec_identity,
              "curvature_relation": fm.check_curvature_relation}[name]
        return [fn(f, pts, s.tol)]
    if name in QH_CHECKS:
        q, pts = ctx.qh, ctx.points
        if name == "weak_qh":
            return [fm.check_weak_qh(q, pts, s.tol)]
        if name == "qh":
            return [fm.check_qh(q, pts, s.tol)]
        if name == "cotangent_algebra":
            return [fm.check_cotangent_algebra(q, pts, s.tol)]
        if name == "round_trip":
            back = fm.build_fman_from_pencil(q, pts, s.tol)
            if ctx.prob.fman is None:
                return [fm.check_algebra(back, pts, s.tol)]
            return [fm.compare_fman(ctx.prob.fman, back, pts, s.tol)]
    out = []
    for emb in ctx.prob.embeddings:
        u = emb.spec.sample(s.points, s.seed)
        label = f"{name}[{emb.name}]"
        try:
            if name == "distinguished":
                rep = sm.check_distinguished(ctx.pair, emb.spec, u, s.tol)
            elif name == "induced_compatibility":
                rep = sm.check_induced_compatibility(ctx.pair, emb.spec, u, s.tol)
            else:
                rep = sm.check_fman_submanifold(ctx.prob.fman, emb.spec, u, s.tol)
        except PreconditionFailed as exc:
            rep = exc.report if exc.report is not None else precondition_failed(name, str(exc))
            rep.notes.append(str(exc))
        except NotDistinguished as exc:
            rep = precondition_failed(name, str(exc))
            if exc.witness is not None:
                rep.witnesses = [{"point": list(exc.witness)}]
        except ClosureFailed as exc:
            rep = _fail_report(name, exc, exc.witness, exc.residual)
            rep.data["hypothesis"] = exc.hypothesis
        rep.check = label
        out.append(rep)
    return out


def run_problem(prob: Problem) -> list:
    """Run the requested checks in dependency order; returns CheckReports."""
    ctx = _Context(prob)
    requested = set(prob.checks)
    reports = []
    for name in ORDER:
        if name not in requested:
            continue
        try:
            got = _run_one(ctx, name)
        except PreconditionFailed as exc:
            rep = exc.report if exc.report is not None else precondition_failed(name, str(exc))
            rep.check = name
            if str(exc) not in rep.notes:
                rep.notes.append(str(exc))
            got = [rep]
        except (MissingPotential, NotInvertibleEulerMultiplication, NotAutomorphism) as exc:
            got = [precondition_failed(name, f"{type(exc).__name__}: {exc}")]
        except (SingularMetric, RankDeficient) as exc:
            got = [_fail_report(name, exc, getattr(exc, "witness", None))]
        reports.extend(got)
    return reports


def exit_code(reports) -> int:
    if any(r.inconsistent for r in reports):
        return 3
    return 0 if all(r.passed for r in reports) else 1


def report_json(prob: Problem, reports, timing: bool = False) -> dict:
    s = prob.sampling
    return {
        "problem": prob.name,
        "sampling": {"seed": s.seed, "points": s.points, "tol": s.tol, "lambdas": list(s.lambdas)},
        "exit_code": exit_code(reports),
        "reports": [r.to_json(timing) for r in reports],
    }


def corpus_dir() -> Path:
    return Path(__file__).with_name("corpus")


def corpus_files() -> list:
    return sorted(corpus_dir().glob("*.toml"))


def expected_mismatches(prob: Problem, reports) -> list:
    got = {r.check: r.verdict for r in reports}
    return [(k, v, got.get(k)) for k, v in sorted(prob.expected.items()) if got.get(k) != v]


__all__ = ["Problem", "Sampling", "Embedding", "load_problem", "run_problem", "exit_code", "report_json",
           "corpus_files", "expected_mismatches", "ORDER"]
