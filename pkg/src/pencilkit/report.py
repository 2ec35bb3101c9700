"""Check reports and the residual/tolerance policy shared by every check."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

PASS = "pass"
FAIL = "fail"
PRECONDITION_FAILED = "precondition-failed"
SKIPPED = "skipped"

DEFAULT_TOL = 1e-8
DEFAULT_LAMBDAS = (-2.0, -0.5, 1.0 / 3.0, 1.0, 3.0)


@dataclass
class SubVerdict:
    name: str
    verdict: str
    residual: float | None = None
    witness: list | None = None

    @property
    def passed(self):
        return self.verdict == PASS

    def to_json(self):
        return {"name": self.name, "verdict": self.verdict,
                "residual": _clean(self.residual), "witness": self.witness}


@dataclass
class CheckReport:
    check: str
    verdict: str
    residual: float | None = None
    witnesses: list = field(default_factory=list)
    sub_verdicts: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    millis: float | None = None
    # set when sub-verdicts that must agree (equivalent criteria) disagree
    inconsistent: bool = False

    @property
    def passed(self):
        return self.verdict == PASS

    def sub(self, name) -> SubVerdict:
        for s in self.sub_verdicts:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_json(self, timing: bool = False) -> dict:
        return {
            "check": self.check,
            "verdict": self.verdict,
            "residual": _clean(self.residual),
            "witnesses": self.witnesses,
            "sub_verdicts": [s.to_json() for s in self.sub_verdicts],
            "notes": list(self.notes),
            "data": {k: _clean(v) for k, v in sorted(self.data.items())},
            "inconsistent": self.inconsistent,
            "millis": round(self.millis, 3) if (timing and self.millis is not None) else None,
        }

    def summary(self) -> str:
        res = "-" if self.residual is None else f"{self.residual:.3e}"
        line = f"{self.check:<28} {self.verdict.upper():<20} residual={res}"
        if self.witnesses and self.verdict != PASS:
            line += f" witness={self.witnesses[0]}"
        return line


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if not np.isfinite(v):
            return repr(v)
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    return v


def pointwise_residual(lhs, rhs, *terms) -> np.ndarray:
    """Normalised residual of ``lhs == rhs`` at each sample point.

    Arrays carry the sample axis first.  The absolute defect is divided by
    ``1 + max |term|`` over lhs, rhs and any extra terms entering the
    identity at that point.
    """
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    npts = lhs.shape[0]
    diff = np.abs(lhs - rhs).reshape(npts, -1)
    num = diff.max(axis=1) if diff.shape[1] else np.zeros(npts)
    scale = np.zeros(npts)
    for t in (lhs, rhs) + terms:
        t = np.abs(np.asarray(t, dtype=float)).reshape(npts, -1)
        if t.shape[1]:
            scale = np.maximum(scale, t.max(axis=1))
    return num / (1.0 + scale)


def magnitude(values) -> np.ndarray:
    """Per-point max |value| (used for 'this tensor vanishes' checks)."""
    values = np.asarray(values, dtype=float)
    flat = np.abs(values.reshape(values.shape[0], -1))
    return flat.max(axis=1) if flat.shape[1] else np.zeros(values.shape[0])


def judge(name: str, per_point: np.ndarray, points, tol: float, max_witnesses: int = 3,
          extra=None) -> SubVerdict:
    """Turn per-point residuals into a verdict with the worst points as witnesses."""
    per_point = np.asarray(per_point, dtype=float)
    points = np.asarray(points)
    if per_point.size == 0:
        return SubVerdict(name, SKIPPED, None, None)
    bad = ~np.isfinite(per_point)
    worst = float(np.inf) if bad.any() else float(per_point.max())
    if worst <= tol:
        return SubVerdict(name, PASS, worst, None)
    order = np.argsort(np.where(bad, np.inf, per_point))[::-1][:max_witnesses]
    witness = [_witness(points[i], extra, i) for i in order]
    return SubVerdict(name, FAIL, worst, witness)


def _witness(point, extra, i):
    w = {"point": [float(x) for x in np.atleast_1d(point)]}
    if extra:
        for key, values in extra.items():
            w[key] = _clean(values[i])
    return w


def combine(check: str, subs, require_agreement: bool = False, notes=(), data=None,
            primary: str | None = None) -> CheckReport:
    """Build a report from sub-verdicts.

    With ``require_agreement`` the sub-verdicts are equivalent criteria: the
    report passes iff all pass and is flagged ``inconsistent`` when they
    disagree.  ``primary`` names the sub-verdict that decides the overall
    verdict in that case.
    """
    subs = list(subs)
    decided = [s for s in subs if s.verdict in (PASS, FAIL)]
    residuals = [s.residual for s in decided if s.residual is not None]
    residual = max(residuals) if residuals else None
    inconsistent = False
    if require_agreement and decided:
        inconsistent = len({s.verdict for s in decided}) > 1
    if primary is not None:
        head = next(s for s in subs if s.name == primary)
        verdict = head.verdict
    elif not decided:
        verdict = subs[0].verdict if subs else SKIPPED
    else:
        verdict = PASS if all(s.passed for s in decided) else FAIL
    witnesses = []
    for s in subs:
        if s.verdict == FAIL and s.witness:
            witnesses.extend({"criterion": s.name, **w} for w in s.witness[:1])
    rep = CheckReport(check, verdict, residual, witnesses, subs, list(notes), dict(data or {}))
    rep.inconsistent = inconsistent
    if inconsistent:
        rep.notes.append("equivalent criteria disagree: " +
                         ", ".join(f"{s.name}={s.verdict}" for s in decided))
    return rep


def precondition_failed(check: str, reason: str, upstream: CheckReport | None = None) -> CheckReport:
    rep = CheckReport(check, PRECONDITION_FAILED, notes=[reason])
    if upstream is not None:
        rep.sub_verdicts.append(SubVerdict(upstream.check, upstream.verdict, upstream.residual))
        rep.witnesses = list(upstream.witnesses[:1])
    return rep


@contextmanager
def timed(holder: dict):
    start = time.perf_counter()
    try:
        yield
    finally:
        holder["millis"] = (time.perf_counter() - start) * 1e3
