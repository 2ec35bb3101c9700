import numpy as np
import pytest

from pencilkit.fmanifold import FManSpec, fman_from_potential
from pencilkit.geometry import CONTRAVARIANT, COVARIANT, Chart, MetricField
from pencilkit.pencil import PencilSpec

POLAR = Chart(("r", "th"), ((1.0, 2.0), (0.0, 3.0)))
SPHERE = Chart(("th", "ph"), ((0.5, 2.5), (0.0, 3.0)))
PLANE = Chart(("x1", "x2"), ((1.0, 2.0), (1.0, 2.0)), ("x1 - x2",))
SPACE = Chart(("x1", "x2", "x3"), ((1.0, 2.0), (2.5, 3.5), (4.0, 5.0)))
FLAT2 = Chart(("t1", "t2"), ((-0.5, 0.5), (0.5, 1.5)))
A2CH = Chart(("t1", "t2"), ((-0.5, 0.5), (1.0, 2.0)))


def pair(chart, g, gt, variance=CONTRAVARIANT):
    return PencilSpec(chart, MetricField(chart, g, variance), MetricField(chart, gt, variance))


def polar_metric():
    return MetricField(POLAR, [[1, 0], [0, "r^2"]], COVARIANT)


def sphere_metric():
    return MetricField(SPHERE, [[1, 0], [0, "sin(th)^2"]], COVARIANT)


def const_pair():
    return pair(PLANE, [[1, 0], [0, 1]], [[2, 1], [1, 3]])


def semisimple_pair():
    return pair(PLANE, [[1, 0], [0, 1]], [["x1", 0], [0, "x2"]])


def crossed_pair():
    return pair(PLANE, [[1, 0], [0, 1]], [["x2", 0], [0, "x1"]])


def conformal_pair():
    ch = Chart(("x1", "x2"), ((0.5, 1.5), (0.5, 1.5)))
    return pair(ch, [[1, 0], [0, 1]], [["exp(x1*x2)", 0], [0, "exp(x1*x2)"]])


def curved_pair():
    ch = Chart(("x1", "x2"), ((1.0, 2.0), (3.0, 4.0)))
    return pair(ch, [["exp(x2)", 0], [0, 1]], [["x1*exp(x2)", 0], [0, "x2"]])


def general_pair():
    ch = Chart(("x1", "x2"), ((0.5, 1.5), (0.3, 1.2)))
    return pair(ch, [["1+x1^2", "x1*x2"], ["x1*x2", "2+sin(x2)"]], [["exp(x1)", "x2"], ["x2", "3+x1*x2"]],
                COVARIANT)


def p1_fman():
    eta = MetricField(FLAT2, [[0, 1], [1, 0]], COVARIANT)
    return fman_from_potential(FLAT2, "t1^2*t2/2 + exp(t2)", eta, ["t1", "2"], 1, 1, [1, 0])


def a2_fman():
    eta = MetricField(A2CH, [[0, 1], [1, 0]], COVARIANT)
    return fman_from_potential(A2CH, "t1^2*t2/2 + t2^4/24", eta, ["t1", "2/3*t2"], 1, 5 / 3, [1, 0])


def semisimple_fman3():
    eta = MetricField(SPACE, np.eye(3).tolist(), COVARIANT)
    return fman_from_potential(SPACE, "x1^3/6 + x2^3/6 + x3^3/6", eta, ["x1", "x2", "x3"], 1, 2)


def trivial_fman(chart=FLAT2):
    """Idempotent algebra c^k_ij = δ^k_i δ^k_j, g̃ = Id, E = e = Σ ∂_i (so k = D = 0)."""
    n = chart.n
    c = np.zeros((n, n, n)).tolist()
    for i in range(n):
        c[i][i][i] = 1
    return FManSpec(chart, c, MetricField(chart, np.eye(n).tolist(), COVARIANT), [1] * n, 0, 0, [1] * n)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# -- acceptance summary: one pass/fail line per criterion -----------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _ACCEPTANCE[n] = ("PASS" if rep.passed else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        verdict, text = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {verdict}  {text}")
