"""Symbolic scalar expressions in chart coordinates.

Expressions are immutable and hash-consed: building the same tree twice
returns the same object, so structural equality is identity and shared
subtrees are stored (and evaluated) once.  The smart constructors fold
constants and absorb 0/1 as trees are built, which keeps the adjugate and
Christoffel formulas from blowing up.

Numerical evaluation goes through :class:`Program`, which linearises a set
of roots into a register machine and runs it over a batch of points with
either the compiled kernel or the numpy fallback (see ``_kernels``).
"""

from __future__ import annotations

import math
import re
import weakref
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import EvalDomainError, ExprSyntaxError, UnknownIdentifier

CONST, VAR, NEG, ADD, SUB, MUL, DIV, POW, EXP, LOG, SIN, COS, SQRT = range(13)

FUNCTIONS = {"exp": EXP, "log": LOG, "sin": SIN, "cos": COS, "sqrt": SQRT}
_FUNC_NAMES = {v: k for k, v in FUNCTIONS.items()}
_BINARY_SYMBOL = {ADD: "+", SUB: "-", MUL: "*", DIV: "/"}

_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    """A node of an expression DAG.

    ``op`` is one of the module-level opcodes.  ``value`` holds the float of
    a constant, the name of a variable or the integer exponent of a power.
    Never instantiate directly; use :func:`const`, :func:`var` and the
    arithmetic operators.
    """

    __slots__ = ("op", "args", "value", "_derivs", "_size", "__weakref__")

    def __new__(cls, op, args=(), value=None):
        key = (op, value, args)
        node = _table.get(key)
        if node is None:
            node = object.__new__(cls)
            init = object.__setattr__
            init(node, "op", op)
            init(node, "args", args)
            init(node, "value", value)
            init(node, "_derivs", {})
            init(node, "_size", None)
            _table[key] = node
        return node

    def __setattr__(self, name, val):
        raise AttributeError("Expr is immutable")

    def __reduce__(self):
        return (_rebuild, (self.op, self.args, self.value))

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pos__(self):
        return self

    def __pow__(self, n):
        if isinstance(n, Expr):
            if n.op != CONST:
                raise TypeError("only integer exponents are supported")
            n = n.value
        if isinstance(n, float):
            if not n.is_integer():
                raise TypeError("only integer exponents are supported")
            n = int(n)
        if not isinstance(n, (int, np.integer)):
            raise TypeError("only integer exponents are supported")
        return power(self, int(n))

    # -- inspection -----------------------------------------------------
    @property
    def is_const(self):
        return self.op == CONST

    def is_zero(self):
        return self.op == CONST and self.value == 0.0

    def is_one(self):
        return self.op == CONST and self.value == 1.0

    def free_variables(self) -> frozenset:
        seen = set()
        names = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node.op == VAR:
                names.add(node.value)
            stack.extend(node.args)
        return frozenset(names)

    def size(self) -> int:
        """Number of distinct nodes in the DAG rooted here."""
        if self._size is None:
            object.__setattr__(self, "_size", len(_topological([self])))
        return self._size

    def diff(self, name: str) -> "Expr":
        return differentiate(self, name)

    def subs(self, mapping: Mapping[str, "Expr"]) -> "Expr":
        return substitute(self, mapping)

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __bool__(self):
        raise TypeError("truth value of an Expr is undefined; compare with is_zero()")


def _rebuild(op, args, value):
    return Expr(op, args, value)


# -- constructors -------------------------------------------------------

def const(v) -> Expr:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"non-finite constant {v}")
    if v == 0.0:
        v = 0.0  # collapse -0.0
    return Expr(CONST, (), v)


ZERO = const(0.0)
ONE = const(1.0)


def var(name: str) -> Expr:
    return Expr(VAR, (), str(name))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _c(e):
    return e.value if e.op == CONST else None


def neg(a: Expr) -> Expr:
    if a.op == CONST:
        return const(-a.value)
    if a.op == NEG:
        return a.args[0]
    if a.op == SUB:
        return sub(a.args[1], a.args[0])
    return Expr(NEG, (a,))


def add(a: Expr, b: Expr) -> Expr:
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return const(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    if a is b:
        return mul(const(2.0), a)
    if b.op == NEG:
        return sub(a, b.args[0])
    if a.op == NEG:
        return sub(b, a.args[0])
    if cb is not None and cb < 0:
        return sub(a, const(-cb))
    return Expr(ADD, (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a is b:
        return ZERO
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return const(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return neg(b)
    if b.op == NEG:
        return add(a, b.args[0])
    if a.op == ADD and a.args[1] is b:
        return a.args[0]
    if a.op == ADD and a.args[0] is b:
        return a.args[1]
    return Expr(SUB, (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return const(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return ZERO
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    if ca == -1.0:
        return neg(b)
    if cb == -1.0:
        return neg(a)
    if cb is not None:
        a, b, ca, cb = b, a, cb, ca
    if a.op == NEG:
        return neg(mul(a.args[0], b))
    if b.op == NEG:
        return neg(mul(a, b.args[0]))
    if ca is not None and b.op == MUL and b.args[0].op == CONST:
        return mul(const(ca * b.args[0].value), b.args[1])
    if a.op == DIV:
        return div(mul(a.args[0], b), a.args[1])
    if b.op == DIV:
        return div(mul(a, b.args[0]), b.args[1])
    base_a, na = _base_exp(a)
    base_b, nb = _base_exp(b)
    if base_a is base_b:
        return power(base_a, na + nb)
    return Expr(MUL, (a, b))


def _base_exp(e: Expr):
    if e.op == POW:
        return e.args[0], e.value
    return e, 1


def div(a: Expr, b: Expr) -> Expr:
    ca, cb = _c(a), _c(b)
    if cb == 1.0:
        return a
    if cb == -1.0:
        return neg(a)
    if ca == 0.0:
        return ZERO
    if a is b:
        return ONE
    if ca is not None and cb is not None and cb != 0.0:
        return const(ca / cb)
    if a.op == NEG:
        return neg(div(a.args[0], b))
    if b.op == NEG:
        return neg(div(a, b.args[0]))
    if a.op == DIV:
        return div(a.args[0], mul(a.args[1], b))
    if b.op == DIV:
        return div(mul(a, b.args[1]), b.args[0])
    base_a, na = _base_exp(a)
    base_b, nb = _base_exp(b)
    if base_a is base_b and base_a.op != CONST:
        return power(base_a, na - nb)
    if a.op == MUL:
        if a.args[0] is b:
            return a.args[1]
        if a.args[1] is b:
            return a.args[0]
    return Expr(DIV, (a, b))


def power(a: Expr, n: int) -> Expr:
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    ca = _c(a)
    if ca is not None and (ca != 0.0 or n > 0):
        try:
            return const(ca ** n)
        except (OverflowError, ValueError):
            pass
    if a.op == POW:
        return power(a.args[0], a.value * n)
    if a.op == NEG and n % 2 == 0:
        return power(a.args[0], n)
    return Expr(POW, (a,), n)


def _unary(op, a: Expr) -> Expr:
    ca = _c(a)
    if ca is not None:
        if op == EXP:
            try:
                return const(math.exp(ca))
            except OverflowError:
                pass
        elif op == SIN:
            return const(math.sin(ca))
        elif op == COS:
            return const(math.cos(ca))
        elif op == LOG and ca > 0:
            return const(math.log(ca))
        elif op == SQRT and ca >= 0:
            return const(math.sqrt(ca))
    return Expr(op, (a,))


def exp(a) -> Expr:
    return _unary(EXP, as_expr(a))


def log(a) -> Expr:
    return _unary(LOG, as_expr(a))


def sin(a) -> Expr:
    return _unary(SIN, as_expr(a))


def cos(a) -> Expr:
    return _unary(COS, as_expr(a))


def sqrt(a) -> Expr:
    return _unary(SQRT, as_expr(a))


def total(terms: Iterable) -> Expr:
    """Sum of an iterable of Exprs (or numbers); ZERO when empty."""
    acc = ZERO
    for t in terms:
        acc = add(acc, as_expr(t))
    return acc


# -- traversal ----------------------------------------------------------

def _topological(roots: Sequence[Expr]) -> list:
    order = []
    seen = set()
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def _rebuild_with(node: Expr, args) -> Expr:
    op = node.op
    if op == NEG:
        return neg(args[0])
    if op == ADD:
        return add(*args)
    if op == SUB:
        return sub(*args)
    if op == MUL:
        return mul(*args)
    if op == DIV:
        return div(*args)
    if op == POW:
        return power(args[0], node.value)
    return _unary(op, args[0])


# -- calculus -----------------------------------------------------------

def differentiate(e: Expr, name: str, known: Iterable[str] | None = None) -> Expr:
    """Exact partial derivative of ``e`` with respect to the variable ``name``.

    ``known`` optionally lists the admissible coordinate names; anything else
    raises :class:`UnknownIdentifier`.
    """
    if known is not None:
        known = tuple(known)
        if name not in known:
            raise UnknownIdentifier(name, known)
    for node in _topological([e]):
        if name in node._derivs:
            continue
        node._derivs[name] = _derivative_step(node, name)
    return e._derivs[name]


def _derivative_step(node: Expr, name: str) -> Expr:
    op = node.op
    if op == CONST:
        return ZERO
    if op == VAR:
        return ONE if node.value == name else ZERO
    d = [a._derivs[name] for a in node.args]
    if op == NEG:
        return neg(d[0])
    if op == ADD:
        return add(d[0], d[1])
    if op == SUB:
        return sub(d[0], d[1])
    a = node.args[0]
    if op == MUL:
        b = node.args[1]
        return add(mul(d[0], b), mul(a, d[1]))
    if op == DIV:
        b = node.args[1]
        if d[1].is_zero():
            return div(d[0], b)
        return sub(div(d[0], b), div(mul(a, d[1]), power(b, 2)))
    if d[0].is_zero():
        return ZERO
    if op == POW:
        n = node.value
        return mul(mul(const(n), power(a, n - 1)), d[0])
    if op == EXP:
        return mul(node, d[0])
    if op == LOG:
        return div(d[0], a)
    if op == SIN:
        return mul(cos(a), d[0])
    if op == COS:
        return neg(mul(sin(a), d[0]))
    if op == SQRT:
        return div(d[0], mul(const(2.0), node))
    raise AssertionError(op)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (composition with a map)."""
    mapping = {k: as_expr(v) for k, v in mapping.items()}
    done: dict[int, Expr] = {}
    for node in _topological([e]):
        if node.op == VAR:
            done[id(node)] = mapping.get(node.value, node)
        elif node.op == CONST:
            done[id(node)] = node
        else:
            done[id(node)] = _rebuild_with(node, [done[id(a)] for a in node.args])
    return done[id(e)]


def simplify(e: Expr) -> Expr:
    """Semantics-preserving cleanup.

    Re-runs every node through the folding constructors and additionally
    merges ``x + x``, ``c1*x + c2*x`` and ``x - c*x`` style like terms.  No
    expansion or reordering beyond that.
    """
    done: dict[int, Expr] = {}
    for node in _topological([e]):
        if not node.args:
            done[id(node)] = node
            continue
        args = [done[id(a)] for a in node.args]
        out = _rebuild_with(node, args)
        if out.op in (ADD, SUB):
            out = _merge_like(out)
        done[id(node)] = out
    return done[id(e)]


def _split_coeff(e: Expr):
    if e.op == MUL and e.args[0].op == CONST:
        return e.args[0].value, e.args[1]
    if e.op == NEG:
        c, rest = _split_coeff(e.args[0])
        return -c, rest
    return 1.0, e


def _merge_like(e: Expr) -> Expr:
    a, b = e.args
    ca, ra = _split_coeff(a)
    cb, rb = _split_coeff(b)
    if ra is rb and ra.op != CONST:
        c = ca + cb if e.op == ADD else ca - cb
        return mul(const(c), ra)
    return e


# -- printing -----------------------------------------------------------

def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(e: Expr) -> int:
    op = e.op
    if op in (ADD, SUB):
        return 1
    if op in (MUL, DIV):
        return 2
    if op == NEG:
        return 3
    if op == CONST:
        return 3 if e.value < 0 else 5
    if op == POW:
        return 4
    return 5


def to_string(e: Expr) -> str:
    """Render in the parser's grammar; ``parse(to_string(e))`` rebuilds ``e``."""
    out: dict[int, str] = {}
    for node in _topological([e]):
        out[id(node)] = _render(node, out)
    return out[id(e)]


def _wrap(child: Expr, s: dict, need: int) -> str:
    text = s[id(child)]
    return f"({text})" if _prec(child) < need else text


def _render(node: Expr, s: dict) -> str:
    op = node.op
    if op == CONST:
        return _fmt_number(node.value)
    if op == VAR:
        return node.value
    if op == NEG:
        return "-" + _wrap(node.args[0], s, 4)
    if op in (ADD, SUB):
        a, b = node.args
        right_need = 1 if op == ADD else 2
        return f"{_wrap(a, s, 1)} {_BINARY_SYMBOL[op]} {_wrap(b, s, right_need)}"
    if op in (MUL, DIV):
        a, b = node.args
        return f"{_wrap(a, s, 2)}{_BINARY_SYMBOL[op]}{_wrap(b, s, 4)}"
    if op == POW:
        return f"{_wrap(node.args[0], s, 5)}^{node.value}"
    return f"{_FUNC_NAMES[op]}({s[id(node.args[0])]})"


# -- parsing ------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = tuple(names)
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ExprSyntaxError("unexpected character", text, pos + _lead_space(text, pos),
                                      ("number", "identifier", "operator"))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, val, pos = self.peek()
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", self.text, pos, expected)

    def expect(self, value):
        kind, val, _ = self.peek()
        if kind != "op" or val != value:
            self.fail((repr(value),))
        self.take()

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(("'+'", "'-'", "'*'", "'/'", "end of input"))
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self):
        negate = False
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            negate = True
        e = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[0] == "op" and self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, val, _ = self.peek()
            if kind != "num" or not re.fullmatch(r"\d+", val):
                self.fail(("integer exponent",))
            self.take()
            e = power(e, sign * int(val))
        return neg(e) if negate else e

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return const(float(val))
        if kind == "id":
            self.take()
            if val in FUNCTIONS:
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return _unary(FUNCTIONS[val], inner)
            if val not in self.names:
                raise UnknownIdentifier(val, self.names)
            return var(val)
        if kind == "op" and val == "(":
            self.take()
            inner = self.expr()
            self.expect(")")
            return inner
        self.fail(("number", "identifier", "function", "'('"))


def _lead_space(text, pos):
    n = 0
    while pos + n < len(text) and text[pos + n].isspace():
        n += 1
    return n


def parse(text: str, chart) -> Expr:
    """Parse ``text`` against the coordinate names of ``chart``.

    ``chart`` may be a :class:`~pencilkit.geometry.Chart` or any sequence
    of coordinate names.
    """
    names = getattr(chart, "coords", chart)
    if isinstance(text, (int, float)):
        return const(text)
    return _Parser(str(text), names).parse()


# -- evaluation ---------------------------------------------------------

class Program:
    """A batch of expressions compiled for repeated numerical evaluation.

    Nodes shared between roots are evaluated once.  Registers are reused
    after a node's last consumer, so memory scales with the DAG width, not
    its size.
    """

    def __init__(self, roots: Sequence[Expr], variables: Sequence[str]):
        self.roots = tuple(as_expr(r) for r in roots)
        self.variables = tuple(variables)
        index = {name: i for i, name in enumerate(self.variables)}
        order = _topological(self.roots)
        pos = {id(n): k for k, n in enumerate(order)}

        last_use = [k for k in range(len(order))]
        for k, node in enumerate(order):
            for a in node.args:
                last_use[pos[id(a)]] = max(last_use[pos[id(a)]], k)
        pinned = {pos[id(r)] for r in self.roots}

        m = len(order)
        opcode = np.empty(m, dtype=np.int64)
        dst = np.empty(m, dtype=np.int64)
        src_a = np.zeros(m, dtype=np.int64)
        src_b = np.zeros(m, dtype=np.int64)
        iarg = np.zeros(m, dtype=np.int64)
        fconst = np.zeros(m, dtype=np.float64)

        free: list[int] = []
        nregs = 0
        reg_of = [0] * m
        release_at: dict[int, list[int]] = {}
        for k, node in enumerate(order):
            if k not in pinned and last_use[k] > k:
                release_at.setdefault(last_use[k], []).append(k)

        for k, node in enumerate(order):
            op = node.op
            opcode[k] = op
            if op == CONST:
                fconst[k] = node.value
            elif op == VAR:
                if node.value not in index:
                    raise UnknownIdentifier(node.value, self.variables)
                iarg[k] = index[node.value]
            elif op == POW:
                iarg[k] = node.value
            if node.args:
                src_a[k] = reg_of[pos[id(node.args[0])]]
                if len(node.args) > 1:
                    src_b[k] = reg_of[pos[id(node.args[1])]]
            # operands are read before dst is written, so freeing first is safe
            for j in release_at.get(k, ()):
                free.append(reg_of[j])
            if free:
                r = free.pop()
            else:
                r = nregs
                nregs += 1
            reg_of[k] = r
            dst[k] = r
            if k not in pinned and last_use[k] == k:
                free.append(r)

        self._code = (opcode, dst, src_a, src_b, iarg, fconst)
        self.nregs = max(nregs, 1)
        self.out_regs = np.array([reg_of[pos[id(r)]] for r in self.roots], dtype=np.int64)
        self.size = m

    def __call__(self, points, strict: bool = True) -> np.ndarray:
        """Evaluate every root at every point.

        Returns an array of shape ``(npoints, nroots)``.  With ``strict`` a
        non-finite result raises :class:`EvalDomainError` naming the first
        offending point; otherwise NaN marks undefined entries.
        """
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
        if pts.shape[1] != len(self.variables):
            raise ValueError(f"points have {pts.shape[1]} coordinates, expected {len(self.variables)}")
        if len(self.roots) == 0:
            return np.zeros((pts.shape[0], 0))
        regs = _kernels.run_program(*self._code, pts, self.nregs)
        values = np.ascontiguousarray(regs[self.out_regs].T)
        if strict:
            bad = ~np.isfinite(values)
            if bad.any():
                row = int(np.argmax(bad.any(axis=1)))
                raise EvalDomainError(pts[row])
        return values


def evaluate(e: Expr, point, variables: Sequence[str] | None = None) -> float:
    """Evaluate a single expression at a single point.

    ``point`` is either a mapping name -> value or a sequence matched
    against ``variables`` (which may also be a Chart).
    """
    if isinstance(point, Mapping):
        names = tuple(point)
        values = [point[n] for n in names]
    else:
        if variables is None:
            raise ValueError("variables are required for positional points")
        names = tuple(getattr(variables, "coords", variables))
        values = list(point)
        if len(values) != len(names):
            raise ValueError(f"point has {len(values)} coordinates, expected {len(names)}")
    return float(Program([e], names)([values])[0, 0])


def evaluate_array(exprs, points, variables: Sequence[str], strict: bool = True) -> np.ndarray:
    """Evaluate an array-like of Exprs; result has shape ``(npoints, *exprs.shape)``."""
    arr = np.asarray(exprs, dtype=object)
    flat = [as_expr(x) for x in arr.ravel()]
    values = Program(flat, variables)(points, strict=strict)
    return values.reshape((values.shape[0],) + arr.shape)


def expr_array(shape) -> np.ndarray:
    """Object array of the given shape filled with ZERO."""
    out = np.empty(shape, dtype=object)
    out.fill(ZERO)
    return out


def to_expr_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = as_expr(v)
    return out
