"""Signal Temporal Logic formulas, discrete-time robustness and critical-point certificates.

Formulas are kept in negation normal form: ``Not`` and ``Implies`` only exist
between parsing and normalisation. Robustness is evaluated on the grid nodes of
a :class:`~gbf.signals.Trajectory`; alongside every robustness table the
monitor carries the ``(node, predicate)`` pair whose value was selected by the
min/max chain, which is what the certificate reports.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gbf.signals import TimeGrid, Trajectory


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


class MonitorError(ValueError):
    pass


# --- predicates -------------------------------------------------------------


@dataclass(frozen=True)
class Bound:
    """``x[index] <= c`` or ``x[index] >= c``."""

    index: int
    op: str
    c: float
    name: str = ""

    def __post_init__(self):
        if self.op not in ("<=", ">="):
            raise ValueError(f"bound operator must be '<=' or '>=', got {self.op!r}")

    @property
    def label(self) -> str:
        return f"{self.name or f'x{self.index + 1}'} {self.op} {self.c!r}"

    def indices(self) -> tuple[int, ...]:
        return (self.index,)

    def negate(self) -> Bound:
        return Bound(self.index, ">=" if self.op == "<=" else "<=", self.c, self.name)

    def rho(self, X: np.ndarray) -> np.ndarray:
        x = X[..., self.index]
        return self.c - x if self.op == "<=" else x - self.c

    def nearest_boundary(self, x: np.ndarray) -> np.ndarray:
        z = np.array(x, dtype=float)
        z[self.index] = self.c
        return z


@dataclass(frozen=True)
class Halfspace:
    """``a . x <= b``."""

    a: tuple[float, ...]
    b: float

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        if not any(a):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "a", a)

    @property
    def label(self) -> str:
        terms = " + ".join(f"{v!r}*x{i + 1}" for i, v in enumerate(self.a) if v)
        return f"{terms} <= {self.b!r}"

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.a) if v)

    def negate(self) -> Halfspace:
        return Halfspace(tuple(-v for v in self.a), -self.b)

    def _padded(self, n: int) -> np.ndarray:
        a = np.zeros(n)
        a[: len(self.a)] = self.a
        return a

    def rho(self, X: np.ndarray) -> np.ndarray:
        a = self._padded(X.shape[-1])
        return (self.b - X @ a) / np.linalg.norm(a)

    def nearest_boundary(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = self._padded(x.shape[0])
        return x - ((a @ x - self.b) / (a @ a)) * a


@dataclass(frozen=True)
class IntervalPred:
    """``x[index] in [lo, hi]``, or its complement when ``negated``."""

    index: int
    lo: float
    hi: float
    name: str = ""
    negated: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def label(self) -> str:
        s = f"{self.name or f'x{self.index + 1}'} in [{self.lo!r}, {self.hi!r}]"
        return f"not ({s})" if self.negated else s

    def indices(self) -> tuple[int, ...]:
        return (self.index,)

    def negate(self) -> IntervalPred:
        return IntervalPred(self.index, self.lo, self.hi, self.name, not self.negated)

    def rho(self, X: np.ndarray) -> np.ndarray:
        x = X[..., self.index]
        r = np.minimum(x - self.lo, self.hi - x)
        return -r if self.negated else r

    def nearest_boundary(self, x: np.ndarray) -> np.ndarray:
        z = np.array(x, dtype=float)
        v = z[self.index]
        z[self.index] = self.lo if v - self.lo <= self.hi - v else self.hi
        return z


Predicate = Union[Bound, Halfspace, IntervalPred]
PREDICATES = (Bound, Halfspace, IntervalPred)


# --- formula nodes ----------------------------------------------------------


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Always:
    interval: tuple[float, float]
    child: "Formula"


@dataclass(frozen=True)
class Eventually:
    interval: tuple[float, float]
    child: "Formula"


@dataclass(frozen=True)
class Until:
    interval: tuple[float, float]
    left: "Formula"
    right: "Formula"


Formula = Union[Bound, Halfspace, IntervalPred, Not, And, Or, Implies, Always, Eventually, Until]
StlFormula = Formula


def _check_interval(iv) -> tuple[float, float]:
    a, b = float(iv[0]), float(iv[1])
    if not 0 <= a <= b:
        raise ValueError(f"temporal interval must satisfy 0 <= a <= b, got [{a}, {b}]")
    return (a, b)


def to_nnf(phi: Formula, negate: bool = False) -> Formula:
    """Push negations onto predicates and rewrite ``a -> b`` as ``not a or b``."""
    if isinstance(phi, PREDICATES):
        return phi.negate() if negate else phi
    if isinstance(phi, Not):
        return to_nnf(phi.child, not negate)
    if isinstance(phi, Implies):
        return to_nnf(Or(Not(phi.left), phi.right), negate)
    if isinstance(phi, And):
        op = Or if negate else And
        return op(to_nnf(phi.left, negate), to_nnf(phi.right, negate))
    if isinstance(phi, Or):
        op = And if negate else Or
        return op(to_nnf(phi.left, negate), to_nnf(phi.right, negate))
    if isinstance(phi, Always):
        op = Eventually if negate else Always
        return op(_check_interval(phi.interval), to_nnf(phi.child, negate))
    if isinstance(phi, Eventually):
        op = Always if negate else Eventually
        return op(_check_interval(phi.interval), to_nnf(phi.child, negate))
    if isinstance(phi, Until):
        if negate:
            # no release operator in the fragment; keep the negation on the until node
            raise MonitorError("negated until is not supported; rewrite the formula without it")
        return Until(_check_interval(phi.interval), to_nnf(phi.left), to_nnf(phi.right))
    raise TypeError(f"not a formula node: {phi!r}")


def negation(phi: Formula) -> Formula:
    return to_nnf(phi, negate=True)


def predicates(phi: Formula) -> list[Predicate]:
    if isinstance(phi, PREDICATES):
        return [phi]
    if isinstance(phi, (Not, Always, Eventually)):
        return predicates(phi.child)
    return predicates(phi.left) + predicates(phi.right)


def horizon(phi: Formula) -> float:
    """Time extent (seconds past the evaluation instant) the formula looks at."""
    if isinstance(phi, PREDICATES):
        return 0.0
    if isinstance(phi, Not):
        return horizon(phi.child)
    if isinstance(phi, (Always, Eventually)):
        return phi.interval[1] + horizon(phi.child)
    if isinstance(phi, Until):
        return phi.interval[1] + max(horizon(phi.left), horizon(phi.right))
    return max(horizon(phi.left), horizon(phi.right))


def format_formula(phi: Formula) -> str:
    if isinstance(phi, PREDICATES):
        return f"({phi.label})"
    if isinstance(phi, Not):
        return f"not {format_formula(phi.child)}"
    if isinstance(phi, (Always, Eventually)):
        kw = "always" if isinstance(phi, Always) else "eventually"
        a, b = phi.interval
        return f"{kw}[{a!r},{b!r}] {format_formula(phi.child)}"
    if isinstance(phi, Until):
        a, b = phi.interval
        return f"({format_formula(phi.left)} until[{a!r},{b!r}] {format_formula(phi.right)})"
    op = {And: "and", Or: "or", Implies: "->"}[type(phi)]
    return f"({format_formula(phi.left)} {op} {format_formula(phi.right)})"


# --- parser -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<op><=|>=|->|<|>)
  | (?P<punct>[\[\](),])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)
_KEYWORDS = {"not", "and", "or", "in", "always", "eventually", "until"}
_COORD = re.compile(r"x(\d+)$")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "ws":
            for i, ch in enumerate(chunk):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        else:
            if kind == "ident" and chunk in _KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, chunk, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, names: Mapping[str, int] | None, plant_dim: int | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.names = dict(names or {})
        self.plant_dim = plant_dim

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def number(self) -> float:
        tok = self.next()
        if tok.kind != "num":
            self.error(f"expected a number, found {tok.text or 'end of input'!r}", tok)
        return float(tok.text)

    def interval(self) -> tuple[float, float]:
        start = self.expect("[")
        a = self.number()
        self.expect(",")
        b = self.number()
        self.expect("]")
        if not 0 <= a <= b:
            self.error(f"temporal interval must satisfy 0 <= a <= b, got [{a}, {b}]", start)
        return (a, b)

    def parse(self) -> Formula:
        phi = self.implies()
        if self.peek().kind != "eof":
            self.error(f"unexpected {self.peek().text!r}")
        return phi

    def implies(self) -> Formula:
        left = self.disjunction()
        if self.peek().text == "->":
            self.next()
            return Implies(left, self.implies())
        return left

    def disjunction(self) -> Formula:
        phi = self.conjunction()
        while self.peek().text == "or":
            self.next()
            phi = Or(phi, self.conjunction())
        return phi

    def conjunction(self) -> Formula:
        phi = self.until()
        while self.peek().text == "and":
            self.next()
            phi = And(phi, self.until())
        return phi

    def until(self) -> Formula:
        phi = self.unary()
        while self.peek().text == "until":
            self.next()
            iv = self.interval()
            phi = Until(iv, phi, self.unary())
        return phi

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.text == "not":
            self.next()
            return Not(self.unary())
        if tok.text in ("always", "eventually"):
            self.next()
            iv = self.interval()
            op = Always if tok.text == "always" else Eventually
            return op(iv, self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.peek()
        if tok.text == "(":
            self.next()
            phi = self.implies()
            self.expect(")")
            return phi
        if tok.kind == "ident":
            return self.predicate()
        self.error(f"expected a predicate or '(', found {tok.text or 'end of input'!r}")

    def coordinate(self, tok: _Tok) -> int:
        if tok.text in self.names:
            return self.names[tok.text]
        m = _COORD.match(tok.text)
        if m and int(m.group(1)) >= 1:
            idx = int(m.group(1)) - 1
            if self.plant_dim is None or idx < self.plant_dim:
                return idx
        self.error(f"unknown state coordinate {tok.text!r}", tok)

    def predicate(self) -> Formula:
        ident = self.next()
        idx = self.coordinate(ident)
        op = self.next()
        if op.text == "in":
            self.expect("[")
            lo = self.number()
            self.expect(",")
            hi = self.number()
            self.expect("]")
            if lo > hi:
                self.error(f"empty interval [{lo}, {hi}]", op)
            return IntervalPred(idx, lo, hi, ident.text)
        if op.text in ("<=", "<"):
            return Bound(idx, "<=", self.number(), ident.text)
        if op.text in (">=", ">"):
            return Bound(idx, ">=", self.number(), ident.text)
        self.error(f"expected a comparison or 'in', found {op.text or 'end of input'!r}", op)


def parse_formula(
    text: str, names: Mapping[str, int] | None = None, plant_dim: int | None = None
) -> Formula:
    """Parse formula text into a negation-normal-form AST.

    ``names`` maps output aliases (e.g. ``p``) to plant coordinates; ``x<i>``
    (1-based) is always accepted when ``i <= plant_dim``. Strict and non-strict
    comparisons produce the same predicate.
    """
    return to_nnf(_Parser(text, names, plant_dim).parse())


# --- robustness -------------------------------------------------------------


@dataclass(frozen=True)
class RobustnessCertificate:
    robustness: float
    critical_time: float
    critical_index: int
    critical_predicate: str
    critical_point: np.ndarray
    augmented_target: np.ndarray
    predicate: Predicate = field(repr=False, compare=False, default=None)


def _select(vals: np.ndarray, offset: int, width: int, count: int, use_max: bool):
    windows = sliding_window_view(vals, width)[offset : offset + count]
    j = windows.argmax(axis=1) if use_max else windows.argmin(axis=1)
    return np.arange(count) + offset + j


def _tables(phi: Formula, X: np.ndarray, grid: TimeGrid, preds: list):
    """Robustness at every node where ``phi`` is defined, plus the critical (node, predicate) per node."""
    N = X.shape[0]
    if isinstance(phi, PREDICATES):
        pid = len(preds)
        preds.append(phi)
        return phi.rho(X), np.arange(N), np.full(N, pid)
    if isinstance(phi, (And, Or)):
        lv, lk, lp = _tables(phi.left, X, grid, preds)
        rv, rk, rp = _tables(phi.right, X, grid, preds)
        L = min(len(lv), len(rv))
        lv, lk, lp, rv, rk, rp = lv[:L], lk[:L], lp[:L], rv[:L], rk[:L], rp[:L]
        take_left = lv <= rv if isinstance(phi, And) else lv >= rv
        return np.where(take_left, lv, rv), np.where(take_left, lk, rk), np.where(take_left, lp, rp)
    if isinstance(phi, (Always, Eventually)):
        cv, ck, cp = _tables(phi.child, X, grid, preds)
        ia, ib = grid.window(*phi.interval)
        if ia > ib:
            raise MonitorError(f"interval {phi.interval} contains no grid node offsets")
        L = len(cv) - ib
        if L <= 0:
            raise MonitorError("formula horizon exceeds trajectory horizon")
        sel = _select(cv, ia, ib - ia + 1, L, isinstance(phi, Eventually))
        return cv[sel], ck[sel], cp[sel]
    if isinstance(phi, Until):
        return _until(phi, X, grid, preds)
    raise TypeError(f"formula not in negation normal form: {phi!r}")


def _until(phi: Until, X, grid, preds):
    lv, lk, lp = _tables(phi.left, X, grid, preds)
    rv, rk, rp = _tables(phi.right, X, grid, preds)
    ia, ib = grid.window(*phi.interval)
    if ia > ib:
        raise MonitorError(f"interval {phi.interval} contains no grid node offsets")
    L = min(len(lv), len(rv)) - ib
    if L <= 0:
        raise MonitorError("formula horizon exceeds trajectory horizon")
    val = np.empty(L)
    kk = np.empty(L, dtype=int)
    pp = np.empty(L, dtype=int)
    for k in range(L):
        seg = lv[k : k + ib + 1]
        run_min = np.minimum.accumulate(seg)
        # earliest node attaining each running minimum
        new_min = np.r_[True, seg[1:] < run_min[:-1]]
        run_arg = np.maximum.accumulate(np.where(new_min, np.arange(ib + 1), 0)) + k
        best, bj, from_right = -np.inf, -1, True
        for j in range(ia, ib + 1):
            r = rv[k + j]
            if r <= run_min[j]:
                cand, right = r, True
            else:
                cand, right = run_min[j], False
            if cand > best:
                best, bj, from_right = cand, j, right
        val[k] = best
        if from_right:
            kk[k], pp[k] = rk[k + bj], rp[k + bj]
        else:
            a = run_arg[bj]
            kk[k], pp[k] = lk[a], lp[a]
    return val, kk, pp


def _plant_states(traj) -> tuple[np.ndarray, np.ndarray, TimeGrid]:
    if isinstance(traj, Trajectory):
        return traj.plant, traj.states, traj.grid
    raise TypeError("robustness expects a Trajectory")


def robustness(phi: Formula, traj: Trajectory) -> RobustnessCertificate:
    """Robustness of ``phi`` at time 0 together with its critical time and point."""
    X, S, grid = _plant_states(traj)
    if X.shape[0] == 0:
        raise MonitorError("empty trajectory")
    for pred in predicates(phi):
        if max(pred.indices()) >= X.shape[1]:
            raise MonitorError(f"predicate {pred.label} references a non-plant coordinate")
    if horizon(phi) > grid.T * (1 + 1e-12):
        raise MonitorError(f"formula horizon {horizon(phi)} exceeds trajectory horizon {grid.T}")
    preds: list = []
    vals, ks, ps = _tables(phi, X, grid, preds)
    d = float(vals[0])
    k = int(ks[0])
    pred = preds[int(ps[0])]
    z = pred.nearest_boundary(X[k])
    r = np.concatenate([z, S[k, X.shape[1] :]])
    return RobustnessCertificate(
        robustness=d,
        critical_time=float(grid.nodes[k]),
        critical_index=k,
        critical_predicate=pred.label,
        critical_point=z,
        augmented_target=r,
        predicate=pred,
    )


def robustness_value(phi: Formula, traj: Trajectory) -> float:
    return robustness(phi, traj).robustness


def cost_from_certificate(traj: Trajectory, cert: RobustnessCertificate) -> float:
    """Half squared distance between the state at the critical time and the augmented target."""
    x = traj.states[cert.critical_index]
    if x.shape != cert.augmented_target.shape:
        raise ValueError(
            f"dimension mismatch: state has {x.shape[0]} entries, target has {cert.augmented_target.shape[0]}"
        )
    e = x - cert.augmented_target
    return 0.5 * float(e @ e)
