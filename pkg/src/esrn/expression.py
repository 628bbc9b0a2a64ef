"""Symbolic expression trees decoded from networks.

Node semantics mirror the guarded network primitives exactly:

* ``log(x)``  is ``ln(max(|x|, 1e-12))``
* ``exp(x)``  is ``e ** clip(x, -60, 60)``
* ``pow(x, p)`` is ``max(|x|, 1e-12) ** p`` (what ``exp(p * log(x))`` becomes)
* ``sigmoid(x)`` is the logistic function
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy.special import expit

from .dimensional import PiGroup

LOG_FLOOR = 1e-12
EXP_CLAMP = 60.0


def guarded_log(x):
    return np.log(np.maximum(np.abs(x), LOG_FLOOR))


def guarded_exp(x):
    return np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP))


def sigmoid(x):
    return expit(x)


@dataclass(frozen=True)
class Expr:
    op: str  # const | var | sum | prod | pow | exp | log | sigmoid
    children: tuple = ()
    value: object = None  # float for const/pow exponent, PiGroup for var

    # -- constructors --------------------------------------------------------
    @staticmethod
    def const(v: float) -> "Expr":
        return Expr("const", value=float(v))

    @staticmethod
    def var(group: PiGroup) -> "Expr":
        return Expr("var", value=group)

    @staticmethod
    def sum(*terms: "Expr") -> "Expr":
        return Expr("sum", tuple(terms))

    @staticmethod
    def prod(*factors: "Expr") -> "Expr":
        return Expr("prod", tuple(factors))

    @staticmethod
    def pow(base: "Expr", p: float) -> "Expr":
        return Expr("pow", (base,), float(p))

    @staticmethod
    def apply(op: str, arg: "Expr") -> "Expr":
        return Expr(op, (arg,))

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    # -- evaluation ----------------------------------------------------------
    def evaluate(self, env: Mapping[str, object]):
        """Evaluate on raw variable values (scalars or equal-length arrays)."""
        op = self.op
        if op == "const":
            return self.value
        if op == "var":
            return self.value.evaluate(env)
        if op == "sum":
            total = 0.0
            for c in self.children:
                total = total + c.evaluate(env)
            return total
        if op == "prod":
            total = 1.0
            for c in self.children:
                total = total * c.evaluate(env)
            return total
        arg = self.children[0].evaluate(env)
        if op == "pow":
            return np.maximum(np.abs(arg), LOG_FLOOR) ** self.value
        if op == "exp":
            return guarded_exp(arg)
        if op == "log":
            return guarded_log(arg)
        if op == "sigmoid":
            return sigmoid(arg)
        raise ValueError(f"unknown op {op!r}")

    def variables(self) -> set:
        if self.op == "var":
            return {self.value}
        out = set()
        for c in self.children:
            out |= c.variables()
        return out

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    # -- text ------------------------------------------------------------------
    def to_text(self, digits: int = 6) -> str:
        return _text(self, digits)

    def __str__(self) -> str:
        return self.to_text()

    # -- json ------------------------------------------------------------------
    def to_json(self) -> dict:
        node = {"op": self.op}
        if self.op == "const":
            node["value"] = self.value
        elif self.op == "var":
            node["group"] = self.value.to_json()
        elif self.op == "pow":
            node["exponent"] = self.value
        if self.children:
            node["args"] = [c.to_json() for c in self.children]
        return node

    @classmethod
    def from_json(cls, node: Mapping) -> "Expr":
        op = node["op"]
        args = tuple(cls.from_json(a) for a in node.get("args", ()))
        if op == "const":
            return cls.const(node["value"])
        if op == "var":
            return cls.var(PiGroup.from_json(node["group"]))
        if op == "pow":
            return cls("pow", args, float(node["exponent"]))
        return cls(op, args)


def _num(v: float, digits: int) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.{digits}g}"


def _atom(e: Expr, digits: int) -> str:
    s = _text(e, digits)
    if e.op == "var":
        return f"({s})" if "/" in s or "*" in s else s
    return f"({s})" if e.op in ("sum", "prod") or (e.op == "const" and e.value < 0) else s


def _negated(e: Expr) -> Optional[Expr]:
    """``(-c)*x`` -> ``c*x`` (or ``x`` when c is 1); None if not negative."""
    if e.op == "const" and e.value < 0:
        return Expr.const(-e.value)
    if e.op == "prod" and e.children and e.children[0].is_const and e.children[0].value < 0:
        c = -e.children[0].value
        rest = e.children[1:]
        if c == 1:
            return rest[0] if len(rest) == 1 else Expr("prod", rest)
        return Expr("prod", (Expr.const(c),) + rest)
    return None


def _text(e: Expr, digits: int) -> str:
    op = e.op
    if op == "const":
        return _num(e.value, digits)
    if op == "var":
        return e.value.name
    if op == "sum":
        if not e.children:
            return "0"
        parts = [_text(e.children[0], digits)]
        for c in e.children[1:]:
            neg = _negated(c)
            parts.append(f"- {_text(neg, digits)}" if neg is not None else f"+ {_text(c, digits)}")
        return " ".join(parts)
    if op == "prod":
        if not e.children:
            return "1"
        return "*".join(_atom(c, digits) for c in e.children)
    if op == "pow":
        return f"{_atom(e.children[0], digits)}^{_num(e.value, digits) if e.value >= 0 else '(' + _num(e.value, digits) + ')'}"
    if op == "log":
        return f"log|{_text(e.children[0], digits)}|"
    return f"{op}({_text(e.children[0], digits)})"


# -- simplification ------------------------------------------------------------

def snap(e: Expr, tol: float) -> Expr:
    """Round every constant and exponent lying within ``tol`` of an integer."""
    def r(v):
        n = round(v)
        return float(n) if abs(v - n) <= tol else v

    if e.op == "const":
        return Expr.const(r(e.value))
    kids = tuple(snap(c, tol) for c in e.children)
    if e.op == "pow":
        return Expr("pow", kids, r(e.value))
    return Expr(e.op, kids, e.value)


def _scaled_log(term: Expr) -> Optional[tuple[float, Expr]]:
    """``c * log(x)`` -> ``(c, x)``; ``log(x)`` -> ``(1, x)``."""
    if term.op == "log":
        return 1.0, term.children[0]
    if term.op == "prod":
        consts = [c for c in term.children if c.is_const]
        rest = [c for c in term.children if not c.is_const]
        if len(rest) == 1 and rest[0].op == "log":
            return math.prod(c.value for c in consts), rest[0].children[0]
    return None


def _power_parts(e: Expr) -> tuple[Expr, float]:
    if e.op == "pow":
        return e.children[0], e.value
    return e, 1.0


def rewrite(e: Expr) -> Expr:
    """Bottom-up algebraic clean-up: constant folding, flattening,
    exp-of-log cancellation and merging of equal power bases."""
    kids = tuple(rewrite(c) for c in e.children)
    op = e.op
    if op == "var" and e.value.is_constant:
        return Expr.const(1.0)
    if op in ("const", "var"):
        return e
    if op in ("exp", "log", "sigmoid") and kids[0].is_const:
        return Expr.const(float(Expr(op, kids).evaluate({})))
    if op == "pow":
        base = kids[0]
        if base.is_const:
            return Expr.const(float(Expr("pow", kids, e.value).evaluate({})))
        if e.value == 0:
            return Expr.const(1.0)
        if base.op == "pow":
            return rewrite(Expr.pow(base.children[0], base.value * e.value))
        if e.value == 1 and base.op == "var":
            return base
        if base.op == "prod":
            return rewrite(Expr("prod", tuple(Expr.pow(f, e.value) for f in base.children)))
        return Expr("pow", kids, e.value)
    if op == "sum":
        flat = []
        for k in kids:
            flat.extend(k.children if k.op == "sum" else (k,))
        c = sum(k.value for k in flat if k.is_const)
        rest = [k for k in flat if not k.is_const]
        terms = ([Expr.const(c)] if c != 0 or not rest else []) + rest
        return terms[0] if len(terms) == 1 else Expr("sum", tuple(terms))
    if op == "prod":
        flat = []
        for k in kids:
            flat.extend(k.children if k.op == "prod" else (k,))
        c = math.prod(k.value for k in flat if k.is_const)
        if c == 0:
            return Expr.const(0.0)
        bases: dict = {}
        order = []
        for k in flat:
            if k.is_const:
                continue
            base, p = _power_parts(k)
            if base.op != "var":
                order.append((k, None))
                continue
            if base not in bases:
                bases[base] = 0.0
                order.append((base, "pow"))
            bases[base] += p
        rest = []
        for item, kind in order:
            if kind is None:
                rest.append(item)
            elif bases[item] != 0:
                rest.append(rewrite(Expr.pow(item, bases[item])))
        factors = ([Expr.const(c)] if c != 1 or not rest else []) + rest
        return factors[0] if len(factors) == 1 else Expr("prod", tuple(factors))
    if op == "exp":
        arg = kids[0]
        terms = arg.children if arg.op == "sum" else (arg,)
        const = 0.0
        powers = []
        inner = []
        for t in terms:
            if t.is_const:
                const += t.value
                continue
            scaled = _scaled_log(t)
            if scaled is not None:
                powers.append(Expr.pow(scaled[1], scaled[0]))
            else:
                inner.append(t)
        if not powers:
            return Expr("exp", kids)
        factors = [Expr.const(math.exp(max(min(const, EXP_CLAMP), -EXP_CLAMP)))] + powers
        if inner:
            factors.append(Expr.apply("exp", inner[0] if len(inner) == 1 else Expr("sum", tuple(inner))))
        return rewrite(Expr("prod", tuple(factors)))
    return Expr(op, kids, e.value)


def split_constant(e: Expr) -> tuple[float, Expr]:
    """``C * g`` -> ``(C, g)`` for a top-level multiplicative constant."""
    if e.is_const:
        return e.value, Expr.const(1.0)
    if e.op == "prod":
        c = math.prod(k.value for k in e.children if k.is_const)
        rest = [k for k in e.children if not k.is_const]
        return c, rest[0] if len(rest) == 1 else Expr("prod", tuple(rest))
    return 1.0, e


def refit_constant(e: Expr, env: Mapping[str, object], target) -> Expr:
    """Refit the leading multiplicative constant by least squares in log space.

    ``ln C = mean(ln target - ln g)`` over rows where both are positive; the
    expression is returned unchanged if no such rows exist.
    """
    c, g = split_constant(e)
    gv = np.broadcast_to(np.asarray(g.evaluate(env), dtype=float), np.shape(target))
    t = np.asarray(target, dtype=float)
    ok = (gv > 0) & (t > 0) & np.isfinite(gv)
    if c <= 0 or not np.any(ok):
        return e
    log_c = float(np.mean(np.log(t[ok]) - np.log(gv[ok])))
    return rewrite(Expr.prod(Expr.const(math.exp(log_c)), g))


def simplify(e: Expr, snap_tol: float = 0.05, env: Optional[Mapping] = None, target=None) -> Expr:
    """Snap near-integers, apply algebraic identities, and (given data)
    refit the leading constant."""
    out = rewrite(snap(rewrite(e), snap_tol))
    if env is not None and target is not None:
        out = refit_constant(out, env, target)
    return out


def monomial(e: Expr) -> Optional[tuple[float, dict]]:
    """``C * prod(group ** p)`` -> ``(C, {group: p})``, or None if not a monomial."""
    c, g = split_constant(e)
    factors = g.children if g.op == "prod" else (g,)
    powers: dict = {}
    for f in factors:
        if f.is_const and f.value == 1:
            continue
        base, p = _power_parts(f)
        if base.op != "var":
            return None
        powers[base.value] = powers.get(base.value, 0.0) + p
    return c, powers
