"""AST for quantified time-window formulas.

Nodes are interned (hash-consed): structurally equal subterms are the same
object, so identity comparison and id-keyed memoization are safe.  The
constructors also perform light constant folding, which keeps the residuals
produced by automata construction canonical.
"""

from __future__ import annotations

from ..errors import AlternationError, ClosureError

_INTERN: dict = {}


def _intern(cls, *args):
    key = (cls, args)
    node = _INTERN.get(key)
    if node is None:
        node = object.__new__(cls)
        node._args = args
        node._hash = hash(key)
        _INTERN[key] = node
    return node


class Inner:
    """Base class of inner (quantifier-free) formula nodes."""

    __slots__ = ("_args", "_hash")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __repr__(self):
        return pretty(self)


class Top(Inner):
    __slots__ = ()


class Bottom(Inner):
    __slots__ = ()


TOP = _intern(Top)
BOTTOM = _intern(Bottom)


class Hold(Inner):
    """Proposition held (or avoided, if negated) for ``duration + 1`` steps."""

    __slots__ = ()

    @property
    def duration(self):
        return self._args[0]

    @property
    def prop(self):
        return self._args[1]

    @property
    def var(self):
        return self._args[2]

    @property
    def negated(self):
        return self._args[3]


class Not(Inner):
    __slots__ = ()

    @property
    def operand(self):
        return self._args[0]


class _Binary(Inner):
    __slots__ = ()

    @property
    def left(self):
        return self._args[0]

    @property
    def right(self):
        return self._args[1]


class And(_Binary):
    __slots__ = ()


class Or(_Binary):
    __slots__ = ()


class Implies(_Binary):
    __slots__ = ()


class Concat(_Binary):
    __slots__ = ()


class Within(Inner):
    """Operand must complete inside the window ``[lo, hi]`` relative to now."""

    __slots__ = ()

    @property
    def operand(self):
        return self._args[0]

    @property
    def lo(self):
        return self._args[1]

    @property
    def hi(self):
        return self._args[2]


class CapEnd(Inner):
    """Internal node: operand evaluated on a window ending at offset ``end``.

    Produced only by automata progression (a started within-window pins its
    right endpoint); it has no concrete syntax.
    """

    __slots__ = ()

    @property
    def operand(self):
        return self._args[0]

    @property
    def end(self):
        return self._args[1]


def hold(duration, prop, var, negated=False):
    if duration < 0:
        raise ValueError(f"hold duration must be non-negative, got {duration}")
    return _intern(Hold, duration, prop, var, bool(negated))


def not_(f):
    if f is TOP:
        return BOTTOM
    if f is BOTTOM:
        return TOP
    if isinstance(f, Not):
        return f.operand
    return _intern(Not, f)


def and_(l, r):
    if l is BOTTOM or r is BOTTOM:
        return BOTTOM
    if l is TOP:
        return r
    if r is TOP:
        return l
    if entails(l, r):
        return l
    if entails(r, l):
        return r
    return _intern(And, l, r)


def or_(l, r):
    if l is TOP or r is TOP:
        return TOP
    if l is BOTTOM:
        return r
    if r is BOTTOM:
        return l
    if entails(l, r):
        return r
    if entails(r, l):
        return l
    return _intern(Or, l, r)


def implies(l, r):
    if l is TOP:
        return r
    if l is BOTTOM or r is TOP:
        return TOP
    if r is BOTTOM:
        return not_(l)
    return _intern(Implies, l, r)


def concat(l, r):
    # An unsatisfiable phase poisons the whole sequence.  Concat(TOP, r) is
    # *not* r: it still consumes one step before r starts.
    if l is BOTTOM or r is BOTTOM:
        return BOTTOM
    return _intern(Concat, l, r)


def within(f, lo, hi):
    if lo < 0 or hi < lo:
        raise ValueError(f"within bounds must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")
    if f is TOP:
        return TOP
    if f is BOTTOM:
        return BOTTOM
    return _intern(Within, f, lo, hi)


def cap_end(f, end):
    if end < 0:
        return BOTTOM if f is not TOP else TOP
    if f is TOP or f is BOTTOM:
        return f
    if end >= deadline_inner(f):
        return f  # cap not binding
    if isinstance(f, CapEnd):
        return cap_end(f.operand, min(f.end, end))
    # Distribute over boolean structure so residuals stay canonical.
    if isinstance(f, And):
        return and_(cap_end(f.left, end), cap_end(f.right, end))
    if isinstance(f, Or):
        return or_(cap_end(f.left, end), cap_end(f.right, end))
    if isinstance(f, Implies):
        return implies(cap_end(f.left, end), cap_end(f.right, end))
    if isinstance(f, Not):
        return not_(cap_end(f.operand, end))
    if isinstance(f, Hold):
        return BOTTOM if f.duration > end else f
    return _intern(CapEnd, f, end)


def entails(f, g):
    """Sound (incomplete) syntactic entailment: f implies g on every window.

    All rules are pointwise in the evaluation window, so the check is valid
    wherever the two formulas would be compared on the same window.  Used to
    fold subsumed conjuncts/disjuncts, which keeps progression residuals from
    accumulating chains of weaker copies of the same obligation.
    """
    if f is g:
        return True
    if f is BOTTOM or g is TOP:
        return True
    if isinstance(g, And):
        return entails(f, g.left) and entails(f, g.right)
    if isinstance(f, Or):
        return entails(f.left, g) and entails(f.right, g)
    if isinstance(f, And) and (entails(f.left, g) or entails(f.right, g)):
        return True
    if isinstance(g, Or) and (entails(f, g.left) or entails(f, g.right)):
        return True
    if isinstance(f, Hold) and isinstance(g, Hold):
        return (
            (f.prop, f.var, f.negated) == (g.prop, g.var, g.negated)
            and f.duration >= g.duration
        )
    if isinstance(f, CapEnd) and isinstance(g, CapEnd) and f.end == g.end:
        return entails(f.operand, g.operand)
    return False


def deadline_inner(f):
    """Maximum number of time units needed to decide the inner formula."""
    if isinstance(f, (Top, Bottom)):
        return 0
    if isinstance(f, Hold):
        return f.duration
    if isinstance(f, Not):
        return deadline_inner(f.operand)
    if isinstance(f, (And, Or, Implies)):
        return max(deadline_inner(f.left), deadline_inner(f.right))
    if isinstance(f, Concat):
        return deadline_inner(f.left) + deadline_inner(f.right) + 1
    if isinstance(f, Within):
        return f.hi
    if isinstance(f, CapEnd):
        return min(deadline_inner(f.operand), f.end)
    raise TypeError(f"unknown node {f!r}")


def variables_of(f, acc=None):
    """Set of trace-variable names mentioned in an inner formula."""
    if acc is None:
        acc = set()
    if isinstance(f, Hold):
        acc.add(f.var)
    elif isinstance(f, Not):
        variables_of(f.operand, acc)
    elif isinstance(f, _Binary):
        variables_of(f.left, acc)
        variables_of(f.right, acc)
    elif isinstance(f, Within):
        variables_of(f.operand, acc)
    elif isinstance(f, CapEnd):
        variables_of(f.operand, acc)
    return acc


def propositions_of(f, acc=None):
    if acc is None:
        acc = set()
    if isinstance(f, Hold):
        acc.add(f.prop)
    elif isinstance(f, Not):
        propositions_of(f.operand, acc)
    elif isinstance(f, _Binary):
        propositions_of(f.left, acc)
        propositions_of(f.right, acc)
    elif isinstance(f, (Within, CapEnd)):
        propositions_of(f.operand, acc)
    return acc


EXISTS = "exists"
FORALL = "forall"


class FormulaAst:
    """Closed, alternation-free quantified formula: prefix plus inner body.

    ``quantifiers`` is an ordered tuple of (kind, variable-name) pairs; the
    prefix order fixes the coordinate order of tuple alphabets downstream.
    """

    __slots__ = ("quantifiers", "body")

    def __init__(self, quantifiers, body):
        quantifiers = tuple(quantifiers)
        names = [v for _, v in quantifiers]
        if len(set(names)) != len(names):
            raise ClosureError(f"duplicate trace variable in prefix: {names}")
        free = variables_of(body) - set(names)
        if free:
            raise ClosureError(f"free trace variables in body: {sorted(free)}")
        kinds = {k for k, _ in quantifiers}
        if len(kinds) > 1:
            raise AlternationError("quantifier prefix mixes forall and exists")
        for kind, _ in quantifiers:
            if kind not in (EXISTS, FORALL):
                raise ValueError(f"unknown quantifier kind {kind!r}")
        self.quantifiers = quantifiers
        self.body = body

    @property
    def variables(self):
        return tuple(v for _, v in self.quantifiers)

    @property
    def kind(self):
        """Quantifier kind of the (uniform) prefix, or None if empty."""
        return self.quantifiers[0][0] if self.quantifiers else None

    def deadline(self):
        return deadline_inner(self.body)

    def __eq__(self, other):
        return (
            isinstance(other, FormulaAst)
            and self.quantifiers == other.quantifiers
            and self.body is other.body
        )

    def __hash__(self):
        return hash((self.quantifiers, self.body))

    def __repr__(self):
        return pretty_formula(self)


# Precedence levels for printing, tightest first: ! & | -> ;
_PREC = {Hold: 6, Top: 6, Bottom: 6, Within: 6, CapEnd: 6,
         Not: 5, And: 4, Or: 3, Implies: 2, Concat: 1}


def pretty(f):
    """Concrete-syntax rendering of an inner formula (parse round-trips)."""
    return _pretty(f, 0)


def _paren(text, prec, ctx):
    return f"({text})" if prec < ctx else text


def _pretty(f, ctx):
    if f is TOP:
        return "H^0 true@_"  # unreachable in parsed formulas
    if f is BOTTOM:
        return "!H^0 true@_"
    if isinstance(f, Hold):
        neg = "!" if f.negated else ""
        return f"H^{f.duration} {neg}{f.prop}@{f.var}"
    if isinstance(f, Within):
        return f"[{_pretty(f.operand, 0)}]^[{f.lo},{f.hi}]"
    if isinstance(f, CapEnd):
        return f"<{_pretty(f.operand, 0)}>@{f.end}"
    if isinstance(f, Not):
        return _paren("!" + _pretty(f.operand, _PREC[Not]), _PREC[Not], ctx)
    ops = {And: " & ", Or: " | ", Implies: " -> ", Concat: " ; "}
    prec = _PREC[type(f)]
    # & | ; are associative and rendered left-assoc; -> is right-assoc.
    if isinstance(f, Implies):
        text = _pretty(f.left, prec + 1) + ops[Implies] + _pretty(f.right, prec)
    else:
        text = _pretty(f.left, prec) + ops[type(f)] + _pretty(f.right, prec + 1)
    return _paren(text, prec, ctx)


def pretty_formula(ast):
    prefix = "".join(f"{kind} {var} . " for kind, var in ast.quantifiers)
    return prefix + pretty(ast.body)
