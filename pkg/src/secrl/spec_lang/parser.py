"""Recursive-descent parser for the concrete formula syntax.

Grammar (precedence tightest first: ``!``, ``&``, ``|``, ``->``, ``;``)::

    formula  := (('forall' | 'exists') IDENT '.')* concat
    concat   := implies (';' implies)*
    implies  := or ('->' implies)?
    or       := and ('|' and)*
    and      := unary ('&' unary)*
    unary    := '!' unary | atom
    atom     := 'H' '^' INT ['!'] IDENT '@' IDENT
              | '[' concat ']' '^' '[' INT ',' INT ']'
              | '(' concat ')'
"""

import re

from ..errors import FormulaSyntaxError
from . import formula as F

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<arrow>->)
      | (?P<int>\d+)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<punct>[.;&|!^\[\],@()])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"forall", "exists"}


class _Token:
    __slots__ = ("kind", "text", "line", "column")

    def __init__(self, kind, text, line, column):
        self.kind = kind
        self.text = text
        self.line = line
        self.column = column


def _tokenize(text):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            if kind == "ident" and tok in _KEYWORDS:
                kind = tok
            tokens.append(_Token(kind if kind != "punct" else tok, tok, line, col))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.peek()
        if tok.kind != kind:
            raise FormulaSyntaxError(
                f"expected {kind!r}, found {tok.text or 'end of input'!r}",
                tok.line,
                tok.column,
            )
        return self.next()

    def fail(self, message):
        tok = self.peek()
        raise FormulaSyntaxError(message, tok.line, tok.column)

    def parse_formula(self):
        quantifiers = []
        while self.peek().kind in ("forall", "exists"):
            kind = self.next().kind
            var = self.expect("ident").text
            self.expect(".")
            quantifiers.append((kind, var))
        body = self.parse_concat()
        self.expect("eof")
        return F.FormulaAst(quantifiers, body)

    def parse_concat(self):
        node = self.parse_implies()
        while self.peek().kind == ";":
            self.next()
            node = F.concat(node, self.parse_implies())
        return node

    def parse_implies(self):
        node = self.parse_or()
        if self.peek().kind == "arrow":
            self.next()
            node = F.implies(node, self.parse_implies())
        return node

    def parse_or(self):
        node = self.parse_and()
        while self.peek().kind == "|":
            self.next()
            node = F.or_(node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_unary()
        while self.peek().kind == "&":
            self.next()
            node = F.and_(node, self.parse_unary())
        return node

    def parse_unary(self):
        if self.peek().kind == "!":
            self.next()
            return F.not_(self.parse_unary())
        return self.parse_atom()

    def parse_atom(self):
        tok = self.peek()
        if tok.kind == "(":
            self.next()
            node = self.parse_concat()
            self.expect(")")
            return node
        if tok.kind == "[":
            self.next()
            inner = self.parse_concat()
            self.expect("]")
            self.expect("^")
            self.expect("[")
            lo_tok = self.expect("int")
            self.expect(",")
            hi_tok = self.expect("int")
            self.expect("]")
            lo, hi = int(lo_tok.text), int(hi_tok.text)
            if hi < lo:
                raise FormulaSyntaxError(
                    f"within bounds [{lo},{hi}] violate hi >= lo", lo_tok.line, lo_tok.column
                )
            return F.within(inner, lo, hi)
        if tok.kind == "ident" and tok.text == "H":
            self.next()
            self.expect("^")
            duration = int(self.expect("int").text)
            negated = False
            if self.peek().kind == "!":
                self.next()
                negated = True
            prop = self.expect("ident").text
            self.expect("@")
            var = self.expect("ident").text
            return F.hold(duration, prop, var, negated)
        self.fail(f"expected a formula, found {tok.text or 'end of input'!r}")


def parse(text):
    """Parse formula text into a :class:`FormulaAst`.

    Raises FormulaSyntaxError (with line/column), ClosureError, or
    AlternationError.
    """
    return _Parser(text).parse_formula()
