"""Tiny expression grammar for rational functions, and its canonical inverse.

Grammar (whitespace ignored):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('+' | '-')* power
    power  := atom ('^' ('+'|'-')? integer)?
    atom   := integer | 'i' | 'x' | '(' expr ')'

Values are :class:`~borel_riccati.field.RationalFunction`.  Serialization
emits a canonical normal form that re-parses to an equal value.
"""

from __future__ import annotations

from .errors import ConfigParseError
from .field import (
    GaussianRational,
    Polynomial,
    RationalFunction,
    format_gaussian,
)


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ConfigParseError:
        return ConfigParseError(message, line=1, column=self.pos + 1)

    def peek(self) -> str | None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        if self.pos >= len(self.text):
            return None
        return self.text[self.pos]

    def next_token(self) -> str | None:
        ch = self.peek()
        if ch is None:
            return None
        if ch in "+-*/^()xi":
            self.pos += 1
            return ch
        if ch.isdigit():
            start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            return self.text[start:self.pos]
        raise self.error(f"unexpected character {ch!r}")


class _Parser:
    def __init__(self, text: str):
        self.tok = _Tokenizer(text)
        self.lookahead = self.tok.next_token()

    def advance(self) -> str | None:
        tok = self.lookahead
        self.lookahead = self.tok.next_token()
        return tok

    def expect(self, token: str):
        if self.lookahead != token:
            raise self.tok.error(f"expected {token!r}, found {self.lookahead!r}")
        self.advance()

    def parse(self) -> RationalFunction:
        value = self.expr()
        if self.lookahead is not None:
            raise self.tok.error(f"trailing input {self.lookahead!r}")
        return value

    def expr(self) -> RationalFunction:
        value = self.term()
        while self.lookahead in ("+", "-"):
            op = self.advance()
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> RationalFunction:
        value = self.factor()
        while self.lookahead in ("*", "/"):
            op = self.advance()
            rhs = self.factor()
            if op == "*":
                value = value * rhs
            else:
                if rhs.is_zero():
                    raise self.tok.error("division by zero")
                value = value / rhs
        return value

    def factor(self) -> RationalFunction:
        sign = 1
        while self.lookahead in ("+", "-"):
            if self.advance() == "-":
                sign = -sign
        value = self.power()
        return value if sign > 0 else -value

    def power(self) -> RationalFunction:
        value = self.atom()
        if self.lookahead == "^":
            self.advance()
            esign = 1
            while self.lookahead in ("+", "-"):
                if self.advance() == "-":
                    esign = -esign
            tok = self.lookahead
            if tok is None or not tok.isdigit():
                raise self.tok.error("expected integer exponent after '^'")
            self.advance()
            value = value ** (esign * int(tok))
        return value

    def atom(self) -> RationalFunction:
        tok = self.lookahead
        if tok is None:
            raise self.tok.error("unexpected end of input")
        if tok == "(":
            self.advance()
            value = self.expr()
            self.expect(")")
            return value
        if tok == "x":
            self.advance()
            return RationalFunction.x()
        if tok == "i":
            self.advance()
            return RationalFunction.constant(GaussianRational(0, 1))
        if tok.isdigit():
            self.advance()
            return RationalFunction.constant(int(tok))
        raise self.tok.error(f"unexpected token {tok!r}")


def parse_rational(text: str) -> RationalFunction:
    """Parse an expression string into an exact rational function."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigParseError("empty rational-function expression")
    return _Parser(text).parse()


def polynomial_to_string(p: Polynomial) -> str:
    if p.is_zero():
        return "0"
    parts: list[str] = []
    for k in range(p.degree(), -1, -1):
        c = p.coeffs[k]
        if not c:
            continue
        if k == 0:
            xpart = ""
        elif k == 1:
            xpart = "x"
        else:
            xpart = f"x^{k}"
        cstr = format_gaussian(c)
        if xpart:
            if cstr == "1":
                body = xpart
            elif cstr == "-1":
                body = f"-{xpart}"
            else:
                body = f"{cstr}*{xpart}"
        else:
            body = cstr
        if parts:
            if body.startswith("-"):
                parts.append(" - ")
                body = body[1:]
            else:
                parts.append(" + ")
        parts.append(body)
    return "".join(parts)


def rational_to_string(r: RationalFunction) -> str:
    """Canonical normal form: reduced, monic denominator, descending terms."""
    num = polynomial_to_string(r.num)
    if r.den.degree() == 0:
        return num
    return f"({num})/({polynomial_to_string(r.den)})"
