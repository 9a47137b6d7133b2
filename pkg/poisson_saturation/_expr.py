import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from poisson_saturation._errors import ExpressionEvalError, ExpressionSyntaxError, UnknownIdentifierError

FUNCTIONS = {
    'sin': sympy.sin,
    'cos': sympy.cos,
    'exp': sympy.exp,
    'log': sympy.log,
    'sqrt': sympy.sqrt,
}

CONSTANTS = {
    'pi': sympy.pi,
    'e': sympy.E,
    'E': sympy.E,
}

# positional aliases, only offered when the arity is small enough
ALIASES = {
    'x': ('x', 'y', 'z', 'θ'),
    'u': ('u', 'v', 'w'),
}

_TOKEN_RE = re.compile(r'''
    \s*(?:
        (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
      | (?P<id>[^\W\d]\w*)
      | (?P<op>[-+*/^(),])
    )''', re.VERBOSE | re.UNICODE)


def variable_names(arity: int, prefix: str = 'x', names: Optional[Sequence[str]] = None) -> Dict[str, int]:
    """Maps every accepted variable spelling to its 0-based index.

    Canonical names are ``{prefix}1 .. {prefix}n``. Short aliases (``x, y, z, θ`` or ``u, v, w``) are accepted
    when the arity allows; ``names`` adds scene-declared names (e.g. ``t th``).
    """
    result = {f'{prefix}{i + 1}': i for i in range(arity)}
    aliases = ALIASES.get(prefix, ())
    if arity <= len(aliases):
        result.update({a: i for i, a in enumerate(aliases[:arity])})
        if prefix == 'x' and arity == 4:
            result['theta'] = 3
    if names is not None:
        if len(names) != arity:
            raise ValueError(f'{len(names)} variable names given for arity {arity}')
        result.update({n: i for i, n in enumerate(names)})
    return result


def _symbols(arity: int, prefix: str) -> Tuple[sympy.Symbol, ...]:
    return tuple(sympy.Symbol(f'{prefix}{i + 1}', real=True) for i in range(arity))


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    stripped = text.rstrip()
    while pos < len(stripped):
        m = _TOKEN_RE.match(stripped, pos)
        if m is None or m.end() == pos:
            bad = pos + len(stripped[pos:]) - len(stripped[pos:].lstrip())
            raise ExpressionSyntaxError(f'unexpected character {stripped[bad]!r}', bad, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(('end', '', len(stripped)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Dict[str, int], symbols: Tuple[sympy.Symbol, ...]):
        self.text = text
        self.variables = variables
        self.symbols = symbols
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> Tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> Tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, val, pos = self.take()
        if val != value or kind == 'end':
            found = 'end of input' if kind == 'end' else repr(val)
            raise ExpressionSyntaxError(f'expected {value!r}, found {found}', pos, self.text)

    def parse(self) -> sympy.Expr:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != 'end':
            raise ExpressionSyntaxError(f'unexpected token {val!r}', pos, self.text)
        return node

    def expr(self) -> sympy.Expr:
        node = self.term()
        while self.peek()[1] in ('+', '-') and self.peek()[0] == 'op':
            op = self.take()[1]
            rhs = self.term()
            node = node + rhs if op == '+' else node - rhs
        return node

    def term(self) -> sympy.Expr:
        node = self.factor()
        while self.peek()[1] in ('*', '/') and self.peek()[0] == 'op':
            op = self.take()[1]
            rhs = self.factor()
            node = node * rhs if op == '*' else node / rhs
        return node

    def factor(self) -> sympy.Expr:
        kind, val, _ = self.peek()
        if kind == 'op' and val in ('-', '+'):
            self.take()
            node = self.factor()
            return -node if val == '-' else node
        node = self.base()
        if self.peek()[1] == '^' and self.peek()[0] == 'op':
            self.take()
            node = node ** self.exponent()
        return node

    def exponent(self) -> int:
        paren = False
        if self.peek()[1] == '(':
            self.take()
            paren = True
        sign = 1
        if self.peek()[1] == '-':
            self.take()
            sign = -1
        kind, val, pos = self.take()
        if kind != 'num' or not val.isdigit():
            raise ExpressionSyntaxError('exponent must be an integer', pos, self.text)
        if paren:
            self.expect(')')
        return sign * int(val)

    def base(self) -> sympy.Expr:
        kind, val, pos = self.take()
        if kind == 'num':
            return sympy.Rational(val)
        if kind == 'id':
            if val in self.variables:
                return self.symbols[self.variables[val]]
            if val in FUNCTIONS:
                self.expect('(')
                arg = self.expr()
                self.expect(')')
                return FUNCTIONS[val](arg)
            if val in CONSTANTS:
                return CONSTANTS[val]
            if re.fullmatch(r'[xu]\d+', val):
                raise UnknownIdentifierError(
                    f'variable {val} exceeds arity {len(self.symbols)}', pos, self.text)
            raise UnknownIdentifierError(f'unknown identifier {val!r}', pos, self.text)
        if kind == 'op' and val == '(':
            node = self.expr()
            self.expect(')')
            return node
        found = 'end of input' if kind == 'end' else repr(val)
        raise ExpressionSyntaxError(f'unexpected {found}', pos, self.text)


@dataclass(frozen=True, eq=False)
class Expression:
    """A scalar field on a coordinate chart, stored as a sympy tree over ``arity`` real symbols.

    Evaluation goes through a ``sympy.lambdify`` compiled function, derivatives through ``sympy.diff``; both are
    exact up to floating point. Instances are immutable.
    """
    node: sympy.Expr
    symbols: Tuple[sympy.Symbol, ...]

    @property
    def arity(self) -> int:
        return len(self.symbols)

    @property
    def prefix(self) -> str:
        return self.symbols[0].name.rstrip('0123456789') if self.symbols else 'x'

    @classmethod
    def constant(cls, value: Any, arity: int, prefix: str = 'x') -> 'Expression':
        """Builds a constant expression of the given arity."""
        return cls(sympy.sympify(value), _symbols(arity, prefix))

    def wrap(self, node: sympy.Expr) -> 'Expression':
        """Builds an expression over the same symbols as this one."""
        return Expression(sympy.sympify(node), self.symbols)

    @cached_property
    def _fn(self) -> Callable[..., Any]:
        return sympy.lambdify(self.symbols, self.node, modules='numpy')

    def eval(self, point: Sequence[float]) -> float:
        """Evaluates the expression at ``point``.

        Raises:
            ValueError: when ``point`` does not have ``arity`` coordinates.
            ExpressionEvalError: when the value is not finite.
        """
        p = np.asarray(point, dtype=float).ravel()
        if p.shape != (self.arity,):
            raise ValueError(f'point has {p.size} coordinates, expression has arity {self.arity}')
        try:
            with np.errstate(all='ignore'):
                value = complex(self._fn(*p))
        except (ZeroDivisionError, OverflowError) as ex:
            raise ExpressionEvalError(f'{type(ex).__name__} evaluating {self}', p) from ex
        if value.imag != 0 or not math.isfinite(value.real):
            raise ExpressionEvalError(f'non-finite value evaluating {self}', p)
        return value.real

    __call__ = eval

    def derive(self, i: int) -> 'Expression':
        """Exact partial derivative with respect to the ``i``-th variable (0-based)."""
        if not 0 <= i < self.arity:
            raise ValueError(f'variable index {i} out of range for arity {self.arity}')
        return self.wrap(sympy.diff(self.node, self.symbols[i]))

    def gradient(self) -> List['Expression']:
        return [self.derive(i) for i in range(self.arity)]

    @property
    def is_zero(self) -> bool:
        return self.node == 0

    def __str__(self) -> str:
        return to_text(self)

    def __repr__(self) -> str:
        return f'Expression({to_text(self)!r}, {self.arity})'


def parse(text: str, arity: int, *, prefix: str = 'x', names: Optional[Sequence[str]] = None) -> Expression:
    """Parses ``text`` into an :class:`Expression` of the given arity.

    Grammar::

        expr   := term (('+'|'-') term)*
        term   := factor (('*'|'/') factor)*
        factor := ('+'|'-') factor | base ('^' integer)?
        base   := number | ident | func '(' expr ')' | '(' expr ')'

    Args:
        text: the expression text.
        arity: the number of variables.
        prefix: canonical variable prefix, ``x`` for ambient fields and ``u`` for chart parameters.
        names: optional scene-declared variable names, in order.

    Raises:
        ExpressionSyntaxError: on malformed input, with the character position.
        UnknownIdentifierError: on names that are not variables, functions or constants.
    """
    if not isinstance(text, str):
        raise TypeError(f'expected str, got {type(text).__name__}')
    symbols = _symbols(arity, prefix)
    node = _Parser(text, variable_names(arity, prefix, names), symbols).parse()
    return Expression(sympy.sympify(node), symbols)


def evaluate(e: Expression, p: Sequence[float]) -> float:
    return e.eval(p)


def derive(e: Expression, i: int) -> Expression:
    return e.derive(i)


def to_text(e: Expression) -> str:
    """Prints an expression in the grammar accepted by :func:`parse`."""
    return sympy.sstr(e.node).replace('**', '^')


def compile_array(entries: Any, symbols: Tuple[sympy.Symbol, ...]) -> Callable[[np.ndarray], np.ndarray]:
    """Compiles a nested list of Expressions (or sympy nodes) into one function returning a float array.

    A single compiled call per point keeps flows and scans fast.
    """
    obj = np.asarray(entries, dtype=object)
    shape = obj.shape
    flat = [e.node if isinstance(e, Expression) else sympy.sympify(e) for e in obj.ravel()]
    fn = sympy.lambdify(symbols, flat, modules='numpy')

    def compiled(point: np.ndarray) -> np.ndarray:
        with np.errstate(all='ignore'):
            values = fn(*np.asarray(point, dtype=float).ravel())
        return np.asarray(values, dtype=float).reshape(shape)
    return compiled
