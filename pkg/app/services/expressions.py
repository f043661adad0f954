import logging
import re
from dataclasses import dataclass, field
from typing import List, Optional, Set, Tuple, Union

import numpy as np

from app.exceptions import FamilySyntaxError, HolomorphyGuardError

logger = logging.getLogger(__name__)


# Syntax tree

@dataclass(frozen=True)
class Literal:
    value: complex


@dataclass(frozen=True)
class Variable:
    kind: str
    index: int
    position: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Abs:
    arg: "Node"


Node = Union[Literal, Variable, Add, Sub, Mul, Pow, Abs]


# Tokenizer

_TOKEN = re.compile(
    r"(?P<space>[ \t\r\n]+)"
    r"|(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?[ji]?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*^()])"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> List[Token]:
    tokens = []
    pos, line, column = 0, 1, 1
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise FamilySyntaxError(f"Unexpected character '{text[pos]}'", line, column)
        chunk = match.group(0)
        kind = match.lastgroup
        if kind != "space":
            tokens.append(Token(kind, chunk, line, column))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            column = len(chunk) - chunk.rfind("\n")
        else:
            column += len(chunk)
        pos = match.end()
    tokens.append(Token("end", "", line, column))
    return tokens


# Parser

_VARIABLE = re.compile(r"^([za])([1-9]\d*)$")


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.current
        if token.text != text:
            found = "end of input" if token.kind == "end" else f"'{token.text}'"
            raise FamilySyntaxError(f"Expected '{text}' but found {found}", token.line, token.column)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        token = self.current
        if token.kind != "end":
            raise FamilySyntaxError(f"Unexpected '{token.text}'", token.line, token.column)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.current.text in ("+", "-"):
            op = self.advance().text
            right = self.term()
            node = Add(node, right) if op == "+" else Sub(node, right)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.current.text == "*":
            self.advance()
            node = Mul(node, self.factor())
        return node

    def factor(self) -> Node:
        node = self.atom()
        if self.current.text == "^":
            self.advance()
            token = self.current
            if token.kind != "number" or not token.text.isdigit():
                raise FamilySyntaxError("Exponent must be a non-negative integer", token.line, token.column)
            self.advance()
            node = Pow(node, int(token.text))
        return node

    def atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self.advance()
            return Literal(_literal_value(token.text))
        if token.kind == "name":
            self.advance()
            if token.text == "abs":
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                offender = _first_z(arg)
                if offender is not None:
                    line, column = offender.position or (token.line, token.column)
                    raise HolomorphyGuardError(offender.name, line, column)
                return Abs(arg)
            match = _VARIABLE.match(token.text)
            if match is None:
                raise FamilySyntaxError(f"Unknown name '{token.text}'", token.line, token.column)
            return Variable(match.group(1), int(match.group(2)), (token.line, token.column))
        if token.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if token.kind == "end" else f"'{token.text}'"
        raise FamilySyntaxError(f"Unexpected {found}", token.line, token.column)


def _literal_value(text: str) -> complex:
    if text[-1] in "ji":
        return complex(0.0, float(text[:-1]))
    return complex(float(text), 0.0)


def _first_z(node: Node) -> Optional[Variable]:
    for var in walk_variables(node):
        if var.kind == "z":
            return var
    return None


def walk_variables(node: Node):
    if isinstance(node, Variable):
        yield node
    elif isinstance(node, (Add, Sub, Mul)):
        yield from walk_variables(node.left)
        yield from walk_variables(node.right)
    elif isinstance(node, Pow):
        yield from walk_variables(node.base)
    elif isinstance(node, Abs):
        yield from walk_variables(node.arg)


# Printer

def _format_literal(value: complex) -> str:
    value = complex(value)
    if value.imag == 0.0 and value.real >= 0.0:
        return repr(float(value.real))
    if value.real == 0.0 and value.imag >= 0.0:
        return repr(float(value.imag)) + "j"
    raise ValueError(f"Literal {value!r} has no single-token form")


def _is_atom(node: Node) -> bool:
    return isinstance(node, (Literal, Variable, Abs))


def to_text(node: Node) -> str:
    """
    Print a tree with the parentheses needed to re-parse it to the same tree
    """
    if isinstance(node, Literal):
        return _format_literal(node.value)
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Abs):
        return f"abs({to_text(node.arg)})"
    if isinstance(node, (Add, Sub)):
        op = "+" if isinstance(node, Add) else "-"
        right = to_text(node.right)
        if isinstance(node.right, (Add, Sub)):
            right = f"({right})"
        return f"{to_text(node.left)} {op} {right}"
    if isinstance(node, Mul):
        left = to_text(node.left)
        if isinstance(node.left, (Add, Sub)):
            left = f"({left})"
        right = to_text(node.right)
        if isinstance(node.right, (Add, Sub, Mul)):
            right = f"({right})"
        return f"{left}*{right}"
    if isinstance(node, Pow):
        base = to_text(node.base)
        if not _is_atom(node.base):
            base = f"({base})"
        return f"{base}^{node.exponent}"
    raise TypeError(f"Not an expression node: {node!r}")


# Evaluation (vectorised forward mode in z)

def _evaluate(node: Node, a: np.ndarray, z: np.ndarray, q: int, with_gradient: bool):
    if isinstance(node, Literal):
        return np.asarray(node.value), None
    if isinstance(node, Variable):
        if node.kind == "a":
            return a[..., node.index - 1], None
        value = z[..., node.index - 1]
        if not with_gradient:
            return value, None
        grad = np.zeros(q, dtype=complex)
        grad[node.index - 1] = 1.0
        return value, grad
    if isinstance(node, Abs):
        value, _ = _evaluate(node.arg, a, z, q, False)
        return np.abs(value).astype(complex), None
    if isinstance(node, (Add, Sub)):
        v1, g1 = _evaluate(node.left, a, z, q, with_gradient)
        v2, g2 = _evaluate(node.right, a, z, q, with_gradient)
        sign = 1.0 if isinstance(node, Add) else -1.0
        value = v1 + sign * v2
        if g1 is None and g2 is None:
            return value, None
        if g1 is None:
            return value, sign * g2
        if g2 is None:
            return value, g1
        return value, g1 + sign * g2
    if isinstance(node, Mul):
        v1, g1 = _evaluate(node.left, a, z, q, with_gradient)
        v2, g2 = _evaluate(node.right, a, z, q, with_gradient)
        value = v1 * v2
        grad = None
        if g1 is not None:
            grad = g1 * np.asarray(v2)[..., None]
        if g2 is not None:
            term = np.asarray(v1)[..., None] * g2
            grad = term if grad is None else grad + term
        return value, grad
    if isinstance(node, Pow):
        v, g = _evaluate(node.base, a, z, q, with_gradient)
        k = node.exponent
        if k == 0:
            return np.ones_like(np.asarray(v, dtype=complex)), None
        value = np.asarray(v, dtype=complex) ** k
        if g is None:
            return value, None
        return value, (k * np.asarray(v, dtype=complex) ** (k - 1))[..., None] * g
    raise TypeError(f"Not an expression node: {node!r}")


class FamilyExpression:
    """
    Parsed plaque-family component over z1..zq and a1..ad
    """

    def __init__(self, tree: Node, text: Optional[str] = None):
        self.tree = tree
        self.text = text if text is not None else to_text(tree)

    def __eq__(self, other) -> bool:
        return isinstance(other, FamilyExpression) and self.tree == other.tree

    def __hash__(self) -> int:
        return hash(self.tree)

    def __repr__(self) -> str:
        return f"FamilyExpression({to_text(self.tree)!r})"

    def __str__(self) -> str:
        return to_text(self.tree)

    def variables(self) -> Set[str]:
        return {var.name for var in walk_variables(self.tree)}

    @property
    def uses_z(self) -> bool:
        return any(var.kind == "z" for var in walk_variables(self.tree))

    def max_index(self, kind: str) -> int:
        return max((var.index for var in walk_variables(self.tree) if var.kind == kind), default=0)

    def evaluate(self, a: np.ndarray, z: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        z = np.asarray(z, dtype=complex)
        value, _ = _evaluate(self.tree, a, z, z.shape[-1], False)
        shape = np.broadcast_shapes(a.shape[:-1], z.shape[:-1])
        return np.broadcast_to(np.asarray(value, dtype=complex), shape)

    def evaluate_with_gradient(self, a: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a = np.asarray(a, dtype=complex)
        z = np.asarray(z, dtype=complex)
        q = z.shape[-1]
        value, grad = _evaluate(self.tree, a, z, q, True)
        shape = np.broadcast_shapes(a.shape[:-1], z.shape[:-1])
        value = np.broadcast_to(np.asarray(value, dtype=complex), shape)
        if grad is None:
            grad = np.zeros(shape + (q,), dtype=complex)
        else:
            grad = np.broadcast_to(grad, shape + (q,))
        return value, grad


def parse_family(text: str) -> FamilyExpression:
    """
    Parse one component of a plaque family
    """
    tree = _Parser(text).parse()
    logger.debug(f"Parsed family expression {to_text(tree)!r}")
    return FamilyExpression(tree, text)
