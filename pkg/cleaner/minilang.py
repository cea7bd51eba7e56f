"""
Mini-language Interpreter
A deterministic, total interpreter for a tiny integer statement language.
It plays the code-execution environment: every fault comes back as a
Failure observation, never as a Python exception.

Grammar (see docs/minilang.md):

    program    = { assignment ";" } expression ;
    assignment = name "=" expression ;
    expression = term { ("+" | "-") term } ;
    term       = unary { ("*" | "/" | "%") unary } ;
    unary      = "-" unary | atom ;
    atom       = integer | name | "(" expression ")" ;

Division truncates toward zero; the remainder takes the sign of the
dividend, so a == (a / b) * b + a % b always holds.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

from .errors import ContractViolation
from .trajectory import ErrorKind, Observation

logger = logging.getLogger(__name__)

MAX_STATEMENTS = 16
MAX_NESTING = 64
MAX_TREE_DEPTH = 200
MAX_LITERAL_DIGITS = 1000
DIGITS = "0123456789"
LETTERS = "abcdefghijklmnopqrstuvwxyz"
OPERATORS = "+-*/%=();"
WHITESPACE = " \t\r\n"


@dataclass(frozen=True)
class ExecLimits:
    """Bounds that make execution total"""
    max_steps: int = 10_000
    max_abs_value: int = 2 ** 62

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ContractViolation("max_steps must be strictly positive")
        if self.max_abs_value <= 0:
            raise ContractViolation("max_abs_value must be strictly positive")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: int

    def render(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Var:
    name: str

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class Neg:
    operand: "Expr"

    def render(self) -> str:
        return f"(-{self.operand.render()})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def render(self) -> str:
        return f"({self.left.render()} {self.op} {self.right.render()})"


Expr = Union[Num, Var, Neg, BinOp]


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Expr

    def render(self) -> str:
        return f"{self.name} = {self.expr.render()}"


@dataclass(frozen=True)
class Program:
    """Assignments followed by exactly one final expression"""
    assignments: Tuple[Assign, ...]
    final: Expr
    source: str = ""

    @property
    def statements(self) -> Tuple[Union[Assign, Expr], ...]:
        return self.assignments + (self.final,)

    def render(self) -> str:
        """Canonical, fully parenthesized source"""
        return "; ".join(s.render() for s in self.statements)


@dataclass(frozen=True)
class ParseFailure:
    position: int
    expected: str
    found: str

    @property
    def message(self) -> str:
        return f"parse error at position {self.position}: expected {self.expected}, found {self.found}"


# ---------------------------------------------------------------------------
# lexer / parser
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # "int", "name", "op", "end"
    text: str
    position: int

    def describe(self) -> str:
        if self.kind == "end":
            return "end of input"
        return repr(self.text)


class _ParseError(Exception):
    def __init__(self, failure: ParseFailure):
        self.failure = failure


def tokenize(source: str) -> List[Token]:
    tokens = []
    i = 0
    while i < len(source):
        ch = source[i]
        if ch in WHITESPACE:
            i += 1
        elif ch in DIGITS:
            start = i
            while i < len(source) and source[i] in DIGITS:
                i += 1
            tokens.append(Token("int", source[start:i], start))
        elif ch in LETTERS:
            if i + 1 < len(source) and source[i + 1] in LETTERS:
                raise _ParseError(ParseFailure(i + 1, "a single-letter name", repr(source[i:i + 2])))
            tokens.append(Token("name", ch, i))
            i += 1
        elif ch in OPERATORS:
            tokens.append(Token("op", ch, i))
            i += 1
        else:
            raise _ParseError(ParseFailure(i, "a token", repr(ch)))
    tokens.append(Token("end", "", len(source)))
    return tokens


class Parser:
    """Recursive-descent parser with a nesting bound"""

    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.index = 0
        self.depth = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def _peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def _fail(self, expected: str):
        raise _ParseError(ParseFailure(self.current.position, expected, self.current.describe()))

    def _expect(self, text: str):
        if self.current.kind == "op" and self.current.text == text:
            self.index += 1
        else:
            self._fail(repr(text))

    def parse_program(self) -> Program:
        assignments = []
        statement_count = 0
        while True:
            statement_count += 1
            if statement_count > MAX_STATEMENTS:
                self._fail(f"at most {MAX_STATEMENTS} statements")
            if self.current.kind == "name" and self._peek().text == "=" and self._peek().kind == "op":
                name = self.current.text
                self.index += 2
                assignments.append(Assign(name, self.parse_expression()))
                self._expect(";")
                continue
            final = self.parse_expression()
            if self.current.kind == "op" and self.current.text == ";":
                self._fail("end of input after the final expression")
            if self.current.kind != "end":
                self._fail("an operator or end of input")
            return Program(tuple(assignments), final, self.source)

    def parse_expression(self) -> Expr:
        node, _ = self._expression()
        return node

    # the private parsers return (node, tree depth); evaluation recurses
    # along the tree, so its depth is bounded here
    def _deeper(self, depth: int) -> int:
        if depth > MAX_TREE_DEPTH:
            self._fail(f"expression depth at most {MAX_TREE_DEPTH}")
        return depth

    def _expression(self) -> Tuple[Expr, int]:
        node, depth = self._term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.current.text
            self.index += 1
            right, right_depth = self._term()
            node, depth = BinOp(op, node, right), self._deeper(max(depth, right_depth) + 1)
        return node, depth

    def _term(self) -> Tuple[Expr, int]:
        node, depth = self._unary()
        while self.current.kind == "op" and self.current.text in "*/%":
            op = self.current.text
            self.index += 1
            right, right_depth = self._unary()
            node, depth = BinOp(op, node, right), self._deeper(max(depth, right_depth) + 1)
        return node, depth

    def _unary(self) -> Tuple[Expr, int]:
        self.depth += 1
        if self.depth > MAX_NESTING:
            self._fail(f"nesting depth at most {MAX_NESTING}")
        try:
            if self.current.kind == "op" and self.current.text == "-":
                self.index += 1
                operand, depth = self._unary()
                return Neg(operand), self._deeper(depth + 1)
            return self._atom()
        finally:
            self.depth -= 1

    def _atom(self) -> Tuple[Expr, int]:
        token = self.current
        if token.kind == "int":
            if len(token.text) > MAX_LITERAL_DIGITS:
                self._fail(f"an integer literal of at most {MAX_LITERAL_DIGITS} digits")
            self.index += 1
            return Num(int(token.text)), 1
        if token.kind == "name":
            self.index += 1
            return Var(token.text), 1
        if token.kind == "op" and token.text == "(":
            self.index += 1
            node, depth = self._expression()
            self._expect(")")
            return node, depth
        self._fail("an expression")


def parse(source: Union[str, bytes]) -> Union[Program, ParseFailure]:
    """Parse source text into a Program, or describe where parsing failed"""
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as e:
            return ParseFailure(e.start, "UTF-8 text", f"byte 0x{source[e.start]:02x}")
    try:
        return Parser(source).parse_program()
    except _ParseError as e:
        return e.failure


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

class _Fault(Exception):
    def __init__(self, kind: ErrorKind, message: str):
        self.kind = kind
        self.message = message


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _trunc_mod(a: int, b: int) -> int:
    return a - b * _trunc_div(a, b)


class Interpreter:
    """Evaluates one Program under ExecLimits; a fresh instance per run"""

    def __init__(self, limits: ExecLimits):
        self.limits = limits
        self.env: Dict[str, int] = {}
        self.steps = 0

    def _tick(self):
        self.steps += 1
        if self.steps > self.limits.max_steps:
            raise _Fault(ErrorKind.STEP_LIMIT, f"step limit of {self.limits.max_steps} exceeded")

    def _bounded(self, value: int, operation: str) -> int:
        if abs(value) > self.limits.max_abs_value:
            raise _Fault(
                ErrorKind.OVERFLOW,
                f"overflow in {operation}: magnitude exceeds {self.limits.max_abs_value}",
            )
        return value

    def evaluate(self, node: Expr) -> int:
        self._tick()
        if isinstance(node, Num):
            return self._bounded(node.value, f"literal {node.value}")
        if isinstance(node, Var):
            if node.name not in self.env:
                raise _Fault(ErrorKind.UNDEFINED_VARIABLE, f"undefined variable '{node.name}'")
            return self.env[node.name]
        if isinstance(node, Neg):
            value = self.evaluate(node.operand)
            return self._bounded(-value, f"-{value}")
        left = self.evaluate(node.left)
        right = self.evaluate(node.right)
        operation = f"{left} {node.op} {right}"
        if node.op == "+":
            return self._bounded(left + right, operation)
        if node.op == "-":
            return self._bounded(left - right, operation)
        if node.op == "*":
            return self._bounded(left * right, operation)
        if right == 0:
            raise _Fault(ErrorKind.DIVISION_BY_ZERO, f"division by zero in {operation}")
        if node.op == "/":
            return self._bounded(_trunc_div(left, right), operation)
        return self._bounded(_trunc_mod(left, right), operation)

    def execute(self, program: Program) -> int:
        for statement in program.assignments:
            self._tick()
            self.env[statement.name] = self.evaluate(statement.expr)
        return self.evaluate(program.final)


def execute(program: Program, limits: ExecLimits = ExecLimits()) -> Observation:
    """Run a parsed program; faults become Failure observations"""
    try:
        value = Interpreter(limits).execute(program)
    except _Fault as fault:
        return Observation.failure(fault.kind, fault.message)
    return Observation.success(value)


def run(source: Union[str, bytes], limits: ExecLimits = ExecLimits()) -> Observation:
    """parse ∘ execute; a parse failure becomes Failure(Parse)"""
    program = parse(source)
    if isinstance(program, ParseFailure):
        return Observation.failure(ErrorKind.PARSE, program.message)
    return execute(program, limits)

