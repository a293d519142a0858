"""
Tokenizer, recursive-descent parser and pretty-printer for ``.mp`` motion programs.

Programs are straight-line: ``let`` bindings followed by ``waypoint``,
``target`` and ``base`` emissions. There are no loops, conditionals or
user-defined functions.
"""

import re
from dataclasses import dataclass
from typing import Optional

from ..errors import ArityError, InvalidProgram, ProgramSyntaxError, UnknownFunction
from .nodes import (
    BaseStmt,
    BinOp,
    Call,
    Expr,
    Let,
    Location,
    MotionProgram,
    Name,
    Neg,
    Number,
    String,
    TargetStmt,
    WaypointStmt,
)

FUNCTION_ARITY = {
    "vec3": 3,
    "joint": 1,
    "surface": 1,
    "normal_at": 1,
    "camera_pos": 0,
    "lerp": 3,
    "unit": 1,
    "norm": 1,
    "cross": 2,
    "dot": 2,
    "rand": 2,
    "look_at": 2,
    "axis_angle": 2,
}
PLANNERS = ("rrt", "cartesian")
KEYWORDS = {"let", "waypoint", "target", "base", "true", "false", *PLANNERS}

TOKEN_PATTERN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>[(),;=+\-*/])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # number, ident, string, punct, eof
    text: str
    line: int
    column: int

    @property
    def loc(self) -> Location:
        return Location(self.line, self.column)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        match = TOKEN_PATTERN.match(source, pos)
        if match is None:
            raise ProgramSyntaxError(
                f"unexpected character {source[pos]!r}", line=line, column=pos - line_start + 1
            )
        kind = match.lastgroup
        if kind == "newline":
            line += 1
            line_start = match.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, match.group(), line, pos - line_start + 1))
        pos = match.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        if token.kind != "eof":
            self.index += 1
        return token

    def error(self, message: str, token: Optional[Token] = None) -> ProgramSyntaxError:
        token = token or self.current
        shown = token.text or "end of input"
        return ProgramSyntaxError(f"{message}, found {shown!r}", line=token.line, column=token.column)

    def check(self, text: str) -> bool:
        token = self.current
        return token.kind in ("punct", "ident") and token.text == text

    def expect(self, text: str) -> Token:
        if not self.check(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def expect_ident(self) -> Token:
        token = self.current
        if token.kind != "ident" or token.text in KEYWORDS or token.text in FUNCTION_ARITY:
            raise self.error("expected an identifier")
        return self.advance()

    # statements

    def parse(self) -> tuple:
        statements = []
        while self.current.kind != "eof":
            statements.append(self.statement())
        return tuple(statements)

    def statement(self):
        token = self.current
        if token.kind != "ident" or token.text not in ("let", "waypoint", "target", "base"):
            raise self.error("expected a statement")
        self.advance()
        if token.text == "let":
            name = self.expect_ident().text
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return Let(name, value, loc=token.loc)

        self.expect("(")
        if token.text == "waypoint":
            position = self.expr()
            self.expect(",")
            orientation = self.expr()
            self.expect(",")
            speed = self.expr()
            self.expect(",")
            contact = self.boolean()
            self.expect(",")
            planner = self.planner()
            node = WaypointStmt(position, orientation, speed, contact, planner, loc=token.loc)
        elif token.text == "target":
            node = TargetStmt(self.expr(), loc=token.loc)
        else:
            position = self.expr()
            self.expect(",")
            node = BaseStmt(position, self.expr(), loc=token.loc)
        self.expect(")")
        self.expect(";")
        return node

    def boolean(self) -> bool:
        if self.check("true") or self.check("false"):
            return self.advance().text == "true"
        raise self.error("expected true or false")

    def planner(self) -> str:
        if self.current.kind == "ident" and self.current.text in PLANNERS:
            return self.advance().text
        raise self.error("expected a planner (rrt or cartesian)")

    # expressions

    def expr(self) -> Expr:
        node = self.term()
        while self.check("+") or self.check("-"):
            op = self.advance()
            node = BinOp(op.text, node, self.term(), loc=op.loc)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.check("*") or self.check("/"):
            op = self.advance()
            node = BinOp(op.text, node, self.factor(), loc=op.loc)
        return node

    def factor(self) -> Expr:
        token = self.current
        if token.kind == "number":
            self.advance()
            return Number(float(token.text), loc=token.loc)
        if token.kind == "string":
            raise self.error("string literals are only allowed as the argument of joint()")
        if self.check("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if self.check("-"):
            self.advance()
            return Neg(self.factor(), loc=token.loc)
        if token.kind == "ident" and token.text not in KEYWORDS:
            self.advance()
            if self.check("("):
                return self.call(token)
            if token.text in FUNCTION_ARITY:
                raise self.error(f"function {token.text} must be called")
            return Name(token.text, loc=token.loc)
        raise self.error("expected an expression")

    def call(self, name: Token) -> Call:
        if name.text not in FUNCTION_ARITY:
            raise UnknownFunction(f"unknown function {name.text!r}", line=name.line, column=name.column)
        self.expect("(")
        args = []
        if name.text == "joint":
            token = self.current
            if token.kind != "string":
                raise self.error("joint name must be a string literal", token)
            self.advance()
            args.append(String(token.text[1:-1], loc=token.loc))
        elif not self.check(")"):
            args.append(self.expr())
        while args and self.check(","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTION_ARITY[name.text]:
            raise ArityError(
                f"{name.text} takes {FUNCTION_ARITY[name.text]} argument(s), got {len(args)}",
                line=name.line,
                column=name.column,
            )
        return Call(name.text, tuple(args), loc=name.loc)


def program_kind(statements: tuple) -> str:
    waypoints = sum(isinstance(s, WaypointStmt) for s in statements)
    targets = sum(isinstance(s, TargetStmt) for s in statements)
    bases = sum(isinstance(s, BaseStmt) for s in statements)
    if bases:
        if bases != 1 or waypoints or targets:
            raise InvalidProgram(
                "placement programs need exactly one base statement and no waypoint or target",
                bases=bases,
                waypoints=waypoints,
                targets=targets,
            )
        return "placement"
    if waypoints < 1:
        raise InvalidProgram("trajectory programs need at least one waypoint statement")
    if targets != 1:
        raise InvalidProgram("trajectory programs need exactly one target statement", targets=targets)
    return "trajectory"


def parse_program(source: str) -> MotionProgram:
    statements = Parser(source).parse()
    return MotionProgram(statements=statements, kind=program_kind(statements), source=source)


# pretty-printing


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_expr(node: Expr) -> str:
    if isinstance(node, Number):
        return format_number(node.value)
    if isinstance(node, String):
        return f'"{node.value}"'
    if isinstance(node, Name):
        return node.name
    if isinstance(node, Neg):
        return f"-{format_expr(node.operand)}"
    if isinstance(node, BinOp):
        return f"({format_expr(node.left)} {node.op} {format_expr(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(format_expr(arg) for arg in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def format_statement(stmt) -> str:
    if isinstance(stmt, Let):
        return f"let {stmt.name} = {format_expr(stmt.value)};"
    if isinstance(stmt, WaypointStmt):
        parts = [format_expr(stmt.position), format_expr(stmt.orientation), format_expr(stmt.speed)]
        parts += ["true" if stmt.contact else "false", stmt.planner]
        return f"waypoint({', '.join(parts)});"
    if isinstance(stmt, TargetStmt):
        return f"target({format_expr(stmt.point)});"
    if isinstance(stmt, BaseStmt):
        return f"base({format_expr(stmt.position)}, {format_expr(stmt.focus)});"
    raise TypeError(f"not a statement node: {stmt!r}")


def format_program(program: MotionProgram) -> str:
    return "".join(format_statement(stmt) + "\n" for stmt in program.statements)
