"""Syntax tree of motion programs. Source locations never take part in equality."""

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class Location:
    line: int
    column: int


def _loc():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Number:
    value: float
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class String:
    value: str
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class Name:
    name: str
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    loc: Optional[Location] = _loc()


Expr = Union[Number, String, Name, Neg, BinOp, Call]


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class WaypointStmt:
    position: Expr
    orientation: Expr
    speed: Expr
    contact: bool
    planner: str
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class TargetStmt:
    point: Expr
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class BaseStmt:
    position: Expr
    focus: Expr
    loc: Optional[Location] = _loc()


Statement = Union[Let, WaypointStmt, TargetStmt, BaseStmt]


@dataclass(frozen=True)
class MotionProgram:
    statements: tuple
    kind: str  # "trajectory" or "placement"
    source: str = field(default="", compare=False, repr=False)

    @property
    def waypoints(self) -> list[WaypointStmt]:
        return [s for s in self.statements if isinstance(s, WaypointStmt)]
