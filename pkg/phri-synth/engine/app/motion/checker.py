"""
Static checks over parsed motion programs: value kinds, the grounding taint
rule, the statement cap and the scoping of seeded randomness.
"""

from dataclasses import dataclass, field
from typing import Optional

from pydantic import BaseModel

from ..errors import PhriError, ProgramTooLarge, ProgramTypeError, UngroundedPosition, UnscopedRandomness
from .nodes import BaseStmt, BinOp, Call, Let, MotionProgram, Name, Neg, Number, String, TargetStmt, WaypointStmt

MAX_STATEMENTS = 256

SCALAR, VEC3, QUAT = "scalar", "vec3", "quat"

# argument kinds, result kind, grounding call
SIGNATURES = {
    "vec3": ((SCALAR, SCALAR, SCALAR), VEC3, False),
    "joint": (("string",), VEC3, True),
    "surface": ((VEC3,), VEC3, True),
    "normal_at": ((VEC3,), VEC3, True),
    "camera_pos": ((), VEC3, True),
    "lerp": ((VEC3, VEC3, SCALAR), VEC3, False),
    "unit": ((VEC3,), VEC3, False),
    "norm": ((VEC3,), SCALAR, False),
    "cross": ((VEC3, VEC3), VEC3, False),
    "dot": ((VEC3, VEC3), SCALAR, False),
    "rand": ((SCALAR, SCALAR), SCALAR, False),
    "look_at": ((VEC3, VEC3), QUAT, False),
    "axis_angle": ((VEC3, SCALAR), QUAT, False),
}

BINARY_KINDS = {
    ("+", SCALAR, SCALAR): SCALAR,
    ("+", VEC3, VEC3): VEC3,
    ("-", SCALAR, SCALAR): SCALAR,
    ("-", VEC3, VEC3): VEC3,
    ("*", SCALAR, SCALAR): SCALAR,
    ("*", SCALAR, VEC3): VEC3,
    ("*", VEC3, SCALAR): VEC3,
    ("*", QUAT, QUAT): QUAT,
    ("/", SCALAR, SCALAR): SCALAR,
    ("/", VEC3, SCALAR): VEC3,
}


class CheckIssue(BaseModel):
    code: str
    message: str
    line: Optional[int] = None
    column: Optional[int] = None


class CheckReport(BaseModel):
    ok: bool
    kind: str
    statement_count: int
    issues: list[CheckIssue] = []
    seed_dependent_waypoints: list[int] = []
    target_seed_dependent: bool = False


@dataclass(frozen=True)
class ValueInfo:
    kind: Optional[str]  # None after an earlier error, so it never cascades
    grounded: bool = False
    rand_sources: frozenset = field(default_factory=frozenset)


class _Checker:
    def __init__(self):
        self.env: dict[str, ValueInfo] = {}
        self.issues: list[CheckIssue] = []
        self.rand_count = 0

    def issue(self, code: str, message: str, node) -> None:
        loc = getattr(node, "loc", None)
        self.issues.append(
            CheckIssue(
                code=code,
                message=message,
                line=loc.line if loc else None,
                column=loc.column if loc else None,
            )
        )

    def infer(self, node) -> ValueInfo:
        if isinstance(node, Number):
            return ValueInfo(SCALAR)
        if isinstance(node, String):
            return ValueInfo("string")
        if isinstance(node, Name):
            if node.name not in self.env:
                self.issue("type_error", f"undefined name {node.name!r}", node)
                return ValueInfo(None)
            return self.env[node.name]
        if isinstance(node, Neg):
            info = self.infer(node.operand)
            if info.kind not in (None, SCALAR, VEC3):
                self.issue("type_error", f"cannot negate a {info.kind}", node)
                return ValueInfo(None)
            return info
        if isinstance(node, BinOp):
            left, right = self.infer(node.left), self.infer(node.right)
            merged = ValueInfo(
                None,
                left.grounded or right.grounded,
                left.rand_sources | right.rand_sources,
            )
            if left.kind is None or right.kind is None:
                return merged
            kind = BINARY_KINDS.get((node.op, left.kind, right.kind))
            if kind is None:
                self.issue("type_error", f"unsupported operands {left.kind} {node.op} {right.kind}", node)
                return merged
            return ValueInfo(kind, merged.grounded, merged.rand_sources)
        if isinstance(node, Call):
            return self.infer_call(node)
        raise TypeError(f"not an expression node: {node!r}")

    def infer_call(self, node: Call) -> ValueInfo:
        expected, result, grounding = SIGNATURES[node.func]
        args = [self.infer(arg) for arg in node.args]
        grounded = grounding or any(arg.grounded for arg in args)
        sources = frozenset().union(*(arg.rand_sources for arg in args))
        if node.func == "rand":
            sources = sources | {self.rand_count}
            self.rand_count += 1
        failed = False
        for position, (want, got) in enumerate(zip(expected, args), start=1):
            if got.kind is not None and got.kind != want:
                self.issue(
                    "type_error",
                    f"{node.func} argument {position} must be a {want}, got {got.kind}",
                    node,
                )
                failed = True
        return ValueInfo(None if failed else result, grounded, sources)

    def expect(self, info: ValueInfo, kind: str, what: str, node) -> None:
        if info.kind is not None and info.kind != kind:
            self.issue("type_error", f"{what} must be a {kind}, got {info.kind}", node)

    def position(self, info: ValueInfo, what: str, node) -> None:
        self.expect(info, VEC3, what, node)
        if not info.grounded:
            self.issue("ungrounded_position", f"{what} does not depend on any grounding query", node)


def check_program(program: MotionProgram) -> CheckReport:
    """Type-check a program and report every issue with its source location."""
    checker = _Checker()
    count = len(program.statements)
    if count > MAX_STATEMENTS:
        checker.issue("program_too_large", f"{count} statements exceed the limit of {MAX_STATEMENTS}", None)

    waypoint_sources: list[frozenset] = []
    waypoint_nodes: list[WaypointStmt] = []
    target_sources: frozenset = frozenset()
    for stmt in program.statements:
        if isinstance(stmt, Let):
            checker.env[stmt.name] = checker.infer(stmt.value)
        elif isinstance(stmt, WaypointStmt):
            position = checker.infer(stmt.position)
            checker.position(position, "waypoint position", stmt)
            orientation = checker.infer(stmt.orientation)
            checker.expect(orientation, QUAT, "waypoint orientation", stmt)
            speed = checker.infer(stmt.speed)
            checker.expect(speed, SCALAR, "waypoint speed", stmt)
            waypoint_sources.append(position.rand_sources | orientation.rand_sources | speed.rand_sources)
            waypoint_nodes.append(stmt)
        elif isinstance(stmt, TargetStmt):
            point = checker.infer(stmt.point)
            checker.position(point, "target point", stmt)
            target_sources = point.rand_sources
        elif isinstance(stmt, BaseStmt):
            checker.position(checker.infer(stmt.position), "base position", stmt)
            checker.position(checker.infer(stmt.focus), "base focus", stmt)

    for stmt, sources in zip(waypoint_nodes, waypoint_sources):
        if not sources <= target_sources:
            checker.issue("unscoped_rand", "waypoint uses a rand() draw that the target point does not depend on", stmt)

    return CheckReport(
        ok=not checker.issues,
        kind=program.kind,
        statement_count=count,
        issues=checker.issues,
        seed_dependent_waypoints=[index for index, sources in enumerate(waypoint_sources) if sources],
        target_seed_dependent=bool(target_sources),
    )


ISSUE_ERRORS = {
    "type_error": ProgramTypeError,
    "ungrounded_position": UngroundedPosition,
    "program_too_large": ProgramTooLarge,
    "unscoped_rand": UnscopedRandomness,
}


def ensure_checked(program: MotionProgram) -> CheckReport:
    """Run :func:`check_program` and raise the first issue as its error type."""
    report = check_program(program)
    if not report.ok:
        first = report.issues[0]
        error_class = ISSUE_ERRORS.get(first.code, PhriError)
        raise error_class(first.message, line=first.line, column=first.column)
    return report
