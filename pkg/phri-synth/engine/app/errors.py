"""
Error types shared by every pipeline stage.

Each error carries a stable snake_case ``code`` so the command line, the
episode log and rejection records can name failures without parsing text.
"""

from typing import Any


class PhriError(Exception):
    code = "phri_error"

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}

    def __str__(self) -> str:
        if not self.details:
            return self.message
        extras = ", ".join(f"{key}={value}" for key, value in sorted(self.details.items()))
        return f"{self.message} ({extras})"


# Scenario providers
class ProviderUnreachable(PhriError):
    code = "provider_unreachable"


class MalformedResponse(PhriError):
    code = "malformed_response"


class FixtureMiss(PhriError):
    code = "fixture_miss"


class AuthFailure(PhriError):
    code = "auth_failure"


class ProviderTimeout(PhriError):
    code = "timeout"


# Human body
class UnknownJoint(PhriError):
    code = "unknown_joint"


class IOFailure(PhriError):
    code = "io_error"


# Scene
class LayoutInfeasible(PhriError):
    code = "layout_infeasible"


class NoAffordance(PhriError):
    code = "no_affordance"


class NoFreeSpace(PhriError):
    code = "no_free_space"


class EmptyMesh(PhriError):
    code = "empty_mesh"


class UnsupportedPosture(PhriError):
    code = "unsupported_posture"


class PlacementCollision(PhriError):
    code = "placement_collision"


class RobotPlacementFailed(PhriError):
    code = "robot_placement_failed"


# Motion language
class ProgramSyntaxError(PhriError):
    code = "syntax_error"


class UnknownFunction(PhriError):
    code = "unknown_function"


class ArityError(PhriError):
    code = "arity_error"


class InvalidProgram(PhriError):
    code = "invalid_program"


class ProgramTypeError(PhriError):
    code = "type_error"


class UngroundedPosition(PhriError):
    code = "ungrounded_position"


class ProgramTooLarge(PhriError):
    code = "program_too_large"


class UnscopedRandomness(PhriError):
    code = "unscoped_rand"


class RuntimeTypeError(PhriError):
    code = "runtime_type_error"


class EmptyCloud(PhriError):
    code = "empty_cloud"


# Planning
class IKNoConverge(PhriError):
    code = "ik_no_converge"


class RRTFailure(PhriError):
    code = "rrt_failure"


class InvalidStart(PhriError):
    code = "invalid_start"


class ForbiddenContact(PhriError):
    code = "forbidden_contact"


class FurnitureCollision(PhriError):
    code = "furniture_collision"


class PlannerMisuse(PhriError):
    code = "planner_misuse"


# Observations
class InsufficientPoints(PhriError):
    code = "insufficient_points"


class WrongCloudSize(PhriError):
    code = "wrong_cloud_size"


# Dataset
class CorruptFile(PhriError):
    code = "corrupt_file"


class VersionMismatch(PhriError):
    code = "version_mismatch"


class UnrecoverableConfig(PhriError):
    code = "unrecoverable_config"


# Command line
class UsageError(PhriError):
    code = "usage_error"


PLANNER_ERRORS = (IKNoConverge, RRTFailure, InvalidStart, ForbiddenContact, FurnitureCollision, PlannerMisuse)
