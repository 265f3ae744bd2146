from __future__ import annotations
from typing import Any


class LanetError(Exception):
    pass


class InvalidArgumentError(LanetError, ValueError):
    pass


class SceneParseError(LanetError, ValueError):
    pass


class SchemaViolationError(LanetError, ValueError):
    def __init__(self, message: str, errors: list[dict[str, Any]] | None = None):
        self.errors = list(errors or [])
        if self.errors:
            details = "; ".join(f"{_loc(e.get('loc', ()))}: {e.get('msg', '')}" for e in self.errors)
            message = f"{message} ({details})"
        super().__init__(message)

    @classmethod
    def from_pydantic(cls, message: str, exc) -> "SchemaViolationError":
        return cls(message, [{"loc": tuple(e.get("loc", ())), "msg": e.get("msg", "")} for e in exc.errors()])


class DivergenceError(LanetError, RuntimeError):
    def __init__(self, step: int, breakdown: dict[str, float]):
        self.step = step
        self.breakdown = dict(breakdown)
        parts = ", ".join(f"{k}={v}" for k, v in self.breakdown.items())
        super().__init__(f"Training diverged at step {step}: {parts}")


class CheckpointMismatchError(LanetError, ValueError):
    def __init__(self, keys: list[str]):
        self.keys = sorted(keys)
        super().__init__("Checkpoint architecture does not match config; divergent keys: " + ", ".join(self.keys))


def _loc(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"
