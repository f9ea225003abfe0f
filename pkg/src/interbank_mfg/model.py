"""Model parameters for the N-bank interbank lending game.

Bank i has log-monetary reserve X^i with dynamics

    dX^i = [a (Xbar - X^i) + alpha^i] dt + sigma (rho dW^0 + sqrt(1 - rho^2) dW^i)

and minimises the expected running cost
    (1/2) alpha^2 - q alpha (Xbar - X^i) + (epsilon/2) (Xbar - X^i)^2
plus the terminal cost (c/2) (Xbar_T - X^i_T)^2.  A bank defaults once its
reserve has touched ``default_level`` (banks stay in the system afterwards).
"""

from __future__ import annotations

import enum
import math
import numbers
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

PARAM_FIELDS = (
    "n_banks",
    "a",
    "q",
    "epsilon",
    "c",
    "sigma",
    "rho",
    "horizon",
    "default_level",
)


class ParameterError(ValueError):
    """Base class for rejected parameter sets."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(ParameterError):
    pass


class ConvexityViolated(ParameterError):
    def __init__(self, q: float, epsilon: float):
        super().__init__(
            "q",
            f"q^2 = {q * q!r} exceeds epsilon = {epsilon!r}; running cost is not convex",
        )


class EquilibriumMode(enum.Enum):
    OPEN_LOOP = "open"
    CLOSED_LOOP = "closed"
    MEAN_FIELD_GAME = "mfg"

    @classmethod
    def parse(cls, value: "str | EquilibriumMode") -> "EquilibriumMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "open": cls.OPEN_LOOP,
            "open-loop": cls.OPEN_LOOP,
            "openloop": cls.OPEN_LOOP,
            "closed": cls.CLOSED_LOOP,
            "closed-loop": cls.CLOSED_LOOP,
            "closedloop": cls.CLOSED_LOOP,
            "mfg": cls.MEAN_FIELD_GAME,
            "mean-field-game": cls.MEAN_FIELD_GAME,
            "meanfieldgame": cls.MEAN_FIELD_GAME,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown equilibrium mode {value!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """All constants of the model.  Construct freely, then pass through
    :func:`validate` before use."""

    n_banks: int = 10
    a: float = 1.0
    q: float = 1.0
    epsilon: float = 10.0
    c: float = 0.0
    sigma: float = 1.0
    rho: float = 0.0
    horizon: float = 1.0
    default_level: float = -0.7

    def replace(self, **changes: Any) -> "ModelParams":
        return validate(replace(self, **changes))

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: "ModelParams | None" = None) -> "ModelParams":
        unknown = set(values) - set(PARAM_FIELDS)
        if unknown:
            raise DomainError(sorted(unknown)[0], "unknown parameter name")
        merged = (base or cls()).as_dict()
        merged.update(values)
        return validate(cls(**merged))


def _check_real(name: str, value: Any) -> float:
    if isinstance(value, bool):
        raise DomainError(name, f"expected a real number, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise DomainError(name, f"expected a real number, got {value!r}") from None
    if not math.isfinite(x):
        raise DomainError(name, f"must be finite, got {value!r}")
    return x


def validate(params: ModelParams) -> ModelParams:
    """Check every parameter invariant and return a normalised copy.

    Raises :class:`ConvexityViolated` when ``q**2 > epsilon`` and
    :class:`DomainError` (naming the field) for any range violation.
    Boundary cases ``q**2 == epsilon``, ``|rho| == 1``, ``a == 0`` and
    ``c == 0`` are accepted.
    """
    n = params.n_banks
    if isinstance(n, bool) or not (
        isinstance(n, numbers.Integral) or (isinstance(n, float) and n.is_integer())
    ):
        raise DomainError("n_banks", f"expected a positive integer, got {n!r}")
    n = int(n)
    if n < 1:
        raise DomainError("n_banks", f"must be >= 1, got {n}")

    vals = {name: _check_real(name, getattr(params, name)) for name in PARAM_FIELDS[1:]}
    for name in ("a", "q", "epsilon", "c"):
        if vals[name] < 0:
            raise DomainError(name, f"must be >= 0, got {vals[name]!r}")
    if vals["sigma"] <= 0:
        raise DomainError("sigma", f"must be > 0, got {vals['sigma']!r}")
    if vals["horizon"] <= 0:
        raise DomainError("horizon", f"must be > 0, got {vals['horizon']!r}")
    if abs(vals["rho"]) > 1:
        raise DomainError("rho", f"must lie in [-1, 1], got {vals['rho']!r}")
    if vals["default_level"] >= 0:
        raise DomainError("default_level", f"must be < 0, got {vals['default_level']!r}")
    if vals["q"] ** 2 > vals["epsilon"]:
        raise ConvexityViolated(vals["q"], vals["epsilon"])

    return ModelParams(n_banks=n, **vals)


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a key/value parameter document (YAML or JSON).

    Only the nine parameter names are allowed as keys; values are returned
    unvalidated so callers can layer CLI overrides on top.
    """
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise DomainError("config", f"{path} does not contain a key/value mapping")
    allowed = {f.name for f in fields(ModelParams)}
    for key in data:
        if key not in allowed:
            raise DomainError(str(key), f"unknown parameter in {path}")
    return dict(data)
