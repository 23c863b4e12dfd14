"""Run configuration: flat ``key = value`` files with ``#`` comments."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import FormatError, ValidationError


@dataclass(frozen=True)
class RunConfig:
    n_superpixels: int = 5500
    compactness: float = 10.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    sigma_d: float = 30.0  # colour scale, 8-bit units
    sigma_p: float = 1.0  # meters
    sigma_i: float = 1.0
    solver_tol: float = 1e-8
    solver_max_iter: int = 10000
    solver_method: str = "cgs"
    preconditioner: str = "none"
    depth_cap: float = 80.0
    subsample_fraction: float = 1.0
    normal_k: int = 10

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        if self.alpha <= 0.0:
            raise ValidationError("alpha must be > 0: without the data term the system is singular")
        for name in ("compactness", "sigma_d", "sigma_p", "sigma_i", "solver_tol", "depth_cap"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("n_superpixels", "solver_max_iter"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.normal_k < 3:
            raise ValidationError("normal_k must be >= 3")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValidationError("subsample_fraction must lie in (0, 1]")
        if self.solver_method not in ("cgs", "cg"):
            raise ValidationError(f"unknown solver_method {self.solver_method!r}")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValidationError(f"unknown preconditioner {self.preconditioner!r}")

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _cast(key, text, lineno):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(text)
        return _CASTS[kind](text)
    except ValueError:
        raise FormatError(f"line {lineno}: bad value for {key}: {text!r}") from None


def load_config(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise FormatError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _cast(key, value, lineno)
    return RunConfig(**values)


def write_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in asdict(cfg).items())
