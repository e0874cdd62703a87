"""Run configuration: defaults, a flat ``key = value`` file format and validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a ranking or evaluation run.

    Exactly one data source is used: ``input`` (a CSV path) or the toy
    generator with ``toy_samples`` rows.
    """

    input: str | None = None
    toy_samples: int | None = None
    target: str = "y"
    bins: int = 10
    k_sigma: float = 4.0
    subsamples: int = 200
    fraction: float = 0.8
    permutations: int = 5
    train_fraction: float = 0.5
    gaussianize: bool = True
    rho: float | None = None
    rho_grid: tuple[float, ...] | None = None
    prior_graph: str | None = None
    phi: str = "learned"
    inv_c_grid: tuple[float, ...] | None = None
    n_trees: int = 100
    seed: int = 0
    out_dir: str = "results"
    eval_subsets: int = 100
    subset_size: int | None = None
    backend: str | None = None

    def __post_init__(self):
        if self.input is not None and self.toy_samples is not None:
            raise ConfigError("give either input or toy_samples, not both")
        if self.input is None and self.toy_samples is None:
            object.__setattr__(self, "toy_samples", 800)
        for name in ("bins", "subsamples", "permutations", "n_trees", "eval_subsets", "toy_samples", "subset_size"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.bins < 2:
            raise ConfigError("bins must be at least 2")
        if self.subsamples < 2:
            raise ConfigError("subsamples must be at least 2")
        if self.k_sigma <= 0:
            raise ConfigError("k_sigma must be positive")
        if not 0 < self.fraction <= 1:
            raise ConfigError("fraction must lie in (0, 1]")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.phi not in ("learned", "parametric"):
            raise ConfigError(f"phi must be 'learned' or 'parametric', got {self.phi!r}")
        if self.rho is not None and self.rho < 0:
            raise ConfigError("rho must be nonnegative")
        if self.inv_c_grid is not None and any(v <= 0 for v in self.inv_c_grid):
            raise ConfigError("inv_c_grid entries must be positive")
        if self.backend not in (None, "compiled", "python"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.input is not None and not Path(self.input).is_file():
            raise ConfigError(f"input file not found: {self.input}")
        if self.prior_graph is not None and not Path(self.prior_graph).is_file():
            raise ConfigError(f"prior graph file not found: {self.prior_graph}")

    @property
    def c_grid(self) -> list[float] | None:
        return None if self.inv_c_grid is None else [1.0 / v for v in self.inv_c_grid]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(name: str, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    kind = str(_FIELDS[name].type)
    if text.lower() in ("", "none", "null") and "None" in kind:
        return None
    try:
        if kind.startswith("tuple"):
            return tuple(float(v) for v in text.replace(",", " ").split())
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return text


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(overrides: Mapping[str, Any] | None = None, config_file: str | Path | None = None) -> RunConfig:
    """Defaults, then the config file, then ``overrides`` (``None`` values ignored)."""
    values: dict[str, Any] = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    for key, value in (overrides or {}).items():
        key = key.replace("-", "_")
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown setting {key!r}")
        values[key] = value
    if "input" in values and values["input"] is not None:
        values.setdefault("toy_samples", None)
    converted = {k: _convert(k, v) for k, v in values.items()}
    try:
        return RunConfig(**converted)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
