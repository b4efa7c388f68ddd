"""Experiment configuration read from TOML."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "DEFAULT_N_GRID"]

DEFAULT_N_GRID = tuple(2**k for k in range(7, 14))
_METRICS = ("W1", "Pi")
_KINDS = ("doubling", "lsv", "flow")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _default_system() -> Dict[str, Any]:
    return {"kind": "doubling"}


def _default_observable() -> Dict[str, Any]:
    return {"freqs": [2]}


@dataclass
class ExperimentConfig:
    """Everything needed to run a rate experiment deterministically.

    ``system`` holds ``kind`` (doubling, lsv or flow) and its parameters:
    ``gamma`` and ``burn_in`` for LSV; ``base``, ``gamma``, ``roof = [a, b]``
    (r(x) = a + b x) and ``dt`` for flows. ``observable`` holds ``freqs``:
    component i is ``amp * cos(2 pi freqs[i] x)``; an empty list or
    ``form = "zero"`` gives the zero observable.
    """

    experiment: str = "rates"
    system: Dict[str, Any] = field(default_factory=_default_system)
    observable: Dict[str, Any] = field(default_factory=_default_observable)
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    M: int = 256
    d: int = 16
    seeds: Tuple[int, ...] = tuple(range(8))
    metrics: Tuple[str, ...] = ("W1",)
    out: Optional[str] = None
    decomposition_grid: int = 4096

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.metrics = tuple(self.metrics)
        self.validate()

    def validate(self) -> None:
        if not self.n_grid:
            raise ConfigError("n_grid is empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        if self.n_grid[0] < 2:
            raise ConfigError("every n must be at least 2")
        if self.M < 2:
            raise ConfigError("M must be at least 2")
        if self.d < 2:
            raise ConfigError("d must be at least 2")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(s < 0 or s >= 2**64 for s in self.seeds):
            raise ConfigError("seeds must be unsigned 64-bit integers")
        bad = [m for m in self.metrics if m not in _METRICS]
        if bad or not self.metrics:
            raise ConfigError(f"metrics must be drawn from {_METRICS}")
        kind = self.system.get("kind")
        if kind not in _KINDS:
            raise ConfigError(f"system.kind must be one of {_KINDS}")
        if kind == "lsv":
            g = self.system.get("gamma")
            if not isinstance(g, (int, float)) or not 0.0 < g < 1.0:
                raise ConfigError("system.gamma must lie in (0, 1) for the LSV map")
        if kind == "flow":
            if self.system.get("base", "doubling") != "doubling":
                raise ConfigError("flows are supported over the doubling base only")
            roof = self.system.get("roof", [1.0, 0.5])
            if len(roof) != 2 or roof[0] < 1.0 or roof[0] + roof[1] < 1.0:
                raise ConfigError("system.roof = [a, b] must satisfy a + b x >= 1 on [0, 1]")
            if self.system.get("dt", 1.0 / 64) <= 0:
                raise ConfigError("system.dt must be positive")
        obs = self.observable
        if obs.get("form", "cos") not in ("cos", "zero"):
            raise ConfigError("observable.form must be 'cos' or 'zero'")
        freqs = obs.get("freqs", [])
        if any(int(f) != f or f < 0 for f in freqs):
            raise ConfigError("observable.freqs must be nonnegative integers")
        if kind != "lsv" and any(f == 0 for f in freqs):
            raise ConfigError("frequency 0 gives a non-centred observable")

    @property
    def dim(self) -> int:
        if self.observable.get("form", "cos") == "zero":
            return max(1, int(self.observable.get("dim", 1)))
        return max(1, len(self.observable.get("freqs", [])))

    @property
    def is_zero(self) -> bool:
        return self.observable.get("form", "cos") == "zero" or not self.observable.get("freqs")

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**copy.deepcopy(raw))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "experiment": self.experiment,
            "system": dict(self.system),
            "observable": dict(self.observable),
            "n_grid": list(self.n_grid),
            "M": self.M,
            "d": self.d,
            "seeds": list(self.seeds),
            "metrics": list(self.metrics),
            "decomposition_grid": self.decomposition_grid,
        }
        if self.out is not None:
            out["out"] = self.out
        return out

    def to_toml(self) -> str:
        """Serialise back to TOML (flat values and two tables only)."""
        lines: List[str] = []
        tables = {}
        for key, value in self.to_dict().items():
            if isinstance(value, dict):
                tables[key] = value
            else:
                lines.append(f"{key} = {_toml_value(value)}")
        for name, table in tables.items():
            lines.append("")
            lines.append(f"[{name}]")
            for key, value in table.items():
                lines.append(f"{key} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)
