"""Flat ASCII configuration files: ``key = value`` lines under ``[section]``.

Parsing is total: unknown sections or keys raise, so misspellings cannot
silently fall back to defaults. Omitted keys take documented defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .assembly import MaterialParams

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "read_sections"]

_SCHEMA = {
    "case": {"id"},
    "mesh": {"kind", "n", "levels"},
    "params": {"mu", "lambda", "alpha", "sigma", "kappa_bar", "tau"},
    "grid": {"lambda", "kappa_bar", "sigma", "alpha"},
    "dg": {"eta"},
    "solver": {"tol", "rhs"},
    "output": {"dir"},
}


class ConfigError(ValueError):
    pass


def read_sections(path) -> dict:
    """Parse the raw file into {section: {key: value-string}}."""
    sections: dict[str, dict[str, str]] = {}
    current = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in _SCHEMA:
                    raise ConfigError(f"{path}:{lineno}: unknown section [{current}]")
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            if current is None:
                raise ConfigError(f"{path}:{lineno}: key outside any section")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _SCHEMA[current]:
                raise ConfigError(
                    f"{path}:{lineno}: unknown key {key!r} in section [{current}]"
                )
            if key in sections[current]:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            sections[current][key] = value
    return sections


@dataclass
class ExperimentConfig:
    """Validated experiment description shared by all drivers."""

    case: str = "trig"
    mesh_kind: str = "right-split"
    n: int = 4
    levels: list = field(default_factory=lambda: [2, 3, 4])
    params: MaterialParams = field(default_factory=MaterialParams)
    grid: dict = field(default_factory=dict)
    eta: float = 10.0
    tol: float = 1e-10
    rhs_mode: str = "smoothed"
    out_dir: str = "out"

    def __post_init__(self):
        if not self.levels or min(self.levels) < 1:
            raise ConfigError("levels must be a nonempty list of integers >= 1")
        if self.n < 1:
            raise ConfigError("mesh n must be >= 1")
        if self.rhs_mode not in ("smoothed", "plain", "both"):
            raise ConfigError(f"unknown rhs mode {self.rhs_mode!r}")
        for key, vals in self.grid.items():
            if not vals:
                raise ConfigError(f"grid entry {key!r} is empty")


def _floats(s: str) -> list:
    return [float(v) for v in s.split()]


def parse_config(path) -> ExperimentConfig:
    sec = read_sections(path)
    kw = {}
    if "case" in sec and "id" in sec["case"]:
        kw["case"] = sec["case"]["id"]
    mesh = sec.get("mesh", {})
    if "kind" in mesh:
        kw["mesh_kind"] = mesh["kind"]
    if "n" in mesh:
        kw["n"] = int(mesh["n"])
    if "levels" in mesh:
        kw["levels"] = [int(v) for v in mesh["levels"].split()]
    par = sec.get("params", {})
    names = {"mu": "mu", "lambda": "lam", "alpha": "alpha", "sigma": "sigma",
             "kappa_bar": "kappa_bar", "tau": "tau"}
    pkw = {names[k]: float(v) for k, v in par.items()}
    kw["params"] = MaterialParams(**pkw)
    if "grid" in sec:
        kw["grid"] = {names[k]: _floats(v) for k, v in sec["grid"].items()}
    if "dg" in sec and "eta" in sec["dg"]:
        kw["eta"] = float(sec["dg"]["eta"])
    solver = sec.get("solver", {})
    if "tol" in solver:
        kw["tol"] = float(solver["tol"])
    if "rhs" in solver:
        kw["rhs_mode"] = solver["rhs"]
    if "output" in sec and "dir" in sec["output"]:
        kw["out_dir"] = sec["output"]["dir"]
    return ExperimentConfig(**kw)
