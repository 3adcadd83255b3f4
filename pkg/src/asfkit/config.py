"""TOML run configuration with every default materialized.

Sections: ``[system]``, ``[ramp]``, ``[solver]``, ``[melnikov]``,
``[tracking]``. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import copy
import math
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path

if _sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .integrator import SolveSettings
from .melnikov import NORMALIZATIONS
from .ramp import RAMPS, ramp_by_name, ramp_from_expression
from .system import BUILDERS, SystemDefinition
from .tracking import TrackingHypotheses

DEFAULTS = {
    "system": {
        "name": "tipping-pitchfork",
        "A": 0.25,
        "rho": 1.0,
        "mu": 1.0,
        "sigma": 0.3,
        "rhs": None,
        "F_minus": None,
        "F_plus": None,
        "forcing": None,
        "seeds": None,
        "branches": None,
    },
    "ramp": {
        "name": "algebraic-sigmoid",
        "expression": None,
        "derivative": None,
        "asymptotic_order": 2,
        "symmetric": True,
    },
    "solver": {
        "rel_tol": 1e-10,
        "abs_tol": 1e-12,
        "max_step": math.inf,
        "method": "implicit-adaptive",
        "escape_radius": 1e3,
        "dense_output": True,
        "eps": 1e-3,
        "param_tol": 1e-4,
        "dist_tol": 0.1,
        "s_probe": None,
    },
    "melnikov": {
        "normalization": "unit-at-zero",
        "horizon": None,
        "sigma_bracket": [0.0, 1.0],
        "mu_bracket": [0.5, 4.0],
        "case": "II",
    },
    "tracking": {
        "X": [-0.5, 0.5],
        "eps0": 1e-3,
        "grid": 41,
        "M": 10.0,
    },
}

_NUMERIC = {
    ("system", "A"), ("system", "rho"), ("system", "mu"), ("system", "sigma"),
    ("ramp", "asymptotic_order"),
    ("solver", "rel_tol"), ("solver", "abs_tol"), ("solver", "max_step"), ("solver", "escape_radius"),
    ("solver", "eps"), ("solver", "param_tol"), ("solver", "dist_tol"), ("solver", "s_probe"),
    ("melnikov", "horizon"), ("tracking", "eps0"), ("tracking", "grid"), ("tracking", "M"),
}
_STRINGS = {
    ("system", "name"), ("system", "rhs"), ("system", "F_minus"), ("system", "F_plus"), ("system", "forcing"),
    ("ramp", "name"), ("ramp", "expression"), ("ramp", "derivative"),
    ("solver", "method"), ("melnikov", "normalization"), ("melnikov", "case"),
}
_BOOLS = {("ramp", "symmetric"), ("solver", "dense_output")}


def _check_type(sec, key, val):
    if val is None:
        return
    where = f"[{sec}] {key}"
    if (sec, key) in _NUMERIC:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{where} must be a number, got {val!r}")
    elif (sec, key) in _STRINGS:
        if not isinstance(val, str):
            raise ConfigError(f"{where} must be a string, got {val!r}")
    elif (sec, key) in _BOOLS:
        if not isinstance(val, bool):
            raise ConfigError(f"{where} must be true or false, got {val!r}")


@dataclass
class Config:
    """Fully materialized configuration (all defaults filled in)."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    source: str | None = None

    @classmethod
    def from_dict(cls, raw: dict, source: str | None = None) -> "Config":
        data = copy.deepcopy(DEFAULTS)
        for sec, table in raw.items():
            if sec not in DEFAULTS:
                raise ConfigError(f"unknown section [{sec}]; expected one of {sorted(DEFAULTS)}")
            if not isinstance(table, dict):
                raise ConfigError(f"[{sec}] must be a table")
            for key, val in table.items():
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]; expected one of {sorted(DEFAULTS[sec])}")
                _check_type(sec, key, val)
                data[sec][key] = val
        cfg = cls(data, source)
        cfg.validate()
        return cfg

    def __getitem__(self, sec: str) -> dict:
        return self.data[sec]

    def with_overrides(self, **sections) -> "Config":
        raw = copy.deepcopy(self.data)
        for sec, table in sections.items():
            for k, v in table.items():
                if v is not None:
                    raw[sec][k] = v
        return Config.from_dict(raw, self.source)

    def validate(self) -> None:
        """Build every derived object once so inconsistencies surface as ConfigError."""
        sysc = self.data["system"]
        if sysc["name"] not in BUILDERS:
            raise ConfigError(f"[system] name must be one of {sorted(BUILDERS)}, got {sysc['name']!r}")
        if sysc["name"] != "custom":
            extra = [k for k in ("rhs", "F_minus", "F_plus", "forcing", "seeds", "branches") if sysc[k] is not None]
            if extra:
                raise ConfigError(f"[system] keys {extra} only apply to name = \"custom\"")
        if not sysc["rho"] > 0:
            raise ConfigError("[system] rho must be positive")
        if not sysc["mu"] > 0:
            raise ConfigError("[system] mu must be positive")
        rc = self.data["ramp"]
        if rc["expression"] is None and rc["name"] not in RAMPS:
            raise ConfigError(f"[ramp] name must be one of {sorted(RAMPS)} or give 'expression'")
        mc = self.data["melnikov"]
        if mc["normalization"] not in NORMALIZATIONS:
            raise ConfigError(f"[melnikov] normalization must be one of {NORMALIZATIONS}")
        if mc["case"] not in ("II", "III"):
            raise ConfigError("[melnikov] case must be 'II' or 'III'")
        for key in ("sigma_bracket", "mu_bracket"):
            b = mc[key]
            pair = isinstance(b, list) and len(b) == 2 and all(isinstance(v, (int, float)) for v in b)
            if not (pair and b[0] < b[1]):
                raise ConfigError(f"[melnikov] {key} must be an increasing pair of numbers")
        if not self.data["solver"]["eps"] > 0:
            raise ConfigError("[solver] eps must be positive")
        self.solve_settings()
        self.tracking_hypotheses()
        self.system()

    def system(self) -> SystemDefinition:
        sc = self.data["system"]
        try:
            if sc["name"] == "custom":
                sys = BUILDERS["custom"](
                    F_minus=sc["F_minus"], F_plus=sc["F_plus"], forcing=sc["forcing"], rhs=sc["rhs"],
                    A=float(sc["A"]), mu=float(sc["mu"]), seeds=sc["seeds"], branches=_branches(sc["branches"]),
                )
            else:
                sys = BUILDERS[sc["name"]](A=float(sc["A"]))
            return sys.with_ramp(self.ramp()) if self._custom_ramp() else sys
        except ConfigError as exc:
            if str(exc).startswith("["):
                raise
            raise ConfigError(f"[system] {exc}") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"[system] {exc}") from exc

    def _custom_ramp(self) -> bool:
        rc = self.data["ramp"]
        return rc["expression"] is not None or rc["name"] != "algebraic-sigmoid"

    def ramp(self):
        rc = self.data["ramp"]
        if rc["expression"] is not None:
            try:
                return ramp_from_expression(rc["expression"], rc["derivative"], int(rc["asymptotic_order"]),
                                            bool(rc["symmetric"]))
            except (ConfigError, ValueError) as exc:
                raise ConfigError(f"[ramp] {exc}") from exc
        return ramp_by_name(rc["name"])

    def solve_settings(self) -> SolveSettings:
        s = self.data["solver"]
        try:
            st = SolveSettings(float(s["rel_tol"]), float(s["abs_tol"]), float(s["max_step"]), s["method"],
                               float(s["escape_radius"]), bool(s["dense_output"]))
        except ValueError as exc:
            raise ConfigError(f"[solver] {exc}") from exc
        if st.escape_radius <= self.tracking_hypotheses().diameter:
            raise ConfigError("[solver] escape_radius must exceed the diameter of the [tracking] state box")
        return st

    def tracking_hypotheses(self) -> TrackingHypotheses:
        t = self.data["tracking"]
        try:
            return TrackingHypotheses(tuple(t["X"]) if not isinstance(t["X"][0], list) else
                                      tuple(tuple(r) for r in t["X"]),
                                      float(self.data["system"]["rho"]), float(t["eps0"]), int(t["grid"]),
                                      float(t["M"]))
        except (ValueError, TypeError, IndexError) as exc:
            raise ConfigError(f"[tracking] {exc}") from exc

    def as_dict(self) -> dict:
        """JSON-safe copy (infinite values become the string "inf")."""
        def fix(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf" if v > 0 else "-inf"
            if isinstance(v, dict):
                return {k: fix(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [fix(x) for x in v]
            return v
        return fix(self.data)


def _branches(raw):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError("[system] branches must be a table label = [side, seed]")
    out = {}
    for label, val in raw.items():
        if not (isinstance(val, list) and len(val) == 2):
            raise ConfigError(f"[system] branches.{label} must be [side, seed]")
        out[label] = (val[0], val[1])
    return out


def load_config(path: str | Path | None) -> Config:
    """Read and validate a TOML file; ``None`` gives the defaults.

    Raises
    ------
    ConfigError
        Unreadable file, TOML syntax error (with line and column), unknown
        key, wrong type or inconsistent values.
    """
    if path is None:
        return Config.from_dict({})
    p = Path(path)
    try:
        text = p.read_bytes().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{p}: not valid UTF-8") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return Config.from_dict(raw, str(p))
