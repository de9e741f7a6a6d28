"""Run configuration: ``key = value`` text files with '#' comments."""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields

from .diagnostics import WeightConfig
from .grid import build_grid
from .transport import LAWS, TransportModel

BACKENDS = ("torus", "profile")
FAMILIES = ("gaussian", "two-bump", "file")


class ConfigError(ValueError):
    """All violations found in a configuration, each as ``(line, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


@dataclass(frozen=True)
class InitialData:
    """Named initial-data family; ``path`` is set for ``file``."""

    family: str = "gaussian"
    A: float = 1.0
    sigma_x: float = 1.0
    sigma_v: float = 1.0
    separation: float = 2.0
    path: str | None = None

    def text(self) -> str:
        if self.family == "file":
            return f"file:{self.path}"
        p = f"A={self.A!r}, sigma_x={self.sigma_x!r}, sigma_v={self.sigma_v!r}"
        if self.family == "two-bump":
            p += f", separation={self.separation!r}"
        return f"{self.family}({p})"


@dataclass
class RunConfig:
    """Validated run parameters.

    ``dt = None`` picks the backend default; ``fit_window = None`` fits on
    [T/4, T].  ``initial`` data are scaled by ``epsilon0``.
    """

    backend: str = "profile"
    law: str = "nonrelativistic"
    mu: int = 1
    d: int = 3
    Nx: int = 16
    Nv: int = 16
    Lx: float = 10.0
    Vmax: float = 5.0
    initial: InitialData = field(default_factory=InitialData)
    epsilon0: float = 1e-3
    dt: float | None = None
    T: float = 1.0
    sample_cadence: int = 1
    N0: int = 2
    delta: float = 0.01
    K: int = 2
    output: str = "run"
    rng_seed: int = 0
    support_tol: float = 1e-10
    field_zeroed: bool = False
    fit_window: tuple | None = None

    @property
    def model(self) -> TransportModel:
        return TransportModel(self.law, self.mu)

    @property
    def weights(self) -> WeightConfig:
        return WeightConfig(self.N0, self.delta)

    def grid(self):
        return build_grid(self.d, self.Nx, self.Nv, self.Lx, self.Vmax)

    def window(self) -> tuple:
        return tuple(self.fit_window) if self.fit_window is not None else (0.25 * self.T, self.T)

    def manifest(self) -> dict:
        """JSON-ready echo; floats keep their exact repr through json."""
        out = asdict(self)
        out["initial"] = self.initial.text()
        out["fit_window"] = list(self.fit_window) if self.fit_window is not None else None
        return out


# ---------------------------------------------------------------- value parsers

def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"expected an integer, got {s!r}") from None


def _float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"expected a number, got {s!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {s!r}")
    return v


def _optional_float(s: str):
    return None if s.lower() in ("auto", "none", "default") else _float(s)


def _window(s: str):
    if s.lower() in ("auto", "none", "default"):
        return None
    parts = [p for p in re.split(r"[,\s]+", s.strip("[]() ")) if p]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers 'lo, hi', got {s!r}")
    lo, hi = (_float(p) for p in parts)
    if not 0 < lo < hi:
        raise ValueError("fit_window needs 0 < lo < hi")
    return (lo, hi)


_CALL = re.compile(r"^([a-z\-]+)\s*(?:\((.*)\))?$")


def parse_initial(s: str) -> InitialData:
    s = s.strip()
    if s.startswith("file:"):
        path = s[5:].strip()
        if not path:
            raise ValueError("file: needs a path")
        return InitialData(family="file", path=path)
    m = _CALL.match(s)
    if not m or m.group(1) not in FAMILIES:
        raise ValueError(f"unknown initial-data family {s!r}; expected one of gaussian(...), two-bump(...), file:<path>")
    family, body = m.group(1), (m.group(2) or "").strip()
    allowed = {"A", "sigma_x", "sigma_v"} | ({"separation"} if family == "two-bump" else set())
    params = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        if "=" not in item:
            raise ValueError(f"initial-data parameter {item!r} is not name=value")
        name, val = (x.strip() for x in item.split("=", 1))
        if name not in allowed:
            raise ValueError(f"unknown {family} parameter {name!r}")
        params[name] = _float(val)
    for name in ("sigma_x", "sigma_v"):
        if params.get(name, 1.0) <= 0:
            raise ValueError(f"{name} must be positive")
    return InitialData(family=family, **params)


_PARSERS = {
    "backend": str, "law": str, "mu": _int, "d": _int, "Nx": _int, "Nv": _int, "Lx": _float,
    "Vmax": _float, "initial": parse_initial, "epsilon0": _float, "dt": _optional_float, "T": _float,
    "sample_cadence": _int, "N0": _int, "delta": _float, "K": _int, "output": str, "rng_seed": _int,
    "support_tol": _float, "field_zeroed": _bool, "fit_window": _window,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def _constraints(c: RunConfig) -> list:
    """(key, message) for every violated constraint."""
    bad = []

    def need(ok, key, msg):
        if not ok:
            bad.append((key, msg))

    need(c.backend in BACKENDS, "backend", f"backend must be one of {BACKENDS}")
    need(c.law in LAWS, "law", f"law must be one of {LAWS}")
    need(c.mu in (1, -1), "mu", "mu must be +1 or -1")
    need(c.d in (1, 2, 3), "d", "d must be 1, 2 or 3")
    for key in ("Nx", "Nv"):
        n = getattr(c, key)
        need(n >= 2 and n & (n - 1) == 0, key, f"{key} must be a power of two (got {n})")
    for key in ("Lx", "Vmax", "T", "support_tol"):
        need(getattr(c, key) > 0, key, f"{key} must be positive")
    need(c.dt is None or c.dt > 0, "dt", "dt must be positive")
    need(c.epsilon0 >= 0, "epsilon0", "epsilon0 must be nonnegative")
    need(c.sample_cadence >= 1, "sample_cadence", "sample_cadence must be at least 1")
    need(c.N0 >= 1, "N0", "N0 must be at least 1")
    need(c.delta > 0, "delta", "delta must be positive")
    need(0 <= c.K <= 4, "K", "K (derivative maximum) must lie in 0..4")
    need(c.rng_seed >= 0, "rng_seed", "rng_seed must be nonnegative")
    need(bool(c.output), "output", "output must be non-empty")
    if c.initial.family == "two-bump":
        need(c.initial.separation < c.Lx, "initial", "two-bump separation must be below Lx")
    return bad


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every violation with its line."""
    errors = []
    values = {}
    where = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'key = value', got {line!r}"))
            continue
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in _PARSERS:
            errors.append((ln, f"unknown key {key!r}"))
            continue
        if key in values:
            errors.append((ln, f"duplicate key {key!r} (first set on line {where[key]})"))
            continue
        try:
            values[key] = _PARSERS[key](val)
            where[key] = ln
        except ValueError as exc:
            errors.append((ln, f"{key}: {exc}"))
    cfg = RunConfig(**values)
    for key, msg in _constraints(cfg):
        errors.append((where.get(key, 0), msg))
    if errors:
        raise ConfigError(sorted(errors, key=lambda e: e[0]))
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
