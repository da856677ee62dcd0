"""INI configuration for benchmark runs.

Layout::

    [experiment]
    methods = MPC, RQL, SQL
    horizons = 12, 2
    starts = -1 0 3.141592653589793; 0 1 1.5707963267948966
    duration = 30

    [controller]
    delta = 0.1
    R = 100, 100, 1, 0.01, 0.01

    [SQL]
    buffer_size = 40

``[controller]`` applies to every method; a section named after a method
overrides it for that method only. Poses are ``x y theta`` triples (radians)
separated by ``;``. Every key is optional.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import re
from typing import Optional, Sequence

from .actors import CRITIC_PROJECTIONS, CRITIC_TARGETS, METHODS, OPTIMIZERS, ControllerSpec
from .dynamics import InvalidConfigError, Pose
from .harness import PLANTS, ExperimentConfig


class ConfigError(ValueError):
    """Invalid configuration, with the source location when known."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        self.message, self.path, self.line = message, path, line
        where = path if line is None else f"{path}:{line}"
        super().__init__(f"{where}: {message}" if where else message)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    return int(s.strip())


def _choice(options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s

    return parse


def _floats(n: int):
    def parse(s: str) -> tuple:
        parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {len(parts)}")
        return tuple(_float(p) for p in parts)

    return parse


def _pose(s: str) -> Pose:
    return Pose(*_floats(3)(s))


def _poses(s: str) -> tuple:
    items = [p for p in s.split(";") if p.strip()]
    if not items:
        raise ValueError("at least one pose required")
    return tuple(_pose(p) for p in items)


def _methods(s: str) -> tuple:
    out = tuple(p.strip().upper() for p in s.split(",") if p.strip())
    for m in out:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    if not out:
        raise ValueError("at least one method required")
    return out


def _ints(s: str) -> tuple:
    out = tuple(_int(p) for p in s.split(",") if p.strip())
    if not out:
        raise ValueError("at least one value required")
    return out


EXPERIMENT_KEYS = {
    "methods": _methods,
    "horizons": _ints,
    "starts": _poses,
    "goal": _pose,
    "repetitions": _int,
    "duration": _float,
    "position_tol": _float,
    "heading_tol": _float,
    "seed": _int,
    "plant": _choice(PLANTS),
    "action_noise": _float,
}

CONTROLLER_KEYS = {
    "delta": _float,
    "gamma": _float,
    "r": _floats(5),
    "buffer_size": _int,
    "v_max": _float,
    "omega_max": _float,
    "evals_per_dim": _int,
    "tol": _float,
    "optimizer": _choice(OPTIMIZERS),
    "critic_target": _choice(CRITIC_TARGETS),
    "critic_projection": _choice(CRITIC_PROJECTIONS),
    "critic_gamma": _float,
    "critic_rcond": _float,
    "critic_max_weight": _float,
    "init_jitter": _float,
}

_FIELD = {"r": "R"}

# simple range checks with the field named in the message
_RANGES = {
    "delta": (lambda v: v > 0, "must be > 0"),
    "gamma": (lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "critic_gamma": (lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "buffer_size": (lambda v: v >= 1, "must be >= 1"),
    "v_max": (lambda v: v > 0, "must be > 0"),
    "omega_max": (lambda v: v > 0, "must be > 0"),
    "evals_per_dim": (lambda v: v >= 1, "must be >= 1"),
    "tol": (lambda v: v > 0, "must be > 0"),
    "critic_rcond": (lambda v: v >= 0, "must be >= 0"),
    "critic_max_weight": (lambda v: v > 0, "must be > 0"),
    "init_jitter": (lambda v: v >= 0, "must be >= 0"),
    "r": (lambda v: all(x > 0 for x in v), "entries must be > 0"),
    "repetitions": (lambda v: v >= 1, "must be >= 1"),
    "duration": (lambda v: v > 0, "must be > 0"),
    "position_tol": (lambda v: v > 0, "must be > 0"),
    "heading_tol": (lambda v: v > 0, "must be > 0"),
    "action_noise": (lambda v: v >= 0, "must be >= 0"),
    "horizons": (lambda v: all(h >= 1 for h in v), "entries must be >= 1"),
    "seed": (lambda v: v >= 0, "must be >= 0"),
}


def _line_map(text: str) -> dict:
    """``(section, key) -> line`` and ``(section, None) -> line`` for a raw INI text."""
    out = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip()[0] in "#;" or raw[0].isspace():
            continue
        m = re.match(r"\[([^\]]+)\]", raw.strip())
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", raw)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), i)
    return out


def parse_config(text: str, path: str = "<config>", overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Parse and validate an INI document into an :class:`ExperimentConfig`.

    ``overrides`` are ``section.key=value`` strings applied on top of the file.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(str(exc).splitlines()[0], path, line) from None
    lines = _line_map(text)

    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value", "--set")
        lhs, value = item.split("=", 1)
        section, key = lhs.rsplit(".", 1)
        section = section.strip()
        if section.upper() in METHODS:
            section = section.upper()
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key.strip().lower(), value.strip())
        lines[(section, key.strip().lower())] = None

    def where(section, key):
        line = lines.get((section, key), lines.get((section, None)))
        return ("--set", None) if (section, key) in lines and lines[(section, key)] is None else (path, line)

    def read(section: str, table: dict) -> dict:
        vals = {}
        for key, raw in cp.items(section):
            if key not in table:
                raise ConfigError(f"unknown key {section}.{key}", *where(section, key))
            try:
                v = table[key](raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{_FIELD.get(key, key)} = {raw!r}: {exc}", *where(section, key)) from None
            ok, msg = _RANGES.get(key, (lambda v: True, ""))
            if not ok(v):
                raise ConfigError(f"{section}.{_FIELD.get(key, key)} = {raw!r}: {msg}", *where(section, key))
            vals[_FIELD.get(key, key)] = v
        return vals

    experiment, controller, per_method = {}, {}, {}
    for section in cp.sections():
        if section == "experiment":
            experiment = read(section, EXPERIMENT_KEYS)
        elif section == "controller":
            controller = read(section, CONTROLLER_KEYS)
        elif section.upper() in METHODS:
            per_method[section.upper()] = read(section, CONTROLLER_KEYS)
        else:
            raise ConfigError(f"unknown section [{section}]", path, lines.get((section, None)))

    try:
        spec = ControllerSpec(**controller)
    except InvalidConfigError as exc:
        raise ConfigError(f"controller: {exc}", path, lines.get(("controller", None))) from None
    try:
        cfg = ExperimentConfig(controller=spec, method_overrides=per_method, **experiment)
    except InvalidConfigError as exc:
        raise ConfigError(str(exc), path, lines.get(("experiment", None))) from None
    return cfg


def load_config(path: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read ``path`` and parse it; ``OSError`` propagates for missing files."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, path, overrides)


def _spec_fields(spec: ControllerSpec) -> dict:
    return {f.name: getattr(spec, f.name) for f in dataclasses.fields(spec) if f.name not in ("method", "horizon")}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Every effective setting as plain data (lists and floats)."""

    def pose(p):
        return [p.x, p.y, p.theta]

    ctrl = {k: (list(v) if isinstance(v, tuple) else v) for k, v in _spec_fields(cfg.controller).items()}
    return {
        "experiment": {
            "methods": list(cfg.methods),
            "horizons": list(cfg.horizons),
            "starts": [pose(p) for p in cfg.starts],
            "goal": pose(cfg.goal),
            "repetitions": cfg.repetitions,
            "duration": cfg.duration,
            "position_tol": cfg.position_tol,
            "heading_tol": cfg.heading_tol,
            "seed": cfg.seed,
            "plant": cfg.plant,
            "action_noise": cfg.action_noise,
        },
        "controller": ctrl,
        "overrides": {m: {k: (list(v) if isinstance(v, tuple) else v) for k, v in o.items()} for m, o in sorted(cfg.method_overrides.items())},
    }


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Effective configuration as an INI document that parses back to ``cfg``."""
    d = config_to_dict(cfg)
    out = ["[experiment]"]
    for k, v in d["experiment"].items():
        if k in ("starts",):
            v = "; ".join(" ".join(repr(float(c)) for c in p) for p in v)
        elif k == "goal":
            v = " ".join(repr(float(c)) for c in v)
        else:
            v = _fmt(v)
        out.append(f"{k} = {v}")
    out += ["", "[controller]"]
    out += [f"{k} = {_fmt(v)}" for k, v in d["controller"].items()]
    for m, o in d["overrides"].items():
        out += ["", f"[{m}]"]
        out += [f"{k} = {_fmt(v)}" for k, v in o.items()]
    return "\n".join(out) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
