"""Run configuration: a sectioned INI file with a pinned set of keys.

Example::

    [objective]
    kind = diagonal-quadratic
    diag = 1, 4

    [partition]
    n = 2
    sizes = equal

    [schedule]
    B = 5
    mode = uniform-random
    seed = 3

    [run]
    horizon = 200
    gamma = auto
    x0 = ones

    [output]
    directory = out
    emit-csv = yes
    emit-svg = yes
    emit-report = yes
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .schedule import MODES

OBJECTIVE_KEYS = {
    "diagonal-quadratic": {"diag": "floats"},
    "pl-sine": {"dim": "int"},
    "least-squares": {"rows": "int", "cols": "int", "rank": "int", "seed": "int",
                      "A": "matrix", "b": "floats"},
    "logistic-l2": {"data": "str", "N": "int", "m": "int", "separation": "float",
                    "data_seed": "int", "latent_dim": "int", "noise": "float",
                    "lambda": "float", "preprocess": "bool"},
}
SECTIONS = ("objective", "partition", "schedule", "run", "output")
SWEEP_PARAMS = ("B", "gamma", "n", "seed")
_X0 = re.compile(r"^(zeros|ones|gaussian\((\d+)\))$")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    params: tuple = ()      # sorted (key, value) pairs, hashable and order-free

    def get(self, key, default=None):
        return dict(self.params).get(key, default)


@dataclass(frozen=True)
class PartitionSpec:
    n: int
    sizes: tuple[int, ...] | None = None   # None means equal split


@dataclass(frozen=True)
class ScheduleSpec:
    B: int
    mode: str
    seed: int = 0
    period: int | None = None


@dataclass(frozen=True)
class RunSpec:
    horizon: int
    gamma: float | str = "auto"
    x0: str = "zeros"
    record: str = "full"
    stop_ratio: float | None = None
    record_every: int = 1       # sparse record: keep every k-th gap sample


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    emit_csv: bool = True
    emit_svg: bool = False
    emit_report: bool = True


@dataclass(frozen=True)
class RunConfig:
    objective: ObjectiveSpec
    partition: PartitionSpec
    schedule: ScheduleSpec
    run: RunSpec
    output: OutputSpec = field(default_factory=OutputSpec)


# -- parsing -----------------------------------------------------------------


def _bool(key, raw):
    low = raw.strip().lower()
    if low in ("yes", "true", "on", "1"):
        return True
    if low in ("no", "false", "off", "0"):
        return False
    raise ConfigError(key, f"expected yes/no, got {raw!r}")


def _int(key, raw, minimum=None):
    try:
        v = int(raw.strip())
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {v}")
    return v


def _float(key, raw):
    try:
        v = float(raw.strip())
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if not np.isfinite(v):
        raise ConfigError(key, f"must be finite, got {raw!r}")
    return v


def _floats(key, raw):
    parts = [p for p in raw.replace(",", " ").split()]
    if not parts:
        raise ConfigError(key, "expected a comma-separated list of numbers")
    return tuple(_float(key, p) for p in parts)


def _matrix(key, raw):
    rows = tuple(_floats(key, r) for r in raw.split(";") if r.strip())
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(key, "expected rows of equal length separated by ';'")
    return rows


_PARSERS = {
    "int": lambda k, r: _int(k, r),
    "float": _float,
    "floats": _floats,
    "matrix": _matrix,
    "bool": _bool,
    "str": lambda k, r: r.strip(),
}


def _section(cp, name, required=True):
    if not cp.has_section(name):
        if required:
            raise ConfigError(f"[{name}]", "section is missing")
        return {}
    return dict(cp.items(name))


def _take(sec: dict, section: str, key: str, default=...):
    if key in sec:
        return sec.pop(key)
    if default is ...:
        raise ConfigError(f"{section}.{key}", "required key is missing")
    return default


def _no_leftovers(sec: dict, section: str):
    if sec:
        key = sorted(sec)[0]
        raise ConfigError(f"{section}.{key}", "unknown key")


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str   # keys are case sensitive (B, N, A)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"[{name}]", f"unknown section; expected {', '.join(SECTIONS)}")

    sec = _section(cp, "objective")
    kind = _take(sec, "objective", "kind").strip()
    if kind not in OBJECTIVE_KEYS:
        raise ConfigError("objective.kind", f"unknown kind {kind!r}; expected one of {sorted(OBJECTIVE_KEYS)}")
    params = {}
    for key, raw in sec.items():
        typ = OBJECTIVE_KEYS[kind].get(key)
        if typ is None:
            raise ConfigError(f"objective.{key}", f"not a parameter of {kind}")
        params[key] = _PARSERS[typ](f"objective.{key}", raw)
    _check_objective(kind, params)
    objective = ObjectiveSpec(kind, tuple(sorted(params.items())))

    sec = _section(cp, "partition")
    n = _int("partition.n", _take(sec, "partition", "n"), 1)
    raw_sizes = _take(sec, "partition", "sizes", "equal").strip()
    sizes = None
    if raw_sizes != "equal":
        sizes = tuple(_int("partition.sizes", s, 1) for s in raw_sizes.replace(",", " ").split())
        if len(sizes) != n:
            raise ConfigError("partition.sizes", f"{len(sizes)} sizes for n={n} blocks")
    _no_leftovers(sec, "partition")
    partition = PartitionSpec(n, sizes)

    sec = _section(cp, "schedule")
    B = _int("schedule.B", _take(sec, "schedule", "B"), 1)
    mode = _take(sec, "schedule", "mode").strip()
    if mode not in MODES:
        raise ConfigError("schedule.mode", f"unknown mode {mode!r}; expected one of {MODES}")
    seed = _int("schedule.seed", _take(sec, "schedule", "seed", "0"), 0)
    period = _take(sec, "schedule", "period", None)
    period = None if period is None else _int("schedule.period", period, 1)
    if mode == "periodic" and period is None:
        raise ConfigError("schedule.period", "periodic mode needs a period")
    if period is not None and period > B:
        raise ConfigError("schedule.period", f"period {period} exceeds B={B}")
    _no_leftovers(sec, "schedule")
    schedule = ScheduleSpec(B, mode, seed, period)

    sec = _section(cp, "run")
    horizon = _int("run.horizon", _take(sec, "run", "horizon"), 1)
    raw_gamma = _take(sec, "run", "gamma", "auto").strip()
    if raw_gamma == "auto":
        gamma = "auto"
    else:
        gamma = _float("run.gamma", raw_gamma)
        if gamma <= 0:
            raise ConfigError("run.gamma", f"must be positive or 'auto', got {raw_gamma}")
    x0 = _take(sec, "run", "x0", "zeros").strip()
    if not _X0.match(x0):
        raise ConfigError("run.x0", f"expected zeros, ones or gaussian(<seed>), got {x0!r}")
    record = _take(sec, "run", "record", "full").strip()
    if record not in ("full", "sparse"):
        raise ConfigError("run.record", f"expected full or sparse, got {record!r}")
    stop = _take(sec, "run", "stop_ratio", None)
    stop = None if stop is None else _float("run.stop_ratio", stop)
    if stop is not None and not 0 < stop < 1:
        raise ConfigError("run.stop_ratio", f"must lie in (0, 1), got {stop}")
    if stop is not None and record != "sparse":
        raise ConfigError("run.stop_ratio", "early stopping needs record = sparse")
    every = _int("run.record_every", _take(sec, "run", "record_every", "1"), 1)
    _no_leftovers(sec, "run")
    run = RunSpec(horizon, gamma, x0, record, stop, every)
    if record == "full" and horizon < B:
        raise ConfigError("run.horizon", f"horizon {horizon} is shorter than B={B}")

    sec = _section(cp, "output", required=False)
    output = OutputSpec(
        directory=_take(sec, "output", "directory", "out").strip(),
        emit_csv=_bool("output.emit-csv", _take(sec, "output", "emit-csv", "yes")),
        emit_svg=_bool("output.emit-svg", _take(sec, "output", "emit-svg", "no")),
        emit_report=_bool("output.emit-report", _take(sec, "output", "emit-report", "yes")),
    )
    _no_leftovers(sec, "output")
    return RunConfig(objective, partition, schedule, run, output)


def _check_objective(kind: str, p: dict) -> None:
    if kind == "diagonal-quadratic":
        if "diag" not in p:
            raise ConfigError("objective.diag", "required key is missing")
        if any(v <= 0 for v in p["diag"]):
            raise ConfigError("objective.diag", "eigenvalues must be positive")
    elif kind == "least-squares":
        if ("A" in p) != ("b" in p):
            raise ConfigError("objective.b" if "A" in p else "objective.A", "A and b must be given together")
        if "A" not in p:
            for key in ("rows", "cols", "rank"):
                if key not in p:
                    raise ConfigError(f"objective.{key}", "required key is missing")
    elif kind == "logistic-l2":
        if "lambda" in p and p["lambda"] < 0:
            raise ConfigError("objective.lambda", "must be nonnegative")
        if p.get("data", "synthetic") == "synthetic":
            for key in ("N", "m"):
                if key not in p:
                    raise ConfigError(f"objective.{key}", "required key is missing for synthetic data")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# -- serialization -----------------------------------------------------------


def _num(v) -> str:
    return str(v) if isinstance(v, (int, str)) else repr(float(v))


def _render(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(", ".join(_num(x) for x in row) for row in v)
    if isinstance(v, tuple):
        return ", ".join(_num(x) for x in v)
    return _num(v)


def dump_config(cfg: RunConfig) -> str:
    lines = ["[objective]", f"kind = {cfg.objective.kind}"]
    lines += [f"{k} = {_render(v)}" for k, v in cfg.objective.params]
    p = cfg.partition
    lines += ["", "[partition]", f"n = {p.n}",
              f"sizes = {'equal' if p.sizes is None else ', '.join(map(str, p.sizes))}"]
    s = cfg.schedule
    lines += ["", "[schedule]", f"B = {s.B}", f"mode = {s.mode}", f"seed = {s.seed}"]
    if s.period is not None:
        lines.append(f"period = {s.period}")
    r = cfg.run
    lines += ["", "[run]", f"horizon = {r.horizon}", f"gamma = {_num(r.gamma)}",
              f"x0 = {r.x0}", f"record = {r.record}"]
    if r.stop_ratio is not None:
        lines.append(f"stop_ratio = {_num(r.stop_ratio)}")
    lines.append(f"record_every = {r.record_every}")
    o = cfg.output
    lines += ["", "[output]", f"directory = {o.directory}", f"emit-csv = {_render(o.emit_csv)}",
              f"emit-svg = {_render(o.emit_svg)}", f"emit-report = {_render(o.emit_report)}"]
    return "\n".join(lines) + "\n"


def with_param(cfg: RunConfig, name: str, raw: str) -> RunConfig:
    """Copy of ``cfg`` with one sweep parameter replaced (``seed`` is the schedule seed)."""
    if name == "B":
        B = _int("schedule.B", raw, 1)
        if cfg.schedule.period is not None and cfg.schedule.period > B:
            raise ConfigError("schedule.period", f"period {cfg.schedule.period} exceeds B={B}")
        return replace(cfg, schedule=replace(cfg.schedule, B=B))
    if name == "seed":
        return replace(cfg, schedule=replace(cfg.schedule, seed=_int("schedule.seed", raw, 0)))
    if name == "n":
        if cfg.partition.sizes is not None:
            raise ConfigError("partition.sizes", "sweeping n needs sizes = equal")
        return replace(cfg, partition=PartitionSpec(_int("partition.n", raw, 1)))
    if name == "gamma":
        raw = raw.strip()
        if raw == "auto":
            return replace(cfg, run=replace(cfg.run, gamma="auto"))
        g = _float("run.gamma", raw)
        if g <= 0:
            raise ConfigError("run.gamma", f"must be positive, got {raw}")
        return replace(cfg, run=replace(cfg.run, gamma=g))
    raise ConfigError("--param", f"cannot sweep {name!r}; expected one of {SWEEP_PARAMS}")


def initial_point(spec: str, m: int) -> np.ndarray:
    match = _X0.match(spec)
    if not match:
        raise ConfigError("run.x0", f"unrecognized initial point {spec!r}")
    if spec == "zeros":
        return np.zeros(m)
    if spec == "ones":
        return np.ones(m)
    return np.random.default_rng(int(match.group(2))).standard_normal(m)
