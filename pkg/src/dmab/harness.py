"""Seeded experiment batches: YAML configs, aggregation, bound curves, CSV output.

A config looks like::

    name: two_user_iid
    scenario: decentral_iid        # single_iid | single_markov | decentral_iid | decentral_markov
    arms:                          # list (single player) or list of rows (player x arm)
      - [0.8, 0.6]                 # a bare number is a Bernoulli mean
      - [0.6, 0.35]
    policy:
      algorithm: ducb4             # ucb1_L | ucb4 (single player), ducb4 (decentralized)
      L: 16                        # or {kind: frame_growth, value: 14}
      mode: physical               # physical | packetized
      cost: {c0: 0.5, c1: 0.1}
    horizon: 100000
    seeds: 50                      # a count (seeds 0..n-1) or an explicit list
    record: {ratio: 1.1}           # geometric grid; or {stride: 1000}
    output: results/two_user_iid.csv

Other arm forms: ``{values: [...], probs: [...]}`` (discrete i.i.d.),
``{p01: 0.3, p10: 0.5}`` (two-state chain with rewards 0 and 1), or
``{states: [...], transition: [[...]], initial: [...]}``. The string
``markov_grid`` expands to the 2x2 grid of chains of the Markovian experiment; for a
single player ``{markov_grid_row: i}`` takes row ``i``. See ``docs/config.md``.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import bounds as B
from .arms import ArmError, IidArm, MarkovArm, markov_grid_chains
from .policy import CostModel, IndexSpec, PreconditionError, Schedule, run_ucb1_L, run_ucb4
from .protocol import DUCB4Params, frame_precision, run_ducb4
from .trace import RegretTrace, geometric_grid, linear_grid

SCENARIOS = ("single_iid", "single_markov", "decentral_iid", "decentral_markov")
ALGORITHMS = {"single": ("ucb1_L", "ucb4"), "decentral": ("ducb4",)}
CSV_COLUMNS = ("t", "regret_mean", "regret_min", "regret_max", "bound", "m_t_mean", "collisions_mean")
WORKERS_ENV = "DMAB_WORKERS"


class ConfigError(ValueError):
    """Invalid config; the message starts with the offending field path."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class BatchError(RuntimeError):
    def __init__(self, seed: int, exc: BaseException):
        super().__init__(f"seed {seed} failed: {exc}")
        self.seed = seed


# ---------------------------------------------------------------- config


@dataclass
class PolicyConfig:
    algorithm: str = "ucb4"
    L: Any = 1  # int or Schedule
    mode: str = "physical"
    eps: Any = 0.0  # single-player index precision, number or Schedule
    eps1: float | None = None
    eps2: float | None = None
    kappa: Any = None  # number or Schedule
    cost: CostModel = field(default_factory=CostModel)
    int_bits: int = 8


@dataclass
class SimConfig:
    scenario: str
    arms: Any
    policy: PolicyConfig
    horizon: int
    seeds: list[int]
    record_ratio: float | None = 1.1
    record_stride: int | None = None
    workers: int | None = None
    output: str | None = None
    name: str = "run"

    @property
    def decentralized(self) -> bool:
        return self.scenario.startswith("decentral")

    @property
    def markov(self) -> bool:
        return self.scenario.endswith("markov")

    def grid(self) -> np.ndarray:
        if self.record_stride is not None:
            return linear_grid(self.horizon, self.record_stride)
        return geometric_grid(self.horizon, self.record_ratio)

    def to_dict(self) -> dict:
        p = self.policy
        pol: dict[str, Any] = {"algorithm": p.algorithm, "cost": p.cost.to_dict()}
        if p.algorithm in ("ucb1_L", "ducb4"):
            pol["L"] = _sched_out(p.L)
        if p.algorithm == "ducb4":
            pol["mode"] = p.mode
            pol["int_bits"] = p.int_bits
            for k in ("eps1", "eps2"):
                if getattr(p, k) is not None:
                    pol[k] = getattr(p, k)
        else:
            pol["eps"] = _sched_out(p.eps)
        if p.kappa is not None:
            pol["kappa"] = _sched_out(p.kappa)
        rec = {"stride": self.record_stride} if self.record_stride is not None else {"ratio": self.record_ratio}
        out = {
            "name": self.name,
            "scenario": self.scenario,
            "arms": self.arms,
            "policy": pol,
            "horizon": self.horizon,
            "seeds": list(self.seeds),
            "record": rec,
        }
        if self.workers is not None:
            out["workers"] = self.workers
        if self.output is not None:
            out["output"] = self.output
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _sched_out(x):
    return x.to_dict() if isinstance(x, Schedule) else x


def _number(v, name: str, *, integer: bool = False, lo: float | None = None, strict: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise ConfigError(name, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(name, "must be finite")
    if lo is not None and (v <= lo if strict else v < lo):
        raise ConfigError(name, f"must be {'>' if strict else '>='} {lo}, got {v!r}")
    return int(v) if integer else float(v)


def _schedule(v, name: str, *, lo: float | None = None, strict: bool = False):
    if isinstance(v, dict):
        unknown = set(v) - {"kind", "value"}
        if unknown:
            raise ConfigError(name, f"unknown keys {sorted(unknown)}")
        kind = v.get("kind", "constant")
        if kind not in Schedule.KINDS:
            raise ConfigError(f"{name}.kind", f"expected one of {Schedule.KINDS}, got {kind!r}")
        return Schedule(kind, _number(v.get("value", 1.0), f"{name}.value", lo=0.0, strict=True))
    return _number(v, name, lo=lo, strict=strict)


def _check_keys(d: dict, allowed: set, name: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        field_name = f"{name}.{sorted(unknown)[0]}" if name else sorted(unknown)[0]
        raise ConfigError(field_name, "unknown field")


def parse_config(data: dict) -> SimConfig:
    """Validate a config mapping and build a :class:`SimConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    _check_keys(data, {"name", "scenario", "arms", "policy", "horizon", "seeds", "record", "workers", "output"}, "")
    for key in ("scenario", "arms", "policy", "horizon", "seeds"):
        if key not in data:
            raise ConfigError(key, "missing required field")
    scenario = data["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {SCENARIOS}, got {scenario!r}")
    horizon = _number(data["horizon"], "horizon", integer=True, lo=1)
    seeds = data["seeds"]
    if isinstance(seeds, list):
        seeds = [_number(s, f"seeds[{k}]", integer=True, lo=0) for k, s in enumerate(seeds)]
        if not seeds:
            raise ConfigError("seeds", "seed list is empty")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds", "seeds must be distinct")
    else:
        seeds = list(range(_number(seeds, "seeds", integer=True, lo=1)))

    rec = data.get("record", {"ratio": 1.1})
    if not isinstance(rec, dict) or len(rec) != 1 or not set(rec) <= {"ratio", "stride"}:
        raise ConfigError("record", "expected {ratio: r} or {stride: s}")
    ratio = stride = None
    if "ratio" in rec:
        ratio = _number(rec["ratio"], "record.ratio", lo=1.0, strict=True)
    else:
        stride = _number(rec["stride"], "record.stride", integer=True, lo=1)

    workers = data.get("workers")
    if workers is not None:
        workers = _number(workers, "workers", integer=True, lo=1)
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a path string")
    name = data.get("name", "run")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")

    policy = _parse_policy(data["policy"], scenario)
    cfg = SimConfig(scenario, data["arms"], policy, horizon, seeds, ratio, stride, workers, output, name)
    arms = build_arms(cfg)  # validates arm definitions
    _check_preconditions(cfg, arms)
    return cfg


def _parse_policy(p, scenario: str) -> PolicyConfig:
    if not isinstance(p, dict):
        raise ConfigError("policy", "expected a mapping")
    _check_keys(p, {"algorithm", "L", "mode", "eps", "eps1", "eps2", "kappa", "cost", "int_bits"}, "policy")
    family = "decentral" if scenario.startswith("decentral") else "single"
    algo = p.get("algorithm", ALGORITHMS[family][-1])
    if algo not in ALGORITHMS[family]:
        raise ConfigError("policy.algorithm", f"expected one of {ALGORITHMS[family]} for {scenario}, got {algo!r}")
    out = PolicyConfig(algorithm=algo)
    cost = p.get("cost", {})
    if isinstance(cost, (int, float)) and not isinstance(cost, bool):
        out.cost = CostModel(_number(cost, "policy.cost", lo=0.0))
    elif isinstance(cost, dict):
        _check_keys(cost, {"c0", "c1"}, "policy.cost")
        out.cost = CostModel(_number(cost.get("c0", 0.0), "policy.cost.c0", lo=0.0),
                             _number(cost.get("c1", 0.0), "policy.cost.c1", lo=0.0))
    else:
        raise ConfigError("policy.cost", "expected a number or {c0, c1}")
    if "L" in p:
        out.L = _schedule(p["L"], "policy.L", lo=1)
        if not isinstance(out.L, Schedule):
            out.L = _number(p["L"], "policy.L", integer=True, lo=1)
    elif algo == "ducb4":
        out.L = 16
    if algo == "ucb1_L" and isinstance(out.L, Schedule):
        raise ConfigError("policy.L", "ucb1_L needs a constant frame length")
    mode = p.get("mode", "physical")
    if mode not in ("physical", "packetized"):
        raise ConfigError("policy.mode", f"expected physical or packetized, got {mode!r}")
    out.mode = mode
    if "eps" in p:
        if algo == "ducb4":
            raise ConfigError("policy.eps", "use eps1/eps2 for the decentralized policy")
        out.eps = _schedule(p["eps"], "policy.eps", lo=0.0)
    for k in ("eps1", "eps2"):
        if k in p:
            if algo != "ducb4":
                raise ConfigError(f"policy.{k}", "only used by the decentralized policy")
            v = _number(p[k], f"policy.{k}", lo=0.0, strict=True)
            if v >= 1:
                raise ConfigError(f"policy.{k}", "must be < 1")
            setattr(out, k, v)
    if "kappa" in p:
        out.kappa = _schedule(p["kappa"], "policy.kappa", lo=0.0, strict=True)
    elif scenario.endswith("markov"):
        raise ConfigError("policy.kappa", "Markov scenarios need kappa (a number or a schedule)")
    if "int_bits" in p:
        out.int_bits = _number(p["int_bits"], "policy.int_bits", integer=True, lo=1)
    if algo == "ucb1_L" and scenario.endswith("markov"):
        raise ConfigError("policy.algorithm", "ucb1_L is defined for i.i.d. arms only")
    return out


def _arm(spec, name: str, markov: bool):
    try:
        if markov:
            if not isinstance(spec, dict):
                raise ConfigError(name, "Markov arm must be {p01, p10} or {states, transition}")
            if "p01" in spec:
                _check_keys(spec, {"p01", "p10", "rewards", "initial"}, name)
                kw = {}
                if "initial" in spec:
                    kw["initial_distribution"] = spec["initial"]
                return MarkovArm.two_state(_number(spec["p01"], f"{name}.p01", lo=0.0),
                                           _number(spec.get("p10"), f"{name}.p10", lo=0.0),
                                           rewards=tuple(spec.get("rewards", (0.0, 1.0))), **kw)
            _check_keys(spec, {"states", "transition", "initial", "allow_zero_reward"}, name)
            if "states" not in spec or "transition" not in spec:
                raise ConfigError(name, "needs states and transition")
            return MarkovArm(spec["states"], spec["transition"], spec.get("initial"),
                             allow_zero_reward=bool(spec.get("allow_zero_reward", False)))
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return IidArm.bernoulli(float(spec))
        if isinstance(spec, dict):
            if "bernoulli" in spec:
                _check_keys(spec, {"bernoulli"}, name)
                return IidArm.bernoulli(_number(spec["bernoulli"], f"{name}.bernoulli"))
            _check_keys(spec, {"values", "probs"}, name)
            return IidArm(spec.get("values", []), spec.get("probs", []))
        raise ConfigError(name, f"cannot interpret arm {spec!r}")
    except (ArmError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(name, str(exc)) from None


def build_arms(cfg: SimConfig):
    """Arm objects for a config: a list (single player) or a list of rows."""
    spec = cfg.arms
    if cfg.markov and spec == "markov_grid":
        if not cfg.decentralized:
            raise ConfigError("arms", "use {markov_grid_row: i} for a single player")
        return markov_grid_chains()
    if cfg.markov and isinstance(spec, dict) and "markov_grid_row" in spec:
        if cfg.decentralized:
            raise ConfigError("arms", "markov_grid_row selects one player's chains; use 'markov_grid'")
        row = _number(spec["markov_grid_row"], "arms.markov_grid_row", integer=True, lo=0)
        if row > 1:
            raise ConfigError("arms.markov_grid_row", "must be 0 or 1")
        return markov_grid_chains()[row]
    if not isinstance(spec, list) or not spec:
        raise ConfigError("arms", "expected a non-empty list")
    if cfg.decentralized:
        if not all(isinstance(r, list) for r in spec):
            raise ConfigError("arms", "decentralized scenarios need a list of rows (one per player)")
        width = len(spec[0])
        for i, r in enumerate(spec):
            if len(r) != width:
                raise ConfigError(f"arms[{i}]", f"expected {width} arms, got {len(r)}")
        return [[_arm(a, f"arms[{i}][{j}]", cfg.markov) for j, a in enumerate(r)] for i, r in enumerate(spec)]
    return [_arm(a, f"arms[{j}]", cfg.markov) for j, a in enumerate(spec)]


def _check_preconditions(cfg: SimConfig, arms) -> None:
    T = cfg.horizon
    if cfg.decentralized:
        M, N = len(arms), len(arms[0])
        if M > N:
            raise ConfigError("arms", f"need players <= arms, got {M} x {N}")
        if T < N:
            raise ConfigError("horizon", f"must be at least N = {N}")
        L0 = cfg.policy.L(1) if isinstance(cfg.policy.L, Schedule) else cfg.policy.L
        if L0 < M + 1:
            raise ConfigError("policy.L", f"frame length must be at least M + 1 = {M + 1}")
        return
    N = len(arms)
    if N < 2:
        raise ConfigError("arms", "need at least two arms")
    if cfg.policy.algorithm == "ucb1_L" and T < N * cfg.policy.L:
        raise ConfigError("horizon", f"must be at least N * L = {N * cfg.policy.L}")
    if T < N:
        raise ConfigError("horizon", f"must be at least N = {N}")


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"{path} is not valid YAML: {exc}") from None
    return parse_config(data)


# ---------------------------------------------------------------- runs


def run_one(cfg: SimConfig, seed: int) -> RegretTrace:
    arms = build_arms(cfg)
    p = cfg.policy
    grid = cfg.grid()
    T = cfg.horizon
    if cfg.decentralized:
        params = DUCB4Params(L=p.L, mode=p.mode, eps1=p.eps1, eps2=p.eps2, kappa=p.kappa, cost=p.cost,
                             int_bits=p.int_bits)
        return run_ducb4(arms, params, T=T, seed=seed, grid=grid)
    if p.algorithm == "ucb1_L":
        return run_ucb1_L(arms, int(p.L), T, seed=seed, cost=p.cost, grid=grid)
    spec = IndexSpec("kappa", kappa=p.kappa, eps=p.eps) if p.kappa is not None else IndexSpec("ucb4", eps=p.eps)
    return run_ucb4(arms, spec, p.cost, T=T, seed=seed, grid=grid)


def _run_seed(args):
    cfg, seed = args
    try:
        return run_one(cfg, seed)
    except Exception as exc:  # noqa: BLE001 - re-raised with the seed attached
        raise BatchError(seed, exc) from exc


def default_workers() -> int:
    v = os.environ.get(WORKERS_ENV)
    if v is None:
        return 1
    try:
        return max(1, int(v))
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {v!r}") from None


def bound_curve(cfg: SimConfig, t: np.ndarray) -> tuple[np.ndarray, str]:
    """The applicable regret bound at times ``t`` and its name (NaN if undefined)."""
    try:
        fn, label = _bound_fn(cfg)
    except B.UndefinedBound as exc:
        return np.full(len(t), np.nan), f"undefined: {exc}"
    out = np.empty(len(t))
    for k, tt in enumerate(t):
        try:
            out[k] = fn(float(tt))
        except B.UndefinedBound:
            out[k] = np.nan
    return out, label


def _bound_fn(cfg: SimConfig):
    arms = build_arms(cfg)
    p = cfg.policy
    if cfg.decentralized:
        M, N = len(arms), len(arms[0])
        gaps = B.gap_stats([[a.mean for a in row] for row in arms])
        if cfg.markov:
            if isinstance(p.kappa, Schedule) or isinstance(p.L, Schedule):
                raise B.UndefinedBound("only an order bound is stated with unknown parameters")
            eps = _ducb4_eps(p, p.L, M)
            consts = B.markov_constants(arms, M=M)
            return (lambda T: B.bound_t7(gaps, M, N, eps, p.L, p.kappa, consts, p.cost, T)), "t7"
        if isinstance(p.L, Schedule):
            return (lambda T: B.bound_t6(gaps, M, N, None, p.L, p.cost, T,
                                         precision_of=lambda L: _ducb4_eps(p, L, M))), "t6(ii)"
        eps = _ducb4_eps(p, p.L, M)
        return (lambda T: B.bound_t6(gaps, M, N, eps, p.L, p.cost, T)), "t6"
    N = len(arms)
    gaps = B.gap_stats([a.mean for a in arms])
    if cfg.markov:
        if isinstance(p.kappa, Schedule) or isinstance(p.eps, Schedule):
            raise B.UndefinedBound("only an order bound is stated with unknown parameters")
        consts = B.markov_constants(arms)
        if p.eps == 0:
            return (lambda T: B.bound_t4(gaps, consts, p.kappa, p.cost(0.0), N, T)), "t4"
        return (lambda T: B.bound_t5(gaps, consts, p.kappa, p.eps, p.cost(p.eps), N, T)), "t5"
    if p.algorithm == "ucb1_L":
        return (lambda T: B.bound_t1(gaps, int(p.L), T)), "t1"
    if isinstance(p.eps, Schedule) or p.eps > 0:
        return (lambda T: B.bound_t3(gaps, p.cost, p.eps, N, T)), "t3"
    return (lambda T: B.bound_t2(gaps, p.cost(0.0), N, T)), "t2"


def _ducb4_eps(p: PolicyConfig, L: int, M: int) -> float:
    f = frame_precision(int(L), M)
    if p.mode == "physical":
        e1 = p.eps1 if p.eps1 is not None else f
        e2 = p.eps2 if p.eps2 is not None else e1
        return min(e1, e2)
    return p.eps2 if p.eps2 is not None else f


@dataclass
class BatchResult:
    """Pointwise aggregate over seeds on the common recording grid."""

    t: np.ndarray
    regret_mean: np.ndarray
    regret_min: np.ndarray
    regret_max: np.ndarray
    bound: np.ndarray
    m_t_mean: np.ndarray
    collisions_mean: np.ndarray
    bound_name: str = ""
    traces: list[RegretTrace] = field(default_factory=list)

    def rows(self):
        cols = [self.t, self.regret_mean, self.regret_min, self.regret_max, self.bound, self.m_t_mean,
                self.collisions_mean]
        return list(zip(*cols))


def aggregate(traces: list[RegretTrace], bound: np.ndarray, bound_name: str = "") -> BatchResult:
    reg = np.array([tr.regret for tr in traces])
    return BatchResult(
        t=traces[0].t.copy(),
        regret_mean=reg.mean(axis=0),
        regret_min=reg.min(axis=0),
        regret_max=reg.max(axis=0),
        bound=bound,
        m_t_mean=np.mean([tr.m for tr in traces], axis=0),
        collisions_mean=np.mean([tr.collisions for tr in traces], axis=0),
        bound_name=bound_name,
        traces=traces,
    )


def run_batch(cfg: SimConfig, workers: int | None = None, output: str | os.PathLike | None = None) -> BatchResult:
    """Run every seed, aggregate, attach the bound curve and write the CSV (if an output is set).

    Results are combined in seed-list order, so the output does not depend on
    the worker count.
    """
    workers = workers or cfg.workers or default_workers()
    jobs = [(cfg, s) for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            traces = list(ex.map(_run_seed, jobs))
    else:
        traces = [_run_seed(j) for j in jobs]
    bound, name = bound_curve(cfg, traces[0].t)
    result = aggregate(traces, bound, name)
    output = output or cfg.output
    if output is not None:
        emit_csv(result, output)
    return result


# ---------------------------------------------------------------- CSV


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def emit_csv(result: BatchResult | None, path) -> Path:
    """Header plus one row per recorded time. Floats are written with ``repr``."""
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            if result is not None:
                for row in result.rows():
                    w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[k]) for r in body]) for k, h in enumerate(header)}
    if "t" in cols:
        cols["t"] = cols["t"].astype(np.int64)
    return cols


def emit_bound_csv(cfg: SimConfig, path) -> Path:
    t = cfg.grid()
    b, _ = bound_curve(cfg, t)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "bound"))
        for tt, bb in zip(t, b):
            w.writerow((_fmt(tt), _fmt(bb)))
    return path
