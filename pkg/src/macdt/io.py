"""Run configuration, reward-grid files and result serialisation.

Configs are TOML with the sections ``grid``, ``agents``, ``reward``,
``kernel``, ``run``, ``safety`` and ``output``. Every key has a default
except the grid size; unknown keys are rejected with their dotted path.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, InvalidArgumentError, MacdtError
from .gp import Kernel, RewardField
from .graph import CoverageModel, build_grid
from .oracle import GREEDY_RATIO
from .policy import ORACLES, POLICIES, PolicyConfig
from .simulator import (
    FIG3_HAZARDS_8X8,
    FIG3_SEED_8X8,
    REWARD_FAMILIES,
    Environment,
    RunTrace,
    SafetySpec,
    hazard_safety_field,
    reward_values,
)

SCHEMA_VERSION = 1
STEP_COLUMNS = ("t", "episode", "coverage_value", "cum_regret", "cum_alpha_regret", "clean_event")
HAZARD_PRESETS = {"walls": (FIG3_HAZARDS_8X8, FIG3_SEED_8X8, (8, 8))}


@dataclass(frozen=True)
class SafetyConfig:
    enabled: bool = False
    hazards: str | tuple[int, ...] = "walls"
    seed_vertices: tuple[int, ...] = ()
    noise_var: float = 0.0
    lengthscale: float = 0.2
    variance: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    rows: int
    cols: int
    n_agents: int = 3
    radii: tuple[int, ...] = (1,)
    start: tuple[int, ...] | None = None
    family: str = "gp-sample"
    sparse_count: int = 4
    reward_file: str | None = None
    kernel_kind: str = "se"
    lengthscale: float = 0.5
    variance: float = 1.0
    prior_mean: float | str = 0.0
    noise_var: float = 0.1
    delta: float = 0.1
    alpha: float = GREEDY_RATIO
    beta: float | None = None
    policy: str = "mac-dt"
    oracle: str = "greedy"
    horizon: int = 400
    seeds: tuple[int, ...] = (0,)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    output: str = "out"

    @property
    def kernel(self) -> Kernel:
        return Kernel(self.kernel_kind, self.variance, self.lengthscale)

    @property
    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(self.policy, self.delta, self.alpha, self.oracle, self.beta)

    def with_policy(self, policy: str) -> "RunConfig":
        return validate(replace(self, policy=policy))

    def to_dict(self) -> dict:
        """Nested form mirroring the config file layout."""
        s = self.safety
        safety = {
            "enabled": s.enabled,
            "hazards": s.hazards if isinstance(s.hazards, str) else list(s.hazards),
            "seed_vertices": list(s.seed_vertices),
            "noise_var": s.noise_var,
            "lengthscale": s.lengthscale,
            "variance": s.variance,
        }
        reward = {"family": self.family, "sparse_count": self.sparse_count}
        if self.reward_file is not None:
            reward["path"] = self.reward_file
        run = {
            "policy": self.policy, "oracle": self.oracle, "delta": self.delta, "alpha": self.alpha,
            "noise_var": self.noise_var, "horizon": self.horizon, "seeds": list(self.seeds),
        }
        if self.beta is not None:
            run["beta"] = self.beta
        agents = {"count": self.n_agents, "radii": list(self.radii)}
        if self.start is not None:
            agents["start"] = list(self.start)
        return {
            "grid": {"rows": self.rows, "cols": self.cols},
            "agents": agents,
            "reward": reward,
            "kernel": {"kind": self.kernel_kind, "lengthscale": self.lengthscale,
                       "variance": self.variance, "prior_mean": self.prior_mean},
            "run": run,
            "safety": safety,
            "output": {"dir": self.output},
        }


# section -> key -> (type(s), RunConfig field)
_NUM = (int, float)
_SCHEMA = {
    "grid": {"rows": (int, "rows"), "cols": (int, "cols")},
    "agents": {"count": (int, "n_agents"), "radius": (int, "radii"), "radii": (list, "radii"),
               "start": (list, "start")},
    "reward": {"family": (str, "family"), "sparse_count": (int, "sparse_count"), "path": (str, "reward_file")},
    "kernel": {"kind": (str, "kernel_kind"), "lengthscale": (_NUM, "lengthscale"),
               "variance": (_NUM, "variance"), "prior_mean": ((int, float, str), "prior_mean")},
    "run": {"policy": (str, "policy"), "oracle": (str, "oracle"), "delta": (_NUM, "delta"),
            "alpha": (_NUM, "alpha"), "beta": (_NUM, "beta"), "noise_var": (_NUM, "noise_var"),
            "horizon": (int, "horizon"), "seeds": ((list, int), "seeds"), "seed_count": (int, "seeds")},
    "safety": {"enabled": (bool, "enabled"), "hazards": ((str, list), "hazards"),
               "seed_vertices": (list, "seed_vertices"), "noise_var": (_NUM, "noise_var"),
               "lengthscale": (_NUM, "lengthscale"), "variance": (_NUM, "variance")},
    "output": {"dir": (str, "output")},
}


def _typed(value, types, path):
    types = types if isinstance(types, tuple) else (types,)
    # bool is an int subclass; only accept it where bool is asked for
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"expected {_type_names(types)}, got a boolean", path)
    if not isinstance(value, types):
        raise ConfigError(f"expected {_type_names(types)}, got {type(value).__name__}", path)
    return value


def _type_names(types):
    return " or ".join(t.__name__ for t in types)


def _int_list(value, path):
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise ConfigError("expected a list of integers", path)
    return tuple(int(x) for x in value)


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a config from the nested mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a table")
    kw, safety = {}, {}
    for section, body in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section; valid: {', '.join(_SCHEMA)}", section)
        if not isinstance(body, dict):
            raise ConfigError("section must be a table", section)
        for key, value in body.items():
            path = f"{section}.{key}"
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key; valid: {', '.join(_SCHEMA[section])}", path)
            types, name = _SCHEMA[section][key]
            _typed(value, types, path)
            if key == "radius":
                value = (value,)
            elif key in ("radii", "start", "seed_vertices"):
                value = _int_list(value, path)
            elif key == "seeds":
                value = (value,) if isinstance(value, int) else _int_list(value, path)
            elif key == "seed_count":
                if value < 1:
                    raise ConfigError("must be at least 1", path)
                value = tuple(range(value))
            elif key == "hazards" and isinstance(value, list):
                value = _int_list(value, path)
            elif isinstance(value, int) and types is _NUM:
                value = float(value)
            target = safety if section == "safety" else kw
            if name in target:
                raise ConfigError(f"conflicts with another key setting {name}", path)
            target[name] = value
    for need in ("rows", "cols"):
        if need not in kw:
            raise ConfigError("required key missing", f"grid.{need}")
    if isinstance(kw.get("prior_mean"), int):
        kw["prior_mean"] = float(kw["prior_mean"])
    try:
        cfg = RunConfig(**kw, safety=SafetyConfig(**safety))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate(cfg)


def validate(cfg: RunConfig) -> RunConfig:
    """Semantic checks; returns the config with agent radii expanded."""
    if cfg.rows < 1:
        raise ConfigError("must be at least 1", "grid.rows")
    if cfg.cols < 1:
        raise ConfigError("must be at least 1", "grid.cols")
    n = cfg.rows * cfg.cols
    if cfg.n_agents < 1:
        raise ConfigError("need at least one agent", "agents.count")
    radii = cfg.radii
    if len(radii) == 1 and cfg.n_agents > 1:
        radii = radii * cfg.n_agents
    if len(radii) != cfg.n_agents:
        raise ConfigError(f"need {cfg.n_agents} radii, got {len(radii)}", "agents.radii")
    if any(k < 0 for k in radii):
        raise ConfigError("radii must be non-negative", "agents.radii")
    if cfg.start is not None:
        if len(cfg.start) != cfg.n_agents:
            raise ConfigError(f"need {cfg.n_agents} start vertices", "agents.start")
        if any(not 0 <= v < n for v in cfg.start):
            raise ConfigError(f"start vertices must lie in 0..{n - 1}", "agents.start")
    if cfg.family not in REWARD_FAMILIES:
        raise ConfigError(f"unknown family {cfg.family!r}; valid: {', '.join(REWARD_FAMILIES)}", "reward.family")
    if cfg.family == "file" and not cfg.reward_file:
        raise ConfigError("family 'file' needs reward.path", "reward.path")
    if not 1 <= cfg.sparse_count <= n:
        raise ConfigError(f"must lie in 1..{n}", "reward.sparse_count")
    if cfg.kernel_kind not in ("se", "diagonal"):
        raise ConfigError("valid kinds: se, diagonal", "kernel.kind")
    if not cfg.lengthscale > 0:
        raise ConfigError("must be positive", "kernel.lengthscale")
    if not cfg.variance > 0:
        raise ConfigError("must be positive", "kernel.variance")
    if isinstance(cfg.prior_mean, str) and cfg.prior_mean != "field-shift":
        raise ConfigError("must be a number or 'field-shift'", "kernel.prior_mean")
    if cfg.policy not in POLICIES:
        raise ConfigError(f"unknown policy {cfg.policy!r}; valid: {', '.join(POLICIES)}", "run.policy")
    if cfg.oracle not in ORACLES:
        raise ConfigError(f"unknown oracle {cfg.oracle!r}; valid: {', '.join(ORACLES)}", "run.oracle")
    if not 0 < cfg.delta < 1:
        raise ConfigError("must lie in (0, 1)", "run.delta")
    if not 0 < cfg.alpha <= 1:
        raise ConfigError("must lie in (0, 1]", "run.alpha")
    if cfg.beta is not None and cfg.beta < 0:
        raise ConfigError("must be non-negative", "run.beta")
    if cfg.noise_var < 0:
        raise ConfigError("must be non-negative", "run.noise_var")
    if cfg.horizon < 1:
        raise ConfigError("must be at least 1", "run.horizon")
    if not cfg.seeds:
        raise ConfigError("need at least one seed", "run.seeds")
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError("seeds must be non-negative", "run.seeds")
    s = cfg.safety
    safe_policy = cfg.policy in ("mac-dt-safe", "mac-dt-safely-explore")
    if safe_policy and not s.enabled:
        raise ConfigError(f"policy {cfg.policy} needs safety.enabled = true", "safety.enabled")
    if s.enabled:
        if isinstance(s.hazards, str):
            if s.hazards not in HAZARD_PRESETS:
                raise ConfigError(f"unknown preset; valid: {', '.join(HAZARD_PRESETS)}", "safety.hazards")
            if HAZARD_PRESETS[s.hazards][2] != (cfg.rows, cfg.cols):
                raise ConfigError("preset 'walls' is defined for an 8x8 grid", "safety.hazards")
        elif any(not 0 <= v < n for v in s.hazards):
            raise ConfigError(f"hazard vertices must lie in 0..{n - 1}", "safety.hazards")
        seeds = safety_seed(cfg)
        if not seeds:
            raise ConfigError("need at least one known-safe vertex", "safety.seed_vertices")
        if any(not 0 <= v < n for v in seeds):
            raise ConfigError(f"seed vertices must lie in 0..{n - 1}", "safety.seed_vertices")
        if set(seeds) & set(hazard_list(cfg)):
            raise ConfigError("seed vertices overlap hazards", "safety.seed_vertices")
        if cfg.start is not None and not set(cfg.start) <= set(seeds):
            raise ConfigError("start vertices must lie in the safe seed set", "agents.start")
        if s.noise_var < 0:
            raise ConfigError("must be non-negative", "safety.noise_var")
        if not s.lengthscale > 0:
            raise ConfigError("must be positive", "safety.lengthscale")
        if not s.variance > 0:
            raise ConfigError("must be positive", "safety.variance")
    return replace(cfg, radii=tuple(radii))


def hazard_list(cfg: RunConfig) -> tuple[int, ...]:
    h = cfg.safety.hazards
    return HAZARD_PRESETS[h][0] if isinstance(h, str) else tuple(h)


def safety_seed(cfg: RunConfig) -> tuple[int, ...]:
    s = cfg.safety
    if s.seed_vertices:
        return s.seed_vertices
    if isinstance(s.hazards, str):
        return HAZARD_PRESETS[s.hazards][1]
    return ()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", str(path)) from exc
    return config_from_dict(data)


# reward grid files --------------------------------------------------------


def write_grid_file(path, rows: int, cols: int, values, name: str | None = None,
                    units: str | None = None) -> None:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != rows * cols:
        raise InvalidArgumentError(f"{values.size} values for a {rows}x{cols} grid")
    doc = {"rows": int(rows), "cols": int(cols), "values": [float(v) for v in values]}
    meta = {k: v for k, v in (("name", name), ("units", units)) if v is not None}
    if meta:
        doc["metadata"] = meta
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_grid_file(path) -> tuple[int, int, np.ndarray, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid file: {exc}", str(path)) from exc
    for key in ("rows", "cols", "values"):
        if key not in doc:
            raise ConfigError(f"missing key {key!r}", str(path))
    rows, cols = doc["rows"], doc["cols"]
    values = np.asarray(doc["values"], dtype=np.float64)
    if values.shape != (rows * cols,):
        raise ConfigError(f"{values.size} values for a {rows}x{cols} grid", str(path))
    if not np.all(np.isfinite(values)):
        raise ConfigError("values must be finite", str(path))
    return rows, cols, values, doc.get("metadata", {})


def ingest_reward_grid(path, rows: int | None = None, cols: int | None = None) -> RewardField:
    """Load a grid file as a reward field shifted so its minimum is 0."""
    r, c, values, _ = read_grid_file(path)
    if rows is not None and (r, c) != (rows, cols):
        raise ConfigError(f"grid file is {r}x{c}, config grid is {rows}x{cols}", str(path))
    shift = -float(values.min())
    return RewardField(values + shift, shift=shift)


# environments -------------------------------------------------------------


def build_environment(cfg: RunConfig, seed: int) -> Environment:
    """Environment for one seed. Draw order on the stream: field, then the
    start positions (when not fixed by the config)."""
    graph = build_grid(cfg.rows, cfg.cols)
    cov = CoverageModel(graph, cfg.radii)
    rng = np.random.default_rng([seed, 0])
    kernel = cfg.kernel
    if cfg.family == "file":
        fld = ingest_reward_grid(cfg.reward_file, cfg.rows, cfg.cols)
    else:
        fld = reward_values(cfg.family, graph, kernel, rng, cfg.sparse_count)
    safety = None
    if cfg.safety.enabled:
        s = cfg.safety
        safety = SafetySpec(safety_seed(cfg), Kernel("se", s.variance, s.lengthscale), s.noise_var)
        fld = RewardField(fld.values, hazard_safety_field(graph, hazard_list(cfg)), fld.shift)
    if cfg.start is not None:
        start = cfg.start
    else:
        pool = np.asarray(safety.seed_vertices if safety else np.arange(graph.vertex_count))
        start = tuple(int(pool[i]) for i in rng.integers(0, pool.size, cov.n_agents))
    prior_mean = fld.shift if cfg.prior_mean == "field-shift" else float(cfg.prior_mean)
    return Environment(graph, cov, fld, cfg.noise_var, cfg.horizon, start, kernel,
                       prior_mean, safety, seed)


# outputs ------------------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def step_table(trace: RunTrace) -> str:
    """CSV text of the per-step record."""
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEP_COLUMNS)
    cum = trace.regret(1.0)
    cum_a = trace.regret()
    clean = trace.step_clean()
    for t in range(trace.horizon):
        w.writerow([t + 1, trace.episode[t], _num(trace.covered_value[t]), _num(cum[t]),
                    _num(cum_a[t]), int(clean[t])])
    return buf.getvalue()


def ci_halfwidth(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """95% normal-approximation half-width; zero for a single sample."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    if n < 2:
        return np.zeros(np.delete(x.shape, axis))
    return 1.96 * x.std(axis=axis, ddof=1) / math.sqrt(n)


def aggregate(traces: list[RunTrace], cfg: RunConfig) -> dict:
    if not traces:
        raise InvalidArgumentError("need at least one trace")
    lengths = {t.horizon for t in traces}
    if len(lengths) != 1:
        raise InvalidArgumentError("traces have different horizons")
    cov = np.array([t.covered_value for t in traces])
    reg = np.array([t.regret(1.0) for t in traces])
    reg_a = np.array([t.regret() for t in traces])
    return {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "policy": traces[0].policy,
        "seeds": [t.seed for t in traces],
        "config": cfg.to_dict(),
        "t": list(range(1, traces[0].horizon + 1)),
        "coverage_value_mean": cov.mean(axis=0).tolist(),
        "coverage_value_ci": ci_halfwidth(cov).tolist(),
        "cum_regret_mean": reg.mean(axis=0).tolist(),
        "cum_regret_ci": ci_halfwidth(reg).tolist(),
        "cum_alpha_regret_mean": reg_a.mean(axis=0).tolist(),
        "cum_alpha_regret_ci": ci_halfwidth(reg_a).tolist(),
        "clean_event_fraction": float(np.mean([t.clean_event() for t in traces])),
    }


def trace_to_dict(trace: RunTrace) -> dict:
    d = asdict(trace)
    d["positions"] = [list(p) for p in trace.positions]
    d["eval_vertices"] = [list(e) for e in trace.eval_vertices]
    d["eval_values"] = [list(e) for e in trace.eval_values]
    return {"schema_version": SCHEMA_VERSION, "version": __version__, "trace": d}


def trace_from_dict(doc: dict) -> RunTrace:
    try:
        d = dict(doc["trace"])
        d["positions"] = [tuple(p) for p in d["positions"]]
        d["eval_vertices"] = [tuple(e) for e in d["eval_vertices"]]
        d["eval_values"] = [tuple(e) for e in d["eval_values"]]
        return RunTrace(**d)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed trace document: {exc}") from exc


def load_trace(path) -> RunTrace:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read trace: {exc}", str(path)) from exc
    return trace_from_dict(doc)


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def run_stem(trace: RunTrace) -> str:
    return f"{trace.policy}_seed{trace.seed}"


def write_outputs(traces: list[RunTrace], reports: list | None, cfg: RunConfig,
                  out_dir=None) -> list[Path]:
    """Write step tables, traces, theory reports and the aggregate record.

    Returns the written paths. ``reports`` may be ``None`` or a list aligned
    with ``traces`` whose items have ``to_dict``.
    """
    out = Path(out_dir if out_dir is not None else cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MacdtError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def put(name, text):
        p = out / name
        try:
            p.write_text(text)
        except OSError as exc:
            raise MacdtError(f"cannot write {p}: {exc}") from exc
        written.append(p)

    for k, trace in enumerate(traces):
        stem = run_stem(trace)
        put(f"{stem}_steps.csv", step_table(trace))
        put(f"{stem}_trace.json", dumps(trace_to_dict(trace)))
        if reports is not None:
            rep = reports[k].to_dict()
            rep.update(schema_version=SCHEMA_VERSION, version=__version__, seed=trace.seed,
                       policy=trace.policy)
            put(f"{stem}_theory.json", dumps(rep))
    put(f"{traces[0].policy}_aggregate.json", dumps(aggregate(traces, cfg)))
    return written
