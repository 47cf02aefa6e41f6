"""Run orchestration: configuration, share-nothing workers, checkpoints, merging.

Each worker owns an ensemble, random streams and an accumulator derived from
(seed, worker index) and never talks to the others while sampling. At every
checkpoint boundary a worker hands a snapshot of its state to the parent,
which writes the combined checkpoint atomically and, in target-error mode,
decides whether everyone should stop. Because the random streams are
consumed identically whatever the segmentation, a resumed run continues the
exact sample stream of an uninterrupted one.
"""
from __future__ import annotations

import json
import logging
import math
import multiprocessing as mp
import os
import queue as queue_mod
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .estimator import BlockingAccumulator, Engine, production_segment
from .model import load_spinor_set
from .sampler import WalkerEnsemble, burn_in, init_ensemble
from .weights import WeightSpec

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "mcmp2-checkpoint"
CHECKPOINT_VERSION = 1
MIN_BLOCKS_FOR_TARGET = 10

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class RunConfig:
    spinors: str
    walkers: int = 8
    steps: int | None = None
    target_rel_err: float | None = None
    blocksize: int = 100
    burnin: int = 1000
    seed: int = 0
    workers: int = 1
    checkpoint: str | None = None
    checkpoint_interval: int = 10000
    trace: str | None = None
    weights: dict = field(default_factory=dict)
    adapt: bool = True

    def __post_init__(self):
        if (self.steps is None) == (self.target_rel_err is None):
            raise ConfigError("set exactly one stopping rule: steps or target-rel-err")
        if self.steps is not None and self.steps < 1:
            raise ConfigError(f"steps must be positive, got {self.steps}")
        if self.target_rel_err is not None and not self.target_rel_err > 0:
            raise ConfigError(f"target-rel-err must be positive, got {self.target_rel_err}")
        if self.walkers < 2:
            raise ConfigError(f"walkers must be at least 2, got {self.walkers}")
        if self.blocksize < 1:
            raise ConfigError(f"blocksize must be at least 1, got {self.blocksize}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.burnin < 0:
            raise ConfigError(f"burnin must be non-negative, got {self.burnin}")
        if self.checkpoint_interval < 1:
            raise ConfigError("checkpoint-interval must be positive")

    def worker_budget(self, k: int) -> int | None:
        """Share of the total step budget for worker ``k``."""
        if self.steps is None:
            return None
        q, r = divmod(self.steps, self.workers)
        return q + (1 if k < r else 0)

    def worker_trace(self, k: int) -> Path | None:
        return None if self.trace is None else Path(f"{self.trace}.w{k}")


# config text ---------------------------------------------------------------

_INT_KEYS = {"walkers", "steps", "blocksize", "burnin", "seed", "workers",
             "checkpoint-interval"}
_FLOAT_KEYS = {"target-rel-err"}
_STR_KEYS = {"spinors", "checkpoint", "trace"}
_BOOL_KEYS = {"adapt"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _BOOL_KEYS | {"weight"}


def _field(key: str) -> str:
    return key.replace("-", "_")


def parse_config_text(text: str, base: dict | None = None) -> RunConfig:
    """Parse ``key value`` lines; ``weight El c1 z1 c2 z2`` sets weight parameters.

    Unknown keys are errors. ``base`` supplies values (for example from
    command-line flags) that the text may not override silently: a key set
    in both places is an error.
    """
    values = dict(base or {})
    weights = dict(values.pop("weights", {}) or {})
    seen = set()
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        if key == "weight":
            if len(rest) < 3 or len(rest) % 2 != 1:
                raise ConfigError(f"line {no}: expected 'weight <element> c1 zeta1 c2 zeta2'")
            try:
                nums = [float(x) for x in rest[1:]]
            except ValueError:
                raise ConfigError(f"line {no}: non-numeric weight parameter") from None
            weights[rest[0]] = tuple(zip(nums[::2], nums[1::2]))
            continue
        if key in seen or values.get(_field(key)) is not None:
            raise ConfigError(f"line {no}: key {key!r} set twice")
        seen.add(key)
        if len(rest) != 1:
            raise ConfigError(f"line {no}: key {key!r} takes exactly one value")
        values[_field(key)] = _convert(key, rest[0], no)
    values = {k: v for k, v in values.items() if v is not None}
    if "spinors" not in values:
        raise ConfigError("no spinor file given")
    try:
        return RunConfig(weights=weights, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _convert(key, value, no):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            if value.lower() not in ("yes", "no", "true", "false", "1", "0"):
                raise ValueError
            return value.lower() in ("yes", "true", "1")
        return value
    except ValueError:
        raise ConfigError(f"line {no}: bad value {value!r} for {key!r}") from None


def parse_config(source=None, **flags) -> RunConfig:
    """RunConfig from a config file path, keyword flags, or both."""
    text = Path(source).read_text() if source is not None else ""
    return parse_config_text(text, flags)


def config_text(cfg: RunConfig) -> str:
    """Canonical text of a configuration: sorted keys, repr-exact numbers."""
    lines = []
    for k, v in sorted(asdict(cfg).items()):
        if k == "weights":
            continue
        if v is not None:
            lines.append(f"{k.replace('_', '-')} {_canon(v)}")
    for el in sorted(cfg.weights):
        nums = " ".join(_canon(x) for pair in cfg.weights[el] for x in pair)
        lines.append(f"weight {el} {nums}")
    return "\n".join(lines) + "\n"


def _canon(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# keys that change the sampled distribution and therefore forbid merging
_HASHED = ("walkers", "blocksize", "burnin", "adapt")


def config_hash(cfg: RunConfig) -> str:
    """64-bit FNV-1a over the canonical text of the physics-defining settings.

    Seeds, worker counts, stopping rules and output paths are excluded so
    that independent runs of one system can be merged; the spinor file enters
    through a fingerprint of its contents.
    """
    spinor_fp = fnv1a64(Path(cfg.spinors).read_bytes())
    lines = [f"spinors-fnv1a {spinor_fp:016x}"]
    lines += [f"{k} {_canon(getattr(cfg, k))}" for k in _HASHED]
    for el in sorted(cfg.weights):
        lines.append(f"weight {el} " + " ".join(_canon(x) for p in cfg.weights[el] for x in p))
    text = "\n".join(lines) + "\n"
    return f"{fnv1a64(text.encode()):016x}"


# results ---------------------------------------------------------------------

@dataclass(frozen=True)
class WorkerResult:
    worker: int
    n: int
    mean: float
    sigma_bar: float
    n_blocks: int
    acceptance: float
    sigma_step: float
    imag_ratio: float
    config_hash: str = ""

    @classmethod
    def from_state(cls, k: int, state: dict, chash: str) -> "WorkerResult":
        acc = BlockingAccumulator.from_state(state["accumulator"])
        ens = state["ensemble"]
        proposed = ens["proposed"] * len(ens["accepted"])
        return cls(k, acc.n, acc.mean, acc.sigma_bar, acc.n_blocks,
                   sum(ens["accepted"]) / proposed if proposed else 0.0,
                   ens["sigma"], acc.imag_ratio, chash)


@dataclass(frozen=True)
class Report:
    energy: float
    sigma_bar: float
    n_total: int
    config_hash: str
    workers: tuple

    @property
    def relative_error(self) -> float:
        return self.sigma_bar / abs(self.energy) if self.energy else math.inf

    def to_dict(self) -> dict:
        return {"energy": self.energy, "sigma_bar": self.sigma_bar, "n_total": self.n_total,
                "config_hash": self.config_hash, "workers": [asdict(w) for w in self.workers]}

    def format(self) -> str:
        lines = [f"E2        = {self.energy:.12e}",
                 f"sigma_bar = {self.sigma_bar:.6e}",
                 f"rel. err. = {self.relative_error:.3e}",
                 f"N total   = {self.n_total}",
                 f"config    = {self.config_hash}"]
        for w in self.workers:
            lines.append(f"  worker {w.worker}: N={w.n} I={w.mean:.10e} sigma_bar={w.sigma_bar:.3e}"
                         f" blocks={w.n_blocks} acceptance={w.acceptance:.3f}"
                         f" step={w.sigma_step:.4g} imag={w.imag_ratio:.1e}")
        return "\n".join(lines)


def merge(records) -> tuple[float, float]:
    """Step-count weighted mean and the independent-error combination of sigma_bar."""
    records = list(records)
    if not records:
        raise ValueError("nothing to merge")
    hashes = {r.config_hash for r in records}
    if len(hashes) > 1:
        raise CheckpointError(f"cannot merge records with different config hashes {sorted(hashes)}")
    if len(records) == 1:
        return records[0].mean, records[0].sigma_bar
    n = np.array([r.n for r in records], dtype=float)
    total = n.sum()
    if total == 0:
        return 0.0, math.inf
    mean = float(np.dot(n, [r.mean for r in records]) / total)
    sb = np.array([r.sigma_bar for r in records])
    used = n > 0
    sigma_bar = float(np.sqrt(np.sum((n[used] / total) ** 2 * sb[used] ** 2)))
    return mean, sigma_bar


def build_report(results, chash: str) -> Report:
    results = tuple(sorted(results, key=lambda r: r.worker))
    mean, sb = merge(results)
    return Report(mean, sb, sum(r.n for r in results), chash, results)


# checkpoints -----------------------------------------------------------------

def write_checkpoint(path, cfg: RunConfig, chash: str, states: dict, done: set) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_hash": chash,
        "config": config_text(cfg),
        "workers": [{"worker": k, "done": k in done, "state": states.get(k)}
                    for k in range(cfg.workers)],
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1))
    os.replace(tmp, path)


def read_checkpoint(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not an {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    return doc


def checkpoint_results(path) -> list[WorkerResult]:
    doc = read_checkpoint(path)
    return [WorkerResult.from_state(w["worker"], w["state"], doc["config_hash"])
            for w in doc["workers"] if w["state"] is not None]


# workers ---------------------------------------------------------------------

def _truncate_trace(path: Path, n: int) -> None:
    if not path.exists():
        return
    keep = [ln for ln in path.read_text().splitlines(keepends=True)
            if ln.strip() and int(ln.split()[0]) <= n]
    path.write_text("".join(keep))


def _format_trace(records) -> str:
    return "".join(f"{n} {i:.17g} {s:.17g}\n" for n, i, s in records)


def _worker_loop(engine: Engine, cfg: RunConfig, k: int, state, emit, should_stop,
                 deadline: float | None = None):
    """Sample until the budget, a stop request or ``deadline`` is reached.

    ``emit(kind, k, state)`` receives "snap" at checkpoint boundaries and
    "done" at the end.
    """
    spec = engine.spec
    if state is None:
        ens = init_ensemble(cfg.walkers, spec, cfg.seed, k)
        burn_in(ens, spec, cfg.burnin, adapt=cfg.adapt)
        acc = BlockingAccumulator(cfg.blocksize)
    else:
        ens = WalkerEnsemble.from_state(state["ensemble"])
        acc = BlockingAccumulator.from_state(state["accumulator"])
    trace = cfg.worker_trace(k)
    if trace is not None:
        if state is None:
            trace.write_text("")
        else:
            _truncate_trace(trace, acc.n)
    budget = cfg.worker_budget(k)
    interval = cfg.checkpoint_interval
    # with a deadline, sample in short chunks so the clock is checked often
    step = min(interval, cfg.blocksize) if deadline is not None else interval

    def snapshot():
        return {"ensemble": ens.state(), "accumulator": acc.state()}

    while True:
        if budget is not None and acc.n >= budget:
            break
        if deadline is not None and time.perf_counter() >= deadline:
            break
        if should_stop():
            break
        chunk = min(step - acc.n % step, interval - acc.n % interval)
        if budget is not None:
            chunk = min(chunk, budget - acc.n)
        re, im = production_segment(engine, ens, chunk)
        records = acc.extend(re, im)
        if trace is not None and records:
            with open(trace, "a") as fh:
                fh.write(_format_trace(records))
        if acc.n % interval == 0 and not (budget is not None and acc.n >= budget):
            emit("snap", k, snapshot())
    emit("done", k, snapshot())


def _process_main(engine, cfg, k, state, q, stop_event, deadline):
    def emit(kind, kk, st):
        q.put((kind, kk, st))

    try:
        _worker_loop(engine, cfg, k, state, emit, stop_event.is_set, deadline)
    except BaseException as exc:  # report and let the parent fail loudly
        q.put(("error", k, repr(exc)))


class _Coordinator:
    """Parent-side bookkeeping: latest snapshots, checkpoint writes, stopping."""

    def __init__(self, cfg: RunConfig, chash: str, states: dict, done: set,
                 max_checkpoints: int | None = None):
        self.cfg = cfg
        self.chash = chash
        self.states = dict(states)
        self.done = set(done)
        self.stop = False
        self.n_checkpoints = 0
        self.max_checkpoints = max_checkpoints
        self.killed = False

    def handle(self, kind, k, state):
        self.states[k] = state
        if kind == "done":
            self.done.add(k)
        if self.cfg.checkpoint is not None:
            write_checkpoint(self.cfg.checkpoint, self.cfg, self.chash, self.states, self.done)
            if kind == "snap":
                self.n_checkpoints += 1
                if self.max_checkpoints is not None and self.n_checkpoints >= self.max_checkpoints:
                    self.killed = True
        if self.cfg.target_rel_err is not None and self.target_met():
            self.stop = True

    def results(self) -> list[WorkerResult]:
        return [WorkerResult.from_state(k, s, self.chash) for k, s in self.states.items()
                if s is not None]

    def target_met(self) -> bool:
        res = self.results()
        if len(res) < self.cfg.workers or any(r.n_blocks < MIN_BLOCKS_FOR_TARGET for r in res):
            return False
        mean, sb = merge(res)
        return mean != 0.0 and sb / abs(mean) <= self.cfg.target_rel_err


class _Killed(Exception):
    pass


def _execute(cfg: RunConfig, chash: str, states: dict, done: set,
             max_checkpoints: int | None = None, deadline: float | None = None) -> Report | None:
    spinors = load_spinor_set(cfg.spinors)
    if spinors.molecule is None:
        raise ConfigError(f"{cfg.spinors}: spinor file has no nuclei section; "
                          f"the pair weight needs nuclear positions")
    spec = WeightSpec.build(spinors.molecule, cfg.weights)
    engine = Engine.build(spinors, spec)
    coord = _Coordinator(cfg, chash, states, done, max_checkpoints)
    pending = [k for k in range(cfg.workers) if k not in coord.done]

    if cfg.workers == 1 or len(pending) <= 1:
        for k in pending:
            def emit(kind, kk, st):
                coord.handle(kind, kk, st)
                if coord.killed:
                    raise _Killed

            try:
                _worker_loop(engine, cfg, k, coord.states.get(k), emit,
                             lambda: coord.stop, deadline)
            except _Killed:
                return None
    else:
        ctx = mp.get_context("fork")
        q = ctx.Queue()
        stop_event = ctx.Event()
        procs = [ctx.Process(target=_process_main,
                             args=(engine, cfg, k, coord.states.get(k), q, stop_event, deadline),
                             daemon=True) for k in pending]
        for p in procs:
            p.start()
        remaining = set(pending)
        try:
            while remaining:
                try:
                    kind, k, payload = q.get(timeout=1.0)
                except queue_mod.Empty:
                    if not any(p.is_alive() for p in procs):
                        raise RuntimeError("workers exited without reporting") from None
                    continue
                if kind == "error":
                    raise RuntimeError(f"worker {k} failed: {payload}")
                coord.handle(kind, k, payload)
                if kind == "done":
                    remaining.discard(k)
                if coord.stop:
                    stop_event.set()
                if coord.killed:
                    return None
        finally:
            for p in procs:
                if coord.killed:
                    p.terminate()
                p.join(timeout=10)
    if cfg.trace is not None:
        _concatenate_traces(cfg)
    return build_report(coord.results(), chash)


def _concatenate_traces(cfg: RunConfig) -> None:
    parts = []
    for k in range(cfg.workers):
        p = cfg.worker_trace(k)
        if p.exists():
            parts.append(p.read_text())
    Path(cfg.trace).write_text("".join(parts))
    for k in range(cfg.workers):
        cfg.worker_trace(k).unlink(missing_ok=True)


def run(cfg: RunConfig, max_checkpoints: int | None = None) -> Report | None:
    """Execute a fresh run and return its merged report.

    ``max_checkpoints`` aborts abruptly right after that many checkpoint
    writes and returns None, which emulates a killed job for restart tests.
    """
    chash = config_hash(cfg)
    return _execute(cfg, chash, {}, set(), max_checkpoints)


def resume(checkpoint_path, max_checkpoints: int | None = None) -> Report | None:
    """Continue the run stored in a checkpoint; the spinor file must be unchanged."""
    doc = read_checkpoint(checkpoint_path)
    cfg = parse_config_text(doc["config"])
    if cfg.checkpoint is None or Path(cfg.checkpoint).resolve() != Path(checkpoint_path).resolve():
        cfg = replace(cfg, checkpoint=str(checkpoint_path))
    chash = config_hash(cfg)
    if chash != doc["config_hash"]:
        raise CheckpointError(f"config hash mismatch: checkpoint has {doc['config_hash']}, "
                              f"current inputs give {chash} (spinor file or settings changed)")
    states = {w["worker"]: w["state"] for w in doc["workers"]}
    done = {w["worker"] for w in doc["workers"] if w["done"]}
    return _execute(cfg, chash, states, done, max_checkpoints)


def merge_files(paths) -> Report:
    """Merge the per-worker results stored in one or more checkpoint files."""
    results = []
    for path in paths:
        results.extend(checkpoint_results(path))
    if not results:
        raise ValueError("no worker results in the given files")
    relabeled = [replace(r, worker=i) for i, r in enumerate(results)]
    mean, sb = merge(relabeled)
    return Report(mean, sb, sum(r.n for r in relabeled), relabeled[0].config_hash,
                  tuple(relabeled))


def measure_throughput(cfg: RunConfig, seconds: float) -> int:
    """Production steps completed by all workers within a wall-time window.

    Burn-in runs before the window opens; the count covers sampling only.
    """
    cfg = replace(cfg, steps=None, target_rel_err=1e-300, checkpoint=None, trace=None,
                  checkpoint_interval=10 ** 15)
    chash = "throughput"
    spinors = load_spinor_set(cfg.spinors)
    spec = WeightSpec.build(spinors.molecule, cfg.weights)
    engine = Engine.build(spinors, spec)
    # equilibrate and compile outside the window
    states = {}
    for k in range(cfg.workers):
        ens = init_ensemble(cfg.walkers, spec, cfg.seed, k)
        burn_in(ens, spec, cfg.burnin, adapt=cfg.adapt)
        production_segment(engine, ens, 1)
        states[k] = {"ensemble": ens.state(),
                     "accumulator": BlockingAccumulator(cfg.blocksize).state()}
    deadline = time.perf_counter() + seconds
    coord_states = dict(states)
    report = _execute(cfg, chash, coord_states, set(), deadline=deadline)
    return report.n_total
