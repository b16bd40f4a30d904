"""Parallelized t-SNE: chunked partial embeddings mixed and pooled over epochs.

Each epoch the master shuffles the data into ``threads`` elementary chunks.
Worker ``t`` optimizes chunks ``t, t+1, ..., t+layers-1`` (cyclically) for a
short run of plain t-SNE iterations, starting from the per-point mean of the
current layer positions. Chunk ``c`` optimized by worker ``t`` is pooled into
layer ``(c - t) mod threads``, so every point ends each epoch with exactly one
position per layer.

Workers share nothing during an epoch and results are merged in thread order,
so a run is a pure function of ``(seed, config, data)`` whatever the number of
cores executing it.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import embedcore
from .data import DataSource
from .errors import ConfigError, PtsneError, SizeCapError, WorkerError
from .similarity import PerplexityTarget, joint_affinity

log = logging.getLogger(__name__)

GLOBAL_COST_CAP = 20000


@dataclass(frozen=True)
class PtsneConfig:
    threads: int = 4
    layers: int = 2
    rounds: int = 1
    ppx: float = 30.0
    seed: int = 1
    epochs: Optional[int] = None
    iters: Optional[int] = None
    # cap on simultaneously running workers; None means min(threads, cpu count)
    cores: Optional[int] = None
    # point count used in the learning rate: "local" (thread size) or "global" (n)
    lr_points: str = "local"

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 1 <= self.layers <= self.threads:
            raise ConfigError(f"layers must be in [1, threads={self.threads}], got {self.layers}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if not self.ppx > 1:
            raise ConfigError("perplexity must be > 1")
        for name in ("epochs", "iters", "cores"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be a positive count")
        if self.lr_points not in ("local", "global"):
            raise ConfigError("lr_points must be 'local' or 'global'")

    def thread_size(self, n: int) -> int:
        return math.ceil(n * self.layers / self.threads)

    def validate_for(self, n: int):
        if self.threads > n:
            raise ConfigError(f"threads ({self.threads}) exceeds the number of points ({n})")
        smallest = (n // self.threads) * self.layers
        if self.ppx > smallest - 1:
            raise ConfigError(
                f"perplexity {self.ppx} too large for thread workloads of {smallest} points"
            )


@dataclass(frozen=True)
class ChunkPlan:
    permutation: np.ndarray
    # chunk c holds permutation[bounds[c]:bounds[c + 1]]
    bounds: np.ndarray
    # chunk ids per thread
    assignment: tuple

    @property
    def threads(self) -> int:
        return len(self.assignment)

    def chunk(self, c: int) -> np.ndarray:
        return self.permutation[self.bounds[c]:self.bounds[c + 1]]

    def chunk_of(self) -> np.ndarray:
        out = np.empty(self.permutation.size, dtype=np.int64)
        for c in range(self.threads):
            out[self.chunk(c)] = c
        return out

    def thread_indices(self, t: int) -> np.ndarray:
        """Data indices worked by thread ``t``, in ascending order."""
        return np.sort(np.concatenate([self.chunk(c) for c in self.assignment[t]]))


def make_plan(n: int, config: PtsneConfig, rng) -> ChunkPlan:
    T, L = config.threads, config.layers
    if L > T:
        raise ConfigError("layers cannot exceed threads")
    perm = rng.permutation(n)
    sizes = np.full(T, n // T)
    sizes[: n % T] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    assignment = tuple(tuple((t + k) % T for k in range(L)) for t in range(T))
    return ChunkPlan(perm, bounds, assignment)


def default_schedule(n: int, z: int, epochs=None, iters=None):
    return (
        epochs if epochs is not None else math.ceil(math.sqrt(n)),
        iters if iters is not None else math.ceil(math.sqrt(z)),
    )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    round: int
    avg_cost: float
    avg_size: float
    thread_costs: tuple = field(default=(), repr=False)
    layer_sizes: tuple = field(default=(), repr=False)


@dataclass
class GlobalState:
    layer_positions: np.ndarray  # (layers, n, 2)
    trace: list = field(default_factory=list)
    epochs_done: int = 0
    # mean pseudo-normalized cost of the thread chunks before the first iteration
    initial_cost: Optional[float] = None

    @property
    def embedding(self) -> np.ndarray:
        """Per-point mean over layers."""
        return self.layer_positions.mean(axis=0)


def unit_disk(rng, n: int) -> np.ndarray:
    r = np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def init_state(n: int, config: PtsneConfig) -> GlobalState:
    rng = np.random.default_rng([config.seed, 0])
    Y = unit_disk(rng, n)
    return GlobalState(np.repeat(Y[None], config.layers, axis=0))


def epoch_rng(config: PtsneConfig, epoch: int):
    """Independent stream for global epoch number ``epoch`` (0-based)."""
    return np.random.default_rng([config.seed, 1, epoch])


def _worker(idx, start, source, config, iters, n_total, want_start_cost):
    target = PerplexityTarget(config.ppx)
    P = joint_affinity(source.sq_distances(idx), target, on_degenerate="uniform")
    n_lr = idx.size if config.lr_points == "local" else n_total
    start_cost = embedcore.pseudo_norm_cost(P, start) if want_start_cost else None
    Y = embedcore.optimize(P, start, iters, n_lr)
    return Y, embedcore.pseudo_norm_cost(P, Y), start_cost


def _max_workers(config):
    if config.cores is not None:
        return min(config.cores, config.threads)
    return min(config.threads, os.cpu_count() or 1)


def run_epoch(state: GlobalState, plan: ChunkPlan, source: DataSource, config: PtsneConfig,
              iters: int, round_no: int = 1, executor=None) -> GlobalState:
    """One mix / optimize / pool cycle. Returns a new state; ``state`` is untouched."""
    n = source.n
    T, L = config.threads, config.layers
    start = state.embedding
    chunk_of = plan.chunk_of()
    first = state.epochs_done == 0
    jobs = [plan.thread_indices(t) for t in range(T)]

    def run(t):
        idx = jobs[t]
        try:
            return _worker(idx, start[idx], source, config, iters, n, first)
        except Exception as exc:
            raise WorkerError(t, exc) from exc

    if executor is None:
        with ThreadPoolExecutor(max_workers=_max_workers(config)) as pool:
            results = list(pool.map(run, range(T)))
    else:
        results = list(executor.map(run, range(T)))

    layers = np.empty_like(state.layer_positions)
    for t, (Y, _, _) in enumerate(results):
        idx = jobs[t]
        slot = (chunk_of[idx] - t) % T
        for k in range(L):
            sel = slot == k
            layers[k, idx[sel]] = Y[sel]
    costs = tuple(r[1] for r in results)
    sizes = tuple(embedcore.embedding_size(layers[k]) for k in range(L))
    record = EpochRecord(
        epoch=state.epochs_done + 1,
        round=round_no,
        avg_cost=float(np.mean(costs)),
        avg_size=float(np.mean(sizes)),
        thread_costs=costs,
        layer_sizes=sizes,
    )
    initial = state.initial_cost
    if first:
        initial = float(np.mean([r[2] for r in results]))
    return GlobalState(layers, state.trace + [record], state.epochs_done + 1, initial)


class TraceWriter:
    """Progress sink writing ``epoch,round,avg_cost,avg_size`` CSV lines."""

    header = "epoch,round,avg_cost,avg_size\n"

    def __init__(self, fh):
        self.fh = fh
        fh.write(self.header)
        fh.flush()

    def __call__(self, rec: EpochRecord):
        self.fh.write(f"{rec.epoch},{rec.round},{rec.avg_cost!r},{rec.avg_size!r}\n")
        self.fh.flush()


def run_ptsne(source: DataSource, config: PtsneConfig,
              progress_sink: Optional[Callable[[EpochRecord], None]] = None,
              on_epoch: Optional[Callable[[GlobalState], None]] = None,
              state: Optional[GlobalState] = None) -> GlobalState:
    """Run ``rounds`` x ``epochs`` epochs from a uniform unit-disk start.

    ``progress_sink`` receives each ``EpochRecord``; ``on_epoch`` receives the
    full state after each epoch. On failure the exception carries the last
    complete state as ``partial_state``.
    """
    source.require_embeddable()
    n = source.n
    config.validate_for(n)
    epochs, iters = default_schedule(n, config.thread_size(n), config.epochs, config.iters)
    if state is None:
        state = init_state(n, config)
    log.info("ptsne: n=%d threads=%d layers=%d z=%d epochs=%d iters=%d",
             n, config.threads, config.layers, config.thread_size(n), epochs, iters)
    with ThreadPoolExecutor(max_workers=_max_workers(config)) as pool:
        try:
            for r in range(1, config.rounds + 1):
                for _ in range(epochs):
                    plan = make_plan(n, config, epoch_rng(config, state.epochs_done))
                    state = run_epoch(state, plan, source, config, iters, r, executor=pool)
                    if progress_sink is not None:
                        progress_sink(state.trace[-1])
                    if on_epoch is not None:
                        on_epoch(state)
        except PtsneError as exc:
            exc.partial_state = state
            raise
    return state


def global_affinity(source: DataSource, config: PtsneConfig, cap: int = GLOBAL_COST_CAP):
    if source.n > cap:
        raise SizeCapError(f"global cost needs O(n^2) memory; n={source.n} exceeds cap {cap}")
    return joint_affinity(source.sq_distances(), PerplexityTarget(config.ppx))


def global_cost(state: GlobalState, source: DataSource, config: PtsneConfig,
                cap: int = GLOBAL_COST_CAP, P=None) -> float:
    """Pseudo-normalized cost of the whole dataset against layer 1.

    Pass a precomputed ``P`` from ``global_affinity`` to avoid recomputing it.
    """
    if source.n > cap:
        raise SizeCapError(f"global cost needs O(n^2) memory; n={source.n} exceeds cap {cap}")
    if P is None:
        P = global_affinity(source, config, cap)
    return embedcore.pseudo_norm_cost(P, state.layer_positions[0])


def with_overrides(config: PtsneConfig, **kw) -> PtsneConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
