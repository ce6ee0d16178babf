"""Monte Carlo lifetime simulation over fault-annotated composites.

For one replica every fault row gets a sampled occurrence time, the faults
are put in chronological order (ties keep table order), and each one is fed
to the engine as a single-event cycle until the evaluation instance enters a
failure state.  Faults later than the failure are never delivered.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

from .executor import Engine, EventInstance
from .faults import FaultTable
from .rng import CounterRNG

#: Default master seed, 0xE9A5.
DEFAULT_SEED = 59813


class EmptyFaultTableError(ValueError):
    pass


class NonAbsorbingModelError(RuntimeError):
    def __init__(self, message: str, final_state: dict):
        super().__init__(f"{message}; final state: {json.dumps(final_state, sort_keys=True)}")
        self.final_state = final_state


@dataclass(frozen=True)
class FaultEvent:
    time: float  # h
    instance: str
    port: str
    event: str
    system_port: str
    row: int  # index in the fault table


@dataclass(frozen=True)
class SimOutcome:
    replica: int
    failure_time: float  # h; the horizon for survivors
    failure_mode: Optional[str]  # None if the replica survived the horizon
    consumed_faults: tuple
    seed: int

    @property
    def survived(self) -> bool:
        return self.failure_mode is None


def _series_arrays(table: FaultTable, rng, replicas) -> tuple:
    if len(table) == 0:
        raise EmptyFaultTableError("fault table is empty; the model can never fail")
    u = rng.uniforms(np.asarray(replicas, dtype=np.uint64), table.keys())
    times = table.times(u)
    order = np.argsort(times, axis=1, kind="stable")
    return times, order


def generate_fault_series(table: FaultTable, rng, replica: int = 0) -> list:
    """All faults of one replica, ascending in time, ties in row order.

    ``rng`` provides ``uniforms(replicas, stream_keys) -> array``; see
    :class:`chartrel.rng.CounterRNG`.
    """
    times, order = _series_arrays(table, rng, [replica])
    return [_event(table, j, float(times[0, j])) for j in order[0]]


def _event(table, j, t) -> FaultEvent:
    r = table.rows[j]
    return FaultEvent(t, r.instance, r.port, r.event, r.system_port, int(j))


def run_series(engine: Engine, series: Sequence[FaultEvent], horizon: Optional[float] = None):
    """Feed faults one per cycle; returns ``(mode, time, consumed)``.

    ``mode`` is None when the horizon cut the series before any failure.
    """
    state = engine.init()
    consumed = []
    for fault in series:
        if horizon is not None and fault.time > horizon:
            return None, horizon, tuple(consumed)
        state, _ = engine.execute_cycle(state, (EventInstance(fault.system_port, fault.event),))
        consumed.append(fault)
        mode = engine.is_absorbing_failure(state)
        if mode is not None:
            return mode, fault.time, tuple(consumed)
    if horizon is not None:
        return None, horizon, tuple(consumed)
    raise NonAbsorbingModelError("fault series exhausted without reaching a failure state",
                                 engine.describe(state))


def simulate(engine: Engine, table: FaultTable, seed: int = DEFAULT_SEED, replica: int = 0,
             horizon: Optional[float] = None, rng=None) -> SimOutcome:
    """One replica of the lifetime simulation.

    ``rng`` replaces the seeded generator (any object with ``uniforms``, see
    :func:`generate_fault_series`); ``seed`` is then only recorded.
    """
    if rng is None:
        return _batch_range(engine, table, seed, replica, replica + 1, horizon)[0]
    series = generate_fault_series(table, rng, replica)
    mode, t, consumed = run_series(engine, series, horizon)
    return SimOutcome(replica, float(t), mode, consumed, seed)


def _batch_range(engine, table, seed, start, stop, horizon) -> list:
    rng = CounterRNG(seed)
    replicas = np.arange(start, stop, dtype=np.uint64)
    times, order = _series_arrays(table, rng, replicas)
    inputs = [(EventInstance(r.system_port, r.event),) for r in table.rows]
    rows = table.rows
    out = []
    init = engine.init()
    step, failure = engine.execute_cycle, engine.is_absorbing_failure
    for i, replica in enumerate(range(start, stop)):
        state = init
        mode = None
        t_row = times[i]
        consumed = []
        for j in order[i]:
            t = float(t_row[j])
            if horizon is not None and t > horizon:
                break
            state, _ = step(state, inputs[j])
            r = rows[j]
            consumed.append(FaultEvent(t, r.instance, r.port, r.event, r.system_port, int(j)))
            mode = failure(state)
            if mode is not None:
                break
        if mode is None:
            if horizon is None:
                raise NonAbsorbingModelError(
                    f"replica {replica}: fault series exhausted without reaching a failure state",
                    engine.describe(state))
            out.append(SimOutcome(replica, float(horizon), None, tuple(consumed), seed))
        else:
            out.append(SimOutcome(replica, consumed[-1].time, mode, tuple(consumed), seed))
    return out


def _chunk(args):
    return _batch_range(*args)


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_batch(engine: Engine, table: FaultTable, seed: int = DEFAULT_SEED, n: int = 10_000,
              start: int = 0, horizon: Optional[float] = None, workers: int = 1) -> list:
    """Outcomes for replicas ``start .. start+n-1``, ordered by replica.

    Each replica draws from its own counter-based substreams, so the result
    does not depend on ``workers`` or on how the range is split.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if workers <= 1 or n < 2 * workers:
        return _batch_range(engine, table, seed, start, start + n, horizon)
    edges = np.linspace(start, start + n, workers + 1).astype(int)
    jobs = [(engine, table, seed, int(a), int(b), horizon) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk, jobs))
    return [o for part in parts for o in part]


def failure_times(outcomes: Sequence[SimOutcome]) -> np.ndarray:
    return np.array([o.failure_time for o in outcomes if not o.survived], dtype=float)


# --------------------------------------------------------------------------
# outcome files

def write_outcomes(outcomes: Sequence[SimOutcome], fp: IO[str], fmt: str = "csv") -> None:
    """One row per outcome: replica, failure_time_h, failure_mode ("survived" if censored)."""
    if fmt == "csv":
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["replica", "failure_time_h", "failure_mode"])
        for o in outcomes:
            w.writerow([o.replica, repr(o.failure_time), o.failure_mode or "survived"])
    elif fmt == "json":
        for o in outcomes:
            fp.write(json.dumps({"replica": o.replica, "failure_time_h": o.failure_time,
                                 "failure_mode": o.failure_mode or "survived"}) + "\n")
    else:
        raise ValueError(f"unknown format '{fmt}'")


def read_outcomes(fp: IO[str]) -> list:
    """Inverse of :func:`write_outcomes` for either format (fault traces are not stored)."""
    text = fp.read()
    out = []
    if text.lstrip().startswith("{"):
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        records = list(csv.DictReader(io.StringIO(text)))
    for rec in records:
        mode = rec["failure_mode"]
        out.append(SimOutcome(int(rec["replica"]), float(rec["failure_time_h"]),
                              None if mode == "survived" else mode, (), -1))
    return out
