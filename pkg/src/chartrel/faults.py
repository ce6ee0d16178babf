"""Fault annotations: which distribution drives which hardware failure event.

Table format (``*.faults.csv``, ``#`` comment lines allowed)::

    instance,port,event,dist,param1,param2,from_state,to_state
    S*,HWFault,det,exp,10.0e-9,,Ok,Off
    UC*,HWFault,shutdown,weibull,1.5,0.1e-9/h,On,Off

``exp`` takes a rate in 1/h.  ``weibull`` takes shape and scale in hours; a
scale written with a ``/h`` suffix is read as a characteristic rate and the
scale becomes its reciprocal.  The raw text is kept on the parsed row.
Instance names may be glob patterns, expanded in instantiation order.
"""

from __future__ import annotations

import csv
import fnmatch
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import gamma

from .model import IN, CompositeDef
from .parser import SourceUnit
from .rng import stream_key

HEADER = ["instance", "port", "event", "dist", "param1", "param2", "from_state", "to_state"]


class FaultTableError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        loc = f"{path or '<table>'}:{line}: " if line else ""
        super().__init__(loc + message)
        self.line = line
        self.path = path


@dataclass(frozen=True)
class Exponential:
    rate: float  # 1/h

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def cdf(self, t):
        return -np.expm1(-self.rate * np.asarray(t, dtype=float))

    def inverse_survival(self, u):
        """Time t with P(T > t) = u."""
        return -np.log(u) / self.rate


@dataclass(frozen=True)
class Weibull:
    shape: float
    scale: float  # h

    def __post_init__(self):
        for name in ("shape", "scale"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"weibull {name} must be positive, got {v}")

    @property
    def mean(self) -> float:
        return self.scale * gamma(1.0 + 1.0 / self.shape)

    def cdf(self, t):
        return -np.expm1(-(np.asarray(t, dtype=float) / self.scale) ** self.shape)

    def inverse_survival(self, u):
        return self.scale * (-np.log(u)) ** (1.0 / self.shape)


Distribution = Union[Exponential, Weibull]


def sample_fault_time(dist: Distribution, rng, replica: int = 0, stream: int = 0) -> float:
    """Inverse-CDF draw: exponential -ln(U)/rate, Weibull scale*(-ln U)^(1/shape).

    ``rng`` is anything with ``uniform(replica, stream) -> float`` in (0, 1].
    """
    return float(dist.inverse_survival(rng.uniform(replica, stream)))


@dataclass(frozen=True)
class FaultAnnotation:
    instance: str
    port: str  # instance port receiving the fault
    event: str
    distribution: Distribution
    system_port: str  # composite input port bound to (instance, port)
    from_state: str = ""
    to_state: str = ""
    raw_params: tuple = ()  # parameter text as written in the table

    @property
    def key(self) -> int:
        """Stable stream identity, independent of where the row sits in the table."""
        return stream_key(f"{self.instance}.{self.port}.{self.event}")


@dataclass(frozen=True)
class FaultTable:
    rows: tuple = ()

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def keys(self) -> np.ndarray:
        return np.array([r.key for r in self.rows], dtype=np.uint64)

    def times(self, uniforms: np.ndarray) -> np.ndarray:
        """Fault times for a ``(replicas, rows)`` array of uniforms."""
        out = np.empty_like(uniforms)
        for j, row in enumerate(self.rows):
            out[:, j] = row.distribution.inverse_survival(uniforms[:, j])
        return out

    def for_instance(self, instance: str) -> list:
        return [r for r in self.rows if r.instance == instance]


def _number(text: str, what: str, line: int, path) -> float:
    try:
        return float(text)
    except ValueError:
        raise FaultTableError(f"{what}: '{text}' is not a number", line, path) from None


def parse_fault_table(unit: Union[SourceUnit, str, Path], composite: CompositeDef,
                      library=None) -> FaultTable:
    """Parse and resolve a fault table against a validated composite.

    Each row must name an instance port bound to a system port whose events
    flow into the composite.  Raises FaultTableError on unknown instances or
    ports, non-positive parameters and duplicate (instance, port, event) rows.
    """
    if isinstance(unit, Path):
        unit = SourceUnit.from_path(unit)
    if isinstance(unit, str):
        unit = SourceUnit(path="<table>", kind="fault_table", text=unit)
    path = unit.path
    numbered = [(n, line) for n, line in enumerate(io.StringIO(unit.text, newline=None), 1)
                if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        return FaultTable(())
    reader = csv.reader(line for _, line in numbered)
    header = [h.strip() for h in next(reader)]
    if header != HEADER:
        raise FaultTableError(f"header must be {','.join(HEADER)}", numbered[0][0], path)

    bound = {(b.instance, b.port): b.system_port for b in composite.bindings}
    names = [i.name for i in composite.instances]
    rows, seen = [], set()
    for (line_no, _), fields in zip(numbered[1:], reader):
        if len(fields) != len(HEADER):
            raise FaultTableError(f"expected {len(HEADER)} fields, got {len(fields)}", line_no, path)
        inst_pat, port, event, kind, p1, p2, from_state, to_state = (f.strip() for f in fields)
        dist = _distribution(kind, p1, p2, line_no, path)
        matches = [n for n in names if fnmatch.fnmatchcase(n, inst_pat)]
        if not matches:
            raise FaultTableError(f"unknown instance '{inst_pat}'", line_no, path)
        for inst in matches:
            sys_port = bound.get((inst, port))
            if sys_port is None:
                raise FaultTableError(f"'{inst}.{port}' is not bound to a system port", line_no, path)
            sp = composite.system_port(sys_port)
            if sp.interface.event(event) is None:
                raise FaultTableError(f"unknown event '{event}' on '{inst}.{port}'", line_no, path)
            if sp.direction(event) != IN:
                raise FaultTableError(f"'{sys_port}.{event}' is not a system input", line_no, path)
            if (inst, port, event) in seen:
                raise FaultTableError(f"duplicate row for '{inst}.{port}.{event}'", line_no, path)
            seen.add((inst, port, event))
            rows.append(FaultAnnotation(inst, port, event, dist, sys_port, from_state, to_state,
                                        (p1, p2)))
    return FaultTable(tuple(rows))


def _distribution(kind: str, p1: str, p2: str, line: int, path) -> Distribution:
    try:
        if kind == "exp":
            return Exponential(_number(p1, "rate", line, path))
        if kind == "weibull":
            shape = _number(p1, "shape", line, path)
            if p2.endswith("/h"):
                rate = _number(p2[:-2], "scale", line, path)
                if rate <= 0:
                    raise ValueError(f"weibull scale rate must be positive, got {rate}")
                return Weibull(shape, 1.0 / rate)
            return Weibull(shape, _number(p2, "scale", line, path))
    except ValueError as exc:
        if isinstance(exc, FaultTableError):
            raise
        raise FaultTableError(str(exc), line, path) from None
    raise FaultTableError(f"unknown distribution '{kind}' (expected exp or weibull)", line, path)


def load_fault_table(path: Union[str, Path], composite: CompositeDef) -> FaultTable:
    return parse_fault_table(SourceUnit.from_path(path), composite)


def exponentialize(table: FaultTable) -> FaultTable:
    """Swap every Weibull row for an exponential row with the same mean."""
    rows = [r if isinstance(r.distribution, Exponential)
            else replace(r, distribution=Exponential(1.0 / r.distribution.mean))
            for r in table.rows]
    return FaultTable(tuple(rows))


def scale_rates(table: FaultTable, factor: float) -> FaultTable:
    """Speed every fault clock up by ``factor`` (times shrink by the same factor)."""
    rows = []
    for r in table.rows:
        d = r.distribution
        if isinstance(d, Exponential):
            d = Exponential(d.rate * factor)
        else:
            d = Weibull(d.shape, d.scale / factor)
        rows.append(replace(r, distribution=d))
    return FaultTable(tuple(rows))
