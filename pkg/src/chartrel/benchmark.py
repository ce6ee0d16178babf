"""Scaled EPAS-style models for runtime benchmarks.

A benchmark with ``n_uc`` sides and ``sensors_per_uc`` sensors per side has,
for every side X (lettered A, B, ...): sensors ``S1X .. SkX``, a diagnostic
``DiagX`` voting over them, a microcontroller ``UCX`` and a motor controller
``XCTRL``; one evaluation chart ``Ev`` watches every controller.  Loss of
assist needs every side lost; self-steering needs one side with wrong output.

The diagnostic raises WrongOutput when at least two sensors drift, or when
one drifts and the drift-free online sensors are no majority
(``2 * ok_num <= on_num``).  For three sensors this is the bundled rule.
"""

from __future__ import annotations

import statistics
import string
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .executor import Engine
from .faults import load_fault_table
from .inference import conditional_lifetime, summarize_lifetime
from .loader import Model, bundled_model_dir, load_model
from .presim import run_batch


@dataclass(frozen=True)
class BenchmarkSpec:
    n_uc: int
    sensors_per_uc: int

    def __post_init__(self):
        if self.n_uc < 1 or self.sensors_per_uc < 1:
            raise ValueError("n_uc and sensors_per_uc must be at least 1")
        if self.sensors_per_uc % 2 == 0:
            warnings.warn(f"{self.sensors_per_uc} sensors per side: an even count allows tied votes",
                          stacklevel=2)

    @property
    def sensors(self) -> int:
        return self.n_uc * self.sensors_per_uc

    @classmethod
    def parse(cls, text: str) -> "BenchmarkSpec":
        """``"2x3"`` or ``"2,3"``."""
        parts = text.replace("x", ",").split(",")
        if len(parts) != 2:
            raise ValueError(f"benchmark spec '{text}' is not of the form NxS")
        return cls(int(parts[0]), int(parts[1]))

    def __str__(self) -> str:
        return f"{self.n_uc}x{self.sensors_per_uc}"


def side_names(n: int) -> list:
    """A, B, ..., Z, AA, AB, ..."""
    out = []
    for i in range(n):
        name = ""
        i += 1
        while i:
            i, r = divmod(i - 1, 26)
            name = string.ascii_uppercase[r] + name
        out.append(name)
    return out


_VERBATIM = ("interfaces.gi", "sensor.gsc", "uc.gsc", "mainctrl.gsc", "epas.faults.csv")


def _diagnostic(k: int) -> str:
    ports = "".join(f"    port S{i}HW: requires SensorFault\n" for i in range(1, k + 1))
    counting = "".join(
        f"            on S{i}HW.det / ok_num := ok_num - 1; on_num := on_num - 1 -> Counting\n"
        f"            on S{i}HW.latent / ok_num := ok_num - 1; drift_num := drift_num + 1 -> Counting\n"
        for i in range(1, k + 1))
    wrong = ("on [drift_num >= 2 or (drift_num >= 1 and ok_num + ok_num <= on_num)]"
             " / raise DiagnosticOutput.WrongOutput -> Wrong")
    error = "on [on_num == 0] / raise DiagnosticStatus.Error -> Failed"
    return f"""\
// Sensor diagnostics voting over {k} sensor(s).
// WrongOutput: two or more sensors drift, or one drifts and the drift-free
// online sensors are no majority (2 * ok_num <= on_num).
// Error: every sensor is off.  Warning: some sensor is off.
statechart DiagnosticStatechart [
{ports}    port DiagnosticOutput: provides DiagnosticOutput
    port DiagnosticStatus: provides DiagnosticStatus
] {{
    var drift_num: integer := 0
    var ok_num: integer := {k}
    var on_num: integer := {k}
    region counting {{
        initial Counting
        state Counting {{
{counting}        }}
    }}
    region voting {{
        initial Healthy
        state Healthy {{
            {wrong}
            {error}
            on [{k} - on_num >= 1] / raise DiagnosticStatus.Warning -> Degraded
        }}
        state Degraded {{
            {wrong}
            {error}
        }}
        state Wrong {{
        }}
        state Failed {{
        }}
    }}
}}
"""


def _evaluation(sides: list) -> str:
    ports = "".join(f"    port {x}Monitor: requires Monitor\n" for x in sides)
    flags = [f"{x.lower()}_loa" for x in sides]
    variables = "".join(f"    var {f}: boolean := false\n" for f in flags)
    ss = "".join(f"            on {x}Monitor.selfsteering -> SelfSteering\n" for x in sides)
    loa = "".join(f"            on {x}Monitor.loa / {f} := true -> Operation\n"
                  for x, f in zip(sides, flags))
    return f"""\
// Loss of assist needs every side lost; self-steering needs one side.
statechart EvaluationStatechart [
{ports}    port Eval: provides Eval
] {{
{variables}    region main {{
        initial Operation
        state Operation {{
{ss}{loa}            on [{" and ".join(flags)}] -> LossOfAssist
        }}
        state SelfSteering {{
            entry / raise Eval.SS
        }}
        state LossOfAssist {{
            entry / raise Eval.SLoA
        }}
    }}
}}
"""


def _composite(sides: list, k: int) -> str:
    sensors = lambda x: [f"S{i}{x}" for i in range(1, k + 1)]  # noqa: E731
    lines = ["package epas"]
    lines += [f'import "{f}"' for f in ("interfaces.gi", "sensor.gsc", "uc.gsc", "diagnostic.gsc",
                                         "mainctrl.gsc", "evaluation.gsc")]
    lines += ["", "cascade Epas [", "    port State: provides Eval"]
    lines += [f"    port {s}Fault: requires SensorFault" for x in sides for s in sensors(x)]
    lines += [f"    port UC{x}Fault: requires UCFault" for x in sides]
    lines += ["] {"]
    for x in sides:
        lines += [f"    component {s}: SensorStatechart" for s in sensors(x)]
    lines += [f"    component Diag{x}: DiagnosticStatechart" for x in sides]
    lines += [f"    component UC{x}: UCStatechart" for x in sides]
    lines += [f"    component {x}CTRL: MainctrlStatechart" for x in sides]
    lines += ["    component Ev: EvaluationStatechart", ""]
    for x in sides:
        lines += [f"    bind {s}Fault->{s}.HWFault" for s in sensors(x)]
    lines += [f"    bind UC{x}Fault->UC{x}.HWFault" for x in sides]
    lines += ["    bind State->Ev.Eval", ""]
    for x in sides:
        lines += [f"    channel [S{i}{x}.SensorFault] -o)- [Diag{x}.S{i}HW]" for i in range(1, k + 1)]
    for x in sides:
        lines += [f"    channel [Diag{x}.DiagnosticOutput] -o)- [{x}CTRL.DiagnosticOutput]",
                  f"    channel [Diag{x}.DiagnosticStatus] -o)- [{x}CTRL.DiagnosticStatus]"]
    lines += [f"    channel [UC{x}.Fault] -o)- [{x}CTRL.UCHW]" for x in sides]
    lines += [f"    channel [{x}CTRL.Monitor] -o)- [Ev.{x}Monitor]" for x in sides]
    lines += ["", "    evaluate Ev: LossOfAssist, SelfSteering", "}", ""]
    return "\n".join(lines)


def generate_benchmark(spec: BenchmarkSpec, directory) -> Path:
    """Write a complete model directory (charts, composite, fault table)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    src = bundled_model_dir()
    for name in _VERBATIM:
        (out / name).write_text((src / name).read_text())
    sides = side_names(spec.n_uc)
    (out / "diagnostic.gsc").write_text(_diagnostic(spec.sensors_per_uc))
    (out / "evaluation.gsc").write_text(_evaluation(sides))
    (out / "epas.gcd").write_text(_composite(sides, spec.sensors_per_uc))
    return out


def state_space_estimate(model: Model) -> int:
    """Product over instances of the product of region state counts."""
    total = 1
    for inst in model.composite.instances:
        for region in model.library[inst.statechart].regions:
            total *= len(region.states)
    return total


@dataclass
class BenchmarkRow:
    spec: BenchmarkSpec
    instances: int
    sensors: int
    state_space: int
    ttf_seconds: float  # median wall time
    conditional_seconds: float
    ttf_runs: tuple = ()
    conditional_runs: tuple = ()

    def to_dict(self) -> dict:
        return {"spec": str(self.spec), "n_uc": self.spec.n_uc,
                "sensors_per_uc": self.spec.sensors_per_uc, "instances": self.instances,
                "sensors": self.sensors, "state_space": f"{self.state_space:.1e}",
                "ttf_s": round(self.ttf_seconds, 1),
                "conditional_s": round(self.conditional_seconds, 1)}


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def run_benchmark(specs: Sequence[BenchmarkSpec], n: int = 10_000, seed: int = 0,
                  repeats: int = 5, workers: int = 1, directory: Optional[Path] = None,
                  mode: str = "SelfSteering") -> list:
    """Median wall time of the lifetime and conditional analyses per spec.

    Every repetition starts from a freshly built engine, so no memoised
    execution carries over between runs.
    """
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        base = Path(directory) if directory is not None else Path(tmp)
        for spec in specs:
            model = load_model(generate_benchmark(spec, base / str(spec)))
            table = load_fault_table(model.fault_table_path(), model.composite)

            def ttf():
                engine = Engine(model.composite, model.library)
                summarize_lifetime(run_batch(engine, table, seed, n, workers=workers))

            def conditional():
                engine = Engine(model.composite, model.library)
                conditional_lifetime(engine, table, seed, mode, n, workers=workers).summary()

            t_runs = tuple(_timed(ttf) for _ in range(repeats))
            c_runs = tuple(_timed(conditional) for _ in range(repeats))
            rows.append(BenchmarkRow(spec, len(model.composite.instances), spec.sensors,
                                     state_space_estimate(model), statistics.median(t_runs),
                                     statistics.median(c_runs), t_runs, c_runs))
    return rows


def format_table(rows: Sequence[BenchmarkRow]) -> str:
    head = f"{'spec':>6} {'instances':>9} {'sensors':>7} {'state space':>11} {'ttf [s]':>8} {'cond [s]':>8}"
    lines = [head]
    for r in rows:
        lines.append(f"{str(r.spec):>6} {r.instances:>9} {r.sensors:>7} {r.state_space:>11.1e} "
                     f"{r.ttf_seconds:>8.1f} {r.conditional_seconds:>8.1f}")
    return "\n".join(lines)
