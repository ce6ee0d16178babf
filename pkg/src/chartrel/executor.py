"""Lockstep execution of a cascade composite.

One call to :meth:`Engine.execute_cycle` runs every instance once, in
execution order.  Signals raised by an instance are routed immediately, so
instances later in the order see them during the same cycle; earlier
instances find them in their input buffer on the next cycle.  Inputs are
sampled, not queued: a buffer holds at most one signal per (port, event).

Within its turn an instance runs to completion.  Each micro-step visits the
regions in declaration order and fires the first enabled transition of each
active state (document order is priority).  A triggered transition consumes
its event for that region, so the same signal cannot fire twice in a region
during one cycle.  The loop ends when a micro-step fires nothing.

Execution is a pure function of (SystemState, external events), which lets
the engine memoise whole cycles and single-instance steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Optional

from .expr import compile_expr
from .model import (SYSTEM, Assign, CompositeDef, StatechartDef, UnvalidatedModelError,
                    build_routing_table, validate_statechart)

MAX_MICROSTEPS = 1000


class LivelockError(RuntimeError):
    pass


class UnknownPortError(KeyError):
    pass


@dataclass(frozen=True)
class EventInstance:
    port: str
    event: str
    arguments: tuple = ()

    def __str__(self) -> str:
        args = f"({', '.join(map(str, self.arguments))})" if self.arguments else ""
        return f"{self.port}.{self.event}{args}"


class ComponentState(NamedTuple):
    active: tuple  # one state name per region
    variables: tuple  # values in declaration order


class SystemState(NamedTuple):
    """Immutable and hashable; plain tuples keep hashing cheap for memo keys."""
    components: tuple  # ComponentState per instance, instantiation order
    pending: tuple  # per instance: sorted ((port, event), args) pairs

    def is_quiet(self) -> bool:
        return not any(self.pending)


@dataclass(frozen=True)
class FiredTransition:
    instance: str
    source: str
    target: str
    raised: tuple = ()


@dataclass(frozen=True)
class CycleResult:
    system_outputs: tuple = ()
    fired_transitions: tuple = ()


class _Transition:
    __slots__ = ("trigger", "params", "guard", "actions", "target")

    def __init__(self, tr, chart: StatechartDef):
        self.trigger = tr.trigger
        self.params = ()
        if tr.trigger is not None:
            port = chart.port(tr.trigger[0])
            self.params = tuple(n for n, _ in port.interface.event(tr.trigger[1]).parameters)
        self.guard = compile_expr(tr.guard) if tr.guard is not None else None
        self.actions = _compile_actions(tr.actions)
        self.target = tr.target


def _compile_actions(actions) -> tuple:
    out = []
    for a in actions:
        if isinstance(a, Assign):
            out.append((True, a.variable, compile_expr(a.value)))
        else:
            out.append((False, (a.port, a.event), tuple(compile_expr(x) for x in a.arguments)))
    return tuple(out)


class _Chart:
    """A statechart definition prepared for fast interpretation."""

    def __init__(self, chart: StatechartDef):
        self.name = chart.name
        self.var_names = tuple(v.name for v in chart.variables)
        self.regions = []
        self.eventless = []
        for region in chart.regions:
            states = {}
            for st in region.states:
                states[st.name] = (_compile_actions(st.entry_actions),
                                   tuple(_Transition(t, chart) for t in st.transitions))
            self.regions.append(states)
            self.eventless.append({st.name for st in region.states
                                   if any(t.trigger is None for t in st.transitions)})
        self.initial = ComponentState(tuple(r.initial for r in chart.regions),
                                      tuple(v.initial for v in chart.variables))
        self.memo: dict = {}  # (ComponentState, sorted inputs) -> step result
        self.idle: set = set()  # states that are fixed points without input

    def run(self, comp: ComponentState, inputs: dict, instance: str):
        if not inputs and not any(a in ev for a, ev in zip(comp.active, self.eventless)):
            return comp, (), ()
        env = dict(zip(self.var_names, comp.variables))
        active = list(comp.active)
        consumed = [set() for _ in self.regions]
        outputs: dict = {}
        fired = []
        steps = 0
        while True:
            progressed = False
            for ri, states in enumerate(self.regions):
                _, transitions = states[active[ri]]
                for tr in transitions:
                    scope = env
                    if tr.trigger is not None:
                        if tr.trigger not in inputs or tr.trigger in consumed[ri]:
                            continue
                        if tr.params:
                            scope = {**env, **dict(zip(tr.params, inputs[tr.trigger]))}
                    if tr.guard is not None and not tr.guard(scope):
                        continue
                    raised = []
                    self._do(tr.actions, env, scope, outputs, raised)
                    entry, _ = states[tr.target]
                    self._do(entry, env, env, outputs, raised)
                    if tr.trigger is not None:
                        consumed[ri].add(tr.trigger)
                    fired.append(FiredTransition(instance, active[ri], tr.target, tuple(raised)))
                    active[ri] = tr.target
                    progressed = True
                    break
            if not progressed:
                break
            steps += 1
            if steps >= MAX_MICROSTEPS:
                raise LivelockError(f"instance '{instance}' ({self.name}) did not reach quiescence "
                                    f"within {MAX_MICROSTEPS} micro-steps")
        new = ComponentState(tuple(active), tuple(env[n] for n in self.var_names))
        return new, tuple(outputs.items()), tuple(fired)

    @staticmethod
    def _do(actions, env, scope, outputs, raised):
        for is_assign, key, fn in actions:
            if is_assign:
                value = fn(scope)
                env[key] = value
                if scope is not env:
                    scope[key] = value
            else:
                outputs.pop(key, None)  # re-raising moves the signal to the end
                outputs[key] = tuple(f(scope) for f in fn)
                raised.append(f"{key[0]}.{key[1]}")


class Engine:
    """Interpreter for one validated cascade composite.

    Parameters
    ----------
    composite, library
        The composite and the statechart definitions its instances refer to.
    cache_size
        Maximum number of memoised cycles; the memo is dropped when full.
        Zero disables whole-cycle memoisation.
    """

    def __init__(self, composite: CompositeDef, library, cache_size: int = 1_000_000):
        for name in {i.statechart for i in composite.instances}:
            if name in library and validate_statechart(library[name]):
                raise UnvalidatedModelError(f"statechart '{name}' does not validate")
        self.composite = composite
        self.library = dict(library)
        self.routing = build_routing_table(composite, library)
        self.names = tuple(i.name for i in composite.instances)
        self.index = {n: k for k, n in enumerate(self.names)}
        self.order = tuple(self.index[n] for n in composite.order())
        charts = {name: _Chart(library[name]) for name in {i.statechart for i in composite.instances}}
        self.charts = tuple(charts[i.statechart] for i in composite.instances)
        # per-instance routes keyed by (port, event): list of (target index or None, port, event)
        self._routes = [dict() for _ in self.names]
        for (src, port, event), receivers in self.routing.items():
            if src == SYSTEM:
                continue
            self._routes[self.index[src]][(port, event)] = tuple(
                (None if t == SYSTEM else self.index[t], tp, te) for t, tp, te in receivers)
        self._cycle_memo: dict = {}
        self.cache_size = cache_size
        ev = composite.evaluation
        self._eval = (self.index[ev.instance], frozenset(ev.failure_states)) if ev else None

    def __reduce__(self):
        return (Engine, (self.composite, self.library, self.cache_size))

    # ------------------------------------------------------------------
    def init(self) -> SystemState:
        """Every instance in its initial states, variables at declared values, buffers empty."""
        return SystemState(tuple(c.initial for c in self.charts), tuple(() for _ in self.names))

    def execute_cycle(self, state: SystemState,
                      external: Iterable[EventInstance] = ()) -> tuple:
        """Run one lockstep cycle; returns ``(next_state, CycleResult)``."""
        external = tuple(external)
        key = (state, external)
        hit = self._cycle_memo.get(key)
        if hit is not None:
            return hit
        result = self._cycle(state, external)
        if self.cache_size:
            if len(self._cycle_memo) >= self.cache_size:
                self._cycle_memo.clear()
            self._cycle_memo[key] = result
        return result

    def _cycle(self, state: SystemState, external: tuple):
        buffers = {k: dict(p) for k, p in enumerate(state.pending) if p}
        for ev in external:
            receivers = self.routing.get((SYSTEM, ev.port, ev.event))
            if receivers is None:
                raise UnknownPortError(f"no system input '{ev.port}.{ev.event}'")
            sp = self.composite.system_port(ev.port)
            decl = sp.interface.event(ev.event)
            if len(ev.arguments) != len(decl.parameters):
                raise ValueError(f"event '{ev}' expects {len(decl.parameters)} argument(s)")
            for inst, port, event in receivers:
                buf = buffers.setdefault(self.index[inst], {})
                buf.pop((port, event), None)
                buf[(port, event)] = ev.arguments
        comps = list(state.components)
        outputs: dict = {}
        fired = []
        for k in self.order:
            inputs = buffers.pop(k, None)
            chart = self.charts[k]
            comp = comps[k]
            if inputs is None:
                if comp in chart.idle:
                    continue
                inputs = {}
            mkey = (comp, tuple(sorted(inputs.items())))
            step = chart.memo.get(mkey)
            if step is None:
                new, raised, trans = chart.run(comp, inputs, self.names[k])
                step = chart.memo[mkey] = (new, raised,
                                           tuple((t.source, t.target, t.raised) for t in trans))
                if not inputs and not raised and not trans and new == comp:
                    chart.idle.add(comp)
            new, raised, trans = step
            comps[k] = new
            if trans:
                name = self.names[k]
                fired.extend(FiredTransition(name, *t) for t in trans)
            if raised:
                routes = self._routes[k]
                for pe, args in raised:
                    for target, tport, tevent in routes.get(pe, ()):
                        buf = outputs if target is None else buffers.setdefault(target, {})
                        buf.pop((tport, tevent), None)
                        buf[(tport, tevent)] = args
        pending = [()] * len(comps)
        for k, b in buffers.items():
            if b:
                pending[k] = tuple(sorted(b.items()))
        nxt = SystemState(tuple(comps), tuple(pending))
        sys_out = tuple(EventInstance(p, e, a) for (p, e), a in outputs.items())
        return nxt, CycleResult(sys_out, tuple(fired))

    # ------------------------------------------------------------------
    def is_absorbing_failure(self, state: SystemState) -> Optional[str]:
        """Name of the failure state the evaluation instance sits in, if any."""
        if self._eval is None:
            raise ValueError(f"composite '{self.composite.name}' designates no evaluation instance")
        k, failures = self._eval
        for st in state.components[k].active:
            if st in failures:
                return st
        return None

    def describe(self, state: SystemState) -> dict:
        """Human-readable view: instance -> active states and variables."""
        out = {}
        for name, chart, comp in zip(self.names, self.charts, state.components):
            entry = {"states": list(comp.active)}
            if chart.var_names:
                entry["variables"] = dict(zip(chart.var_names, comp.variables))
            out[name] = entry
        return out

    def variables(self, state: SystemState, instance: str) -> dict:
        k = self.index[instance]
        return dict(zip(self.charts[k].var_names, state.components[k].variables))

    def active(self, state: SystemState, instance: str) -> tuple:
        return state.components[self.index[instance]].active


def write_trace(fp: IO[str], cycle: int, result: CycleResult) -> None:
    """Append one JSON line per fired transition of ``result``."""
    for t in result.fired_transitions:
        fp.write(json.dumps({"cycle": cycle, "instance": t.instance, "from": t.source,
                             "to": t.target, "raised": list(t.raised)}) + "\n")
