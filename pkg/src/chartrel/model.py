"""In-memory model of interfaces, statecharts and cascade composites.

Everything here is plain frozen data.  Source positions are carried for
diagnostics but excluded from equality, so a parsed model and its
pretty-printed-and-reparsed twin compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .expr import BOOLEAN, INTEGER, SCALAR_TYPES, Expr, ExprTypeError, type_of

IN, OUT = "in", "out"
PROVIDES, REQUIRES = "provides", "requires"

#: Pseudo instance name used for system-port sources and sinks in routing tables.
SYSTEM = "<system>"

Pos = Optional[tuple]  # (line, column), 1-based


def _pos() -> Pos:
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Diagnostic:
    message: str
    where: str = ""
    line: Optional[int] = None
    column: Optional[int] = None
    severity: str = "error"
    path: Optional[str] = None

    @property
    def positioned(self) -> bool:
        return self.line is not None and self.column is not None

    def __str__(self) -> str:
        loc = self.path or ""
        if self.positioned:
            loc += f":{self.line}:{self.column}"
        prefix = f"{loc}: " if loc else ""
        where = f" [{self.where}]" if self.where else ""
        return f"{prefix}{self.severity}: {self.message}{where}"


def _diag(message: str, where: str, pos: Pos) -> Diagnostic:
    line, col = pos if pos else (None, None)
    return Diagnostic(message, where, line, col)


# --------------------------------------------------------------------------
# interfaces and ports

@dataclass(frozen=True)
class EventDecl:
    name: str
    direction: str  # IN or OUT
    parameters: tuple = ()  # ((name, type), ...)
    pos: Pos = _pos()


@dataclass(frozen=True)
class InterfaceDef:
    name: str
    events: tuple = ()
    pos: Pos = _pos()

    def event(self, name: str) -> Optional[EventDecl]:
        for ev in self.events:
            if ev.name == name:
                return ev
        return None


@dataclass(frozen=True)
class PortDef:
    name: str
    interface: InterfaceDef
    mode: str  # PROVIDES or REQUIRES
    pos: Pos = _pos()

    def direction(self, event: str) -> Optional[str]:
        """Effective direction of ``event`` on this port, or None if undeclared."""
        ev = self.interface.event(event)
        if ev is None:
            return None
        if self.mode == PROVIDES:
            return ev.direction
        return IN if ev.direction == OUT else OUT

    def events_in(self, direction: str) -> list[str]:
        return [ev.name for ev in self.interface.events if self.direction(ev.name) == direction]


# --------------------------------------------------------------------------
# statecharts

@dataclass(frozen=True)
class RaiseEvent:
    port: str
    event: str
    arguments: tuple = ()  # of Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Assign:
    variable: str
    value: Expr
    pos: Pos = _pos()


Action = Union[RaiseEvent, Assign]


@dataclass(frozen=True)
class TransitionDef:
    target: str
    trigger: Optional[tuple] = None  # (port, event)
    guard: Optional[Expr] = None
    actions: tuple = ()
    pos: Pos = _pos()


@dataclass(frozen=True)
class StateDef:
    name: str
    entry_actions: tuple = ()
    transitions: tuple = ()  # document order == priority order
    pos: Pos = _pos()

    @property
    def absorbing(self) -> bool:
        return not self.transitions


@dataclass(frozen=True)
class Region:
    name: str
    states: tuple = ()
    initial: Optional[str] = None
    pos: Pos = _pos()

    def state(self, name: str) -> Optional[StateDef]:
        for st in self.states:
            if st.name == name:
                return st
        return None


@dataclass(frozen=True)
class VariableDef:
    name: str
    type: str
    initial: Union[int, bool]
    pos: Pos = _pos()


@dataclass(frozen=True)
class StatechartDef:
    name: str
    ports: tuple = ()
    variables: tuple = ()
    regions: tuple = ()
    pos: Pos = _pos()

    def port(self, name: str) -> Optional[PortDef]:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def region(self, name: str) -> Optional[Region]:
        for r in self.regions:
            if r.name == name:
                return r
        return None

    def state_names(self) -> set[str]:
        return {st.name for r in self.regions for st in r.states}


# --------------------------------------------------------------------------
# cascade composites

@dataclass(frozen=True)
class Instance:
    name: str
    statechart: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Binding:
    system_port: str
    instance: str
    port: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Channel:
    source: tuple  # (instance, port)
    target: tuple
    pos: Pos = _pos()


@dataclass(frozen=True)
class Evaluation:
    """Designates the instance whose states decide system failure."""
    instance: str
    failure_states: tuple
    pos: Pos = _pos()


@dataclass(frozen=True)
class CompositeDef:
    name: str
    system_ports: tuple = ()
    instances: tuple = ()
    bindings: tuple = ()
    channels: tuple = ()
    execution_list: Optional[tuple] = None
    evaluation: Optional[Evaluation] = None
    imports: tuple = ()
    pos: Pos = _pos()

    def instance(self, name: str) -> Optional[Instance]:
        for inst in self.instances:
            if inst.name == name:
                return inst
        return None

    def system_port(self, name: str) -> Optional[PortDef]:
        for p in self.system_ports:
            if p.name == name:
                return p
        return None

    def order(self) -> tuple:
        """Instance names in execution order."""
        if self.execution_list is not None:
            return tuple(self.execution_list)
        return tuple(inst.name for inst in self.instances)


Library = Mapping[str, StatechartDef]


# --------------------------------------------------------------------------
# validation

def _dupes(names: Iterable[str]) -> list[str]:
    seen, dup = set(), []
    for n in names:
        if n in seen and n not in dup:
            dup.append(n)
        seen.add(n)
    return dup


def validate_interfaces(interfaces: Sequence[InterfaceDef]) -> list[Diagnostic]:
    out = []
    for name in _dupes(i.name for i in interfaces):
        pos = [i.pos for i in interfaces if i.name == name][-1]
        out.append(_diag(f"duplicate interface '{name}'", f"interface {name}", pos))
    for iface in interfaces:
        for ev_name in _dupes(e.name for e in iface.events):
            pos = [e.pos for e in iface.events if e.name == ev_name][-1]
            out.append(_diag(f"duplicate event '{ev_name}'", f"interface {iface.name}", pos))
        for ev in iface.events:
            for p in _dupes(n for n, _ in ev.parameters):
                out.append(_diag(f"duplicate parameter '{p}'", f"event {iface.name}.{ev.name}", ev.pos))
            for pname, ptype in ev.parameters:
                if ptype not in SCALAR_TYPES:
                    out.append(_diag(f"parameter '{pname}' has unknown type '{ptype}'",
                                     f"event {iface.name}.{ev.name}", ev.pos))
    return out


def validate_statechart(chart: StatechartDef) -> list[Diagnostic]:
    """Check the structural and typing invariants of one statechart.

    Returns an empty list when the chart is well formed.  Diagnostics are data;
    this never raises on a malformed chart.
    """
    out: list[Diagnostic] = []
    where = f"statechart {chart.name}"

    for name in _dupes(p.name for p in chart.ports):
        out.append(_diag(f"duplicate port '{name}'", where, chart.pos))
    for name in _dupes(v.name for v in chart.variables):
        out.append(_diag(f"duplicate variable '{name}'", where, chart.pos))
    var_types = {}
    for v in chart.variables:
        var_types[v.name] = v.type
        if v.type not in SCALAR_TYPES:
            out.append(_diag(f"variable '{v.name}' has unknown type '{v.type}'", where, v.pos))
        elif (v.type == BOOLEAN) != isinstance(v.initial, bool):
            out.append(_diag(f"initial value of '{v.name}' is not {v.type}", where, v.pos))

    if not chart.regions:
        out.append(_diag("statechart has no region", where, chart.pos))
    for name in _dupes(r.name for r in chart.regions):
        out.append(_diag(f"duplicate region '{name}'", where, chart.pos))

    for region in chart.regions:
        rwhere = f"{where}/region {region.name}"
        names = [s.name for s in region.states]
        if not region.states or region.initial is None:
            out.append(_diag("region has no initial state", rwhere, region.pos))
        elif region.initial not in names:
            out.append(_diag(f"unresolved initial state '{region.initial}'", rwhere, region.pos))
        for name in _dupes(names):
            out.append(_diag(f"duplicate state '{name}'", rwhere, region.pos))
        for state in region.states:
            swhere = f"{rwhere}/state {state.name}"
            for action in state.entry_actions:
                out.extend(_check_action(chart, action, var_types, swhere))
            for i, tr in enumerate(state.transitions):
                out.extend(_check_transition(chart, tr, names, var_types, f"{swhere}/transition {i + 1}"))
    return out


def _check_transition(chart, tr: TransitionDef, state_names, var_types, where) -> list[Diagnostic]:
    out = []
    env = dict(var_types)
    if tr.trigger is not None:
        port_name, ev_name = tr.trigger
        port = chart.port(port_name)
        if port is None:
            out.append(_diag(f"unresolved port '{port_name}'", where, tr.pos))
        elif port.interface.event(ev_name) is None:
            out.append(_diag(f"unresolved event '{port_name}.{ev_name}'", where, tr.pos))
        elif port.direction(ev_name) != IN:
            out.append(_diag(f"event '{port_name}.{ev_name}' is not an input", where, tr.pos))
        else:
            for pname, ptype in port.interface.event(ev_name).parameters:
                env[pname] = ptype
    if tr.guard is not None:
        try:
            t = type_of(tr.guard, env)
        except ExprTypeError as exc:
            out.append(_diag(f"guard: {exc}", where, tr.pos))
        else:
            if t != BOOLEAN:
                out.append(_diag("guard is not boolean", where, tr.pos))
    for action in tr.actions:
        out.extend(_check_action(chart, action, env, where))
    if tr.target not in state_names:
        out.append(_diag(f"unresolved target state '{tr.target}'", where, tr.pos))
    return out


def _check_action(chart, action, env, where) -> list[Diagnostic]:
    pos = action.pos
    if isinstance(action, Assign):
        var = next((v for v in chart.variables if v.name == action.variable), None)
        if var is None:
            return [_diag(f"unresolved variable '{action.variable}'", where, pos)]
        try:
            t = type_of(action.value, env)
        except ExprTypeError as exc:
            return [_diag(f"assignment: {exc}", where, pos)]
        if t != var.type:
            return [_diag(f"cannot assign {t} to {var.type} '{var.name}'", where, pos)]
        return []
    port = chart.port(action.port)
    if port is None:
        return [_diag(f"unresolved port '{action.port}'", where, pos)]
    ev = port.interface.event(action.event)
    if ev is None:
        return [_diag(f"unresolved event '{action.port}.{action.event}'", where, pos)]
    if port.direction(action.event) != OUT:
        return [_diag(f"cannot raise input event '{action.port}.{action.event}'", where, pos)]
    if len(action.arguments) != len(ev.parameters):
        return [_diag(f"event '{action.port}.{action.event}' takes {len(ev.parameters)} "
                      f"argument(s), got {len(action.arguments)}", where, pos)]
    out = []
    for arg, (pname, ptype) in zip(action.arguments, ev.parameters):
        try:
            t = type_of(arg, env)
        except ExprTypeError as exc:
            out.append(_diag(f"argument '{pname}': {exc}", where, pos))
            continue
        if t != ptype:
            out.append(_diag(f"argument '{pname}' must be {ptype}", where, pos))
    return out


def _endpoint(composite, library, inst_name, port_name, where, pos, out):
    inst = composite.instance(inst_name)
    if inst is None:
        out.append(_diag(f"unresolved instance '{inst_name}'", where, pos))
        return None
    chart = library.get(inst.statechart)
    if chart is None:
        return None  # reported once per instance
    port = chart.port(port_name)
    if port is None:
        out.append(_diag(f"unresolved port '{inst_name}.{port_name}'", where, pos))
    return port


def validate_composite(composite: CompositeDef, library: Library) -> list[Diagnostic]:
    """Check instance types, bindings, channels, execution list and evaluation."""
    out: list[Diagnostic] = []
    where = f"cascade {composite.name}"

    for name in _dupes(i.name for i in composite.instances):
        out.append(_diag(f"duplicate instance '{name}'", where, composite.pos))
    for name in _dupes(p.name for p in composite.system_ports):
        out.append(_diag(f"duplicate system port '{name}'", where, composite.pos))
    for inst in composite.instances:
        if inst.statechart not in library:
            out.append(_diag(f"unknown statechart type '{inst.statechart}'",
                             f"{where}/component {inst.name}", inst.pos))

    bound: dict[str, int] = {}
    for b in composite.bindings:
        bwhere = f"{where}/bind {b.system_port}"
        sys_port = composite.system_port(b.system_port)
        if sys_port is None:
            out.append(_diag(f"unresolved system port '{b.system_port}'", bwhere, b.pos))
        else:
            bound[b.system_port] = bound.get(b.system_port, 0) + 1
        port = _endpoint(composite, library, b.instance, b.port, bwhere, b.pos, out)
        if sys_port is None or port is None:
            continue
        if sys_port.interface.name != port.interface.name:
            out.append(_diag(f"interface mismatch: '{b.system_port}' is {sys_port.interface.name}, "
                             f"'{b.instance}.{b.port}' is {port.interface.name}", bwhere, b.pos))
        elif sys_port.mode != port.mode:
            out.append(_diag(f"mode mismatch: '{b.system_port}' {sys_port.mode}, "
                             f"'{b.instance}.{b.port}' {port.mode}", bwhere, b.pos))
    for p in composite.system_ports:
        n = bound.get(p.name, 0)
        if n != 1:
            msg = "is not bound" if n == 0 else f"is bound {n} times"
            out.append(_diag(f"system port '{p.name}' {msg}", where, p.pos))

    for ch in composite.channels:
        cwhere = f"{where}/channel {ch.source[0]}.{ch.source[1]}"
        a = _endpoint(composite, library, *ch.source, cwhere, ch.pos, out)
        b = _endpoint(composite, library, *ch.target, cwhere, ch.pos, out)
        if a is None or b is None:
            continue
        if a.interface.name != b.interface.name:
            out.append(_diag(f"interface mismatch: {a.interface.name} vs {b.interface.name}",
                             cwhere, ch.pos))
        elif {a.mode, b.mode} != {PROVIDES, REQUIRES}:
            out.append(_diag("channel must join provided and required", cwhere, ch.pos))

    if composite.execution_list is not None:
        for name in composite.execution_list:
            if composite.instance(name) is None:
                out.append(_diag(f"unresolved instance '{name}' in execution list", where, composite.pos))

    ev = composite.evaluation
    if ev is not None:
        inst = composite.instance(ev.instance)
        if inst is None:
            out.append(_diag(f"unresolved evaluation instance '{ev.instance}'", where, ev.pos))
        elif inst.statechart in library:
            states = library[inst.statechart].state_names()
            for st in ev.failure_states:
                if st not in states:
                    out.append(_diag(f"unresolved failure state '{ev.instance}.{st}'", where, ev.pos))
    return out


# --------------------------------------------------------------------------
# routing

class UnvalidatedModelError(ValueError):
    pass


def build_routing_table(composite: CompositeDef, library: Library) -> dict:
    """Map each (source instance, port, event) to a sorted tuple of receivers.

    Sources cover every out-direction event of every instance port plus the
    in-direction events of system ports (keyed by ``SYSTEM``); receivers of
    instance outputs bound to system ports appear as ``(SYSTEM, port, event)``.
    """
    diags = validate_composite(composite, library)
    if diags:
        raise UnvalidatedModelError("composite does not validate: " + "; ".join(map(str, diags)))

    table: dict = {}
    for inst in composite.instances:
        for port in library[inst.statechart].ports:
            for ev in port.events_in(OUT):
                table[(inst.name, port.name, ev)] = set()
    for sp in composite.system_ports:
        for ev in sp.events_in(IN):
            table[(SYSTEM, sp.name, ev)] = set()

    def port_of(inst_name, port_name):
        return library[composite.instance(inst_name).statechart].port(port_name)

    for ch in composite.channels:
        ends = [(ch.source, port_of(*ch.source)), (ch.target, port_of(*ch.target))]
        for ev in ends[0][1].interface.events:
            for (src, sport), (dst, _) in (ends, ends[::-1]):
                if sport.direction(ev.name) == OUT:
                    table[(src[0], src[1], ev.name)].add((dst[0], dst[1], ev.name))
    for b in composite.bindings:
        sp = composite.system_port(b.system_port)
        for ev in sp.interface.events:
            if sp.direction(ev.name) == IN:
                table[(SYSTEM, sp.name, ev.name)].add((b.instance, b.port, ev.name))
            else:
                table[(b.instance, b.port, ev.name)].add((SYSTEM, sp.name, ev.name))
    return {k: tuple(sorted(v)) for k, v in sorted(table.items())}
