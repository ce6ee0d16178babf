"""Reader and canonical printer for the textual model language.

Three kinds of source file share one lexer:

* ``.gi``  interface declarations (``interface SensorFault { out event det }``)
* ``.gsc`` statecharts
* ``.gcd`` cascade composites, in the ``component`` / ``bind`` / ``channel``
  form, plus ``execute`` (execution list) and ``evaluate`` (failure states).

The first syntax error aborts the unit with a positioned ``ParseError``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .expr import BOOLEAN, INTEGER, Binary, Const, Expr, Ref, Unary, format_expr
from .model import (IN, OUT, PROVIDES, REQUIRES, Assign, Binding, Channel, CompositeDef,
                    Diagnostic, EventDecl, Evaluation, Instance, InterfaceDef, PortDef,
                    RaiseEvent, Region, StatechartDef, StateDef, TransitionDef, VariableDef)

INTERFACES, STATECHART, COMPOSITE, FAULT_TABLE = "interfaces", "statechart", "composite", "fault_table"

_EXT_KIND = {".gi": INTERFACES, ".gsc": STATECHART, ".gcd": COMPOSITE}
_KEYWORD_KIND = {"interface": INTERFACES, "statechart": STATECHART, "cascade": COMPOSITE}

KEYWORDS = frozenset("""
    package import interface in out event statechart port provides requires var
    integer boolean true false region initial state entry on raise cascade
    component bind channel execute evaluate and or not
""".split())


class ParseError(Exception):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class SourceUnit:
    path: str
    kind: str
    text: str

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "SourceUnit":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        return cls(str(path), detect_kind(str(path), text), text)

    @classmethod
    def from_text(cls, text: str, kind: Optional[str] = None, path: str = "<string>") -> "SourceUnit":
        return cls(path, kind or detect_kind(path, text), text)


def detect_kind(path: str, text: str) -> str:
    if path.endswith(".faults.csv"):
        return FAULT_TABLE
    for tok in tokenize(text, path):
        if tok.kind == "ident" and tok.value in _KEYWORD_KIND:
            return _KEYWORD_KIND[tok.value]
    return _EXT_KIND.get(Path(path).suffix, INTERFACES)


# --------------------------------------------------------------------------
# lexer

@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, string, op, eof
    value: str
    line: int
    column: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<string>"[^"\n]*")
  | (?P<op>-o\)-|->|:=|==|!=|<=|>=|[-+<>{}\[\]():;,./])
""", re.VERBOSE)


def tokenize(text: str, path: str = "<string>") -> list[Token]:
    tokens, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(Diagnostic(f"unexpected character {text[pos]!r}", line=line,
                                        column=col, path=path))
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# recursive-descent parser

class _Parser:
    def __init__(self, unit: SourceUnit):
        self.path = unit.path
        self.toks = tokenize(unit.text, unit.path)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise ParseError(Diagnostic(message, line=tok.line, column=tok.column, path=self.path))

    def at(self, value: str) -> bool:
        t = self.tok
        return t.kind in ("ident", "op") and t.value == value

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> Token:
        if not self.at(value):
            found = self.tok.value or "end of file"
            self.error(f"expected '{value}', found '{found}'")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self, what: str = "identifier") -> tuple:
        t = self.tok
        if t.kind != "ident" or t.value in KEYWORDS:
            self.error(f"expected {what}, found '{t.value or 'end of file'}'")
        self.i += 1
        return t.value, (t.line, t.column)

    def header(self) -> tuple:
        if self.accept("package"):
            self.ident("package name")
        imports = []
        while self.accept("import"):
            t = self.tok
            if t.kind != "string":
                self.error("expected import path string")
            imports.append(t.value[1:-1])
            self.i += 1
        return tuple(imports)

    def end(self):
        if self.tok.kind != "eof":
            self.error(f"unexpected '{self.tok.value}'")

    # interfaces
    def interfaces(self) -> list[InterfaceDef]:
        self.header()
        out, seen = [], set()
        while self.at("interface"):
            start = self.tok
            self.i += 1
            name, pos = self.ident("interface name")
            if name in seen:
                self.error(f"duplicate interface '{name}'", start)
            seen.add(name)
            self.expect("{")
            events, names = [], set()
            while self.at("in") or self.at("out"):
                direction = self.tok.value
                self.i += 1
                self.expect("event")
                ev_tok = self.tok
                ev_name, ev_pos = self.ident("event name")
                if ev_name in names:
                    self.error(f"duplicate event '{ev_name}'", ev_tok)
                names.add(ev_name)
                params = []
                if self.accept("("):
                    while True:
                        p_tok = self.tok
                        pname, _ = self.ident("parameter name")
                        if pname in (n for n, _ in params):
                            self.error(f"duplicate parameter '{pname}'", p_tok)
                        self.expect(":")
                        params.append((pname, self.scalar_type()))
                        if not self.accept(","):
                            break
                    self.expect(")")
                events.append(EventDecl(ev_name, IN if direction == "in" else OUT, tuple(params), ev_pos))
            self.expect("}")
            out.append(InterfaceDef(name, tuple(events), pos))
        self.end()
        return out

    def scalar_type(self) -> str:
        for t in (INTEGER, BOOLEAN):
            if self.accept(t):
                return t
        self.error("expected 'integer' or 'boolean'")

    def port_decls(self, interfaces: Mapping[str, InterfaceDef]) -> tuple:
        ports = []
        if self.accept("["):
            while self.at("port"):
                self.i += 1
                name, pos = self.ident("port name")
                if any(p.name == name for p in ports):
                    self.error(f"duplicate port '{name}'", self.toks[self.i - 1])
                self.expect(":")
                if self.accept("provides"):
                    mode = PROVIDES
                elif self.accept("requires"):
                    mode = REQUIRES
                else:
                    self.error("expected 'provides' or 'requires'")
                i_tok = self.tok
                iname, _ = self.ident("interface name")
                if iname not in interfaces:
                    self.error(f"unresolved interface '{iname}'", i_tok)
                ports.append(PortDef(name, interfaces[iname], mode, pos))
            self.expect("]")
        return tuple(ports)

    # statecharts
    def statechart(self, interfaces: Mapping[str, InterfaceDef]) -> StatechartDef:
        self.header()
        self.expect("statechart")
        name, pos = self.ident("statechart name")
        ports = self.port_decls(interfaces)
        self.expect("{")
        variables = []
        while self.at("var"):
            self.i += 1
            vname, vpos = self.ident("variable name")
            self.expect(":")
            vtype = self.scalar_type()
            init: Union[int, bool] = False if vtype == BOOLEAN else 0
            if self.accept(":="):
                init = self.literal()
            variables.append(VariableDef(vname, vtype, init, vpos))
        regions = []
        while self.at("region"):
            regions.append(self.region())
        self.expect("}")
        self.end()
        return StatechartDef(name, ports, tuple(variables), tuple(regions), pos)

    def literal(self):
        if self.accept("true"):
            return True
        if self.accept("false"):
            return False
        neg = self.accept("-")
        t = self.tok
        if t.kind != "int":
            self.error("expected literal")
        self.i += 1
        return -int(t.value) if neg else int(t.value)

    def region(self) -> Region:
        self.expect("region")
        name, pos = self.ident("region name")
        self.expect("{")
        initial = None
        if self.accept("initial"):
            initial, _ = self.ident("state name")
        states = []
        while self.at("state"):
            self.i += 1
            sname, spos = self.ident("state name")
            self.expect("{")
            entry = ()
            if self.accept("entry"):
                self.expect("/")
                entry = self.actions()
            transitions = []
            while self.at("on"):
                transitions.append(self.transition())
            self.expect("}")
            states.append(StateDef(sname, entry, tuple(transitions), spos))
        self.expect("}")
        return Region(name, tuple(states), initial, pos)

    def transition(self) -> TransitionDef:
        on = self.expect("on")
        trigger = guard = None
        actions = ()
        if self.tok.kind == "ident" and self.tok.value not in KEYWORDS:
            port, _ = self.ident("port name")
            self.expect(".")
            event, _ = self.ident("event name")
            trigger = (port, event)
        if self.accept("["):
            guard = self.expr()
            self.expect("]")
        if self.accept("/"):
            actions = self.actions()
        self.expect("->")
        target, _ = self.ident("target state")
        return TransitionDef(target, trigger, guard, actions, (on.line, on.column))

    def actions(self) -> tuple:
        acts = [self.action()]
        while self.accept(";"):
            acts.append(self.action())
        return tuple(acts)

    def action(self):
        t = self.tok
        pos = (t.line, t.column)
        if self.accept("raise"):
            port, _ = self.ident("port name")
            self.expect(".")
            event, _ = self.ident("event name")
            args = []
            if self.accept("("):
                if not self.at(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
            return RaiseEvent(port, event, tuple(args), pos)
        name, _ = self.ident("action")
        self.expect(":=")
        return Assign(name, self.expr(), pos)

    # expressions, loosest binding first
    def expr(self):
        left = self.and_expr()
        while self.accept("or"):
            left = Binary("or", left, self.and_expr())
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.accept("and"):
            left = Binary("and", left, self.not_expr())
        return left

    def not_expr(self):
        if self.accept("not"):
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self):
        left = self.additive()
        for op in ("==", "!=", "<=", ">=", "<", ">"):
            if self.accept(op):
                return Binary(op, left, self.additive())
        return left

    def additive(self):
        left = self.unary()
        while self.at("+") or self.at("-"):
            op = self.tok.value
            self.i += 1
            left = Binary(op, left, self.unary())
        return left

    def unary(self):
        if self.accept("-"):
            if self.tok.kind == "int":
                value = -int(self.tok.value)
                self.i += 1
                return Const(value)
            return Unary("-", self.unary())
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return Const(int(t.value))
        if self.accept("true"):
            return Const(True)
        if self.accept("false"):
            return Const(False)
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        name, _ = self.ident("expression")
        return Ref(name)

    # composites
    def composite(self, library, interfaces) -> CompositeDef:
        imports = self.header()
        self.expect("cascade")
        name, pos = self.ident("cascade name")
        ports = self.port_decls(interfaces)
        self.expect("{")
        instances, bindings, channels = [], [], []
        execution = evaluation = None
        known = {}

        def inst_ref():
            t = self.tok
            iname, _ = self.ident("instance name")
            if iname not in known:
                self.error(f"unresolved instance '{iname}'", t)
            self.expect(".")
            port, _ = self.ident("port name")
            return iname, port

        while not self.at("}"):
            t = self.tok
            tpos = (t.line, t.column)
            if self.accept("component"):
                iname, ipos = self.ident("instance name")
                if iname in known:
                    self.error(f"duplicate instance '{iname}'", t)
                self.expect(":")
                type_tok = self.tok
                tname, _ = self.ident("statechart type")
                if tname not in library:
                    self.error(f"unknown statechart type '{tname}'", type_tok)
                known[iname] = tname
                instances.append(Instance(iname, tname, ipos))
            elif self.accept("bind"):
                sys_tok = self.tok
                sys_port, _ = self.ident("system port")
                if not any(p.name == sys_port for p in ports):
                    self.error(f"unresolved system port '{sys_port}'", sys_tok)
                self.expect("->")
                bindings.append(Binding(sys_port, *inst_ref(), tpos))
            elif self.accept("channel"):
                self.expect("[")
                src = inst_ref()
                self.expect("]")
                self.expect("-o)-")
                self.expect("[")
                dst = inst_ref()
                self.expect("]")
                channels.append(Channel(src, dst, tpos))
            elif self.accept("execute"):
                order = [self.ident("instance name")[0]]
                while self.accept(","):
                    order.append(self.ident("instance name")[0])
                for n in order:
                    if n not in known:
                        self.error(f"unresolved instance '{n}'", t)
                execution = tuple(order)
            elif self.accept("evaluate"):
                i_tok = self.tok
                iname, _ = self.ident("instance name")
                if iname not in known:
                    self.error(f"unresolved instance '{iname}'", i_tok)
                self.expect(":")
                states = [self.ident("state name")[0]]
                while self.accept(","):
                    states.append(self.ident("state name")[0])
                evaluation = Evaluation(iname, tuple(states), tpos)
            else:
                self.error(f"unexpected '{t.value or 'end of file'}' in cascade body")
        self.expect("}")
        self.end()
        return CompositeDef(name, ports, tuple(instances), tuple(bindings), tuple(channels),
                            execution, evaluation, imports, pos)


def _unit(unit: Union[SourceUnit, str], kind: str) -> SourceUnit:
    if isinstance(unit, str):
        return SourceUnit.from_text(unit, kind)
    return unit


def parse_interfaces(unit: Union[SourceUnit, str]) -> list[InterfaceDef]:
    """One InterfaceDef per ``interface`` block, in declaration order."""
    return _Parser(_unit(unit, INTERFACES)).interfaces()


def parse_statechart(unit: Union[SourceUnit, str],
                     interfaces: Mapping[str, InterfaceDef]) -> StatechartDef:
    return _Parser(_unit(unit, STATECHART)).statechart(_by_name(interfaces))


def parse_composite(unit: Union[SourceUnit, str], library: Mapping[str, StatechartDef],
                    interfaces: Mapping[str, InterfaceDef]) -> CompositeDef:
    return _Parser(_unit(unit, COMPOSITE)).composite(library, _by_name(interfaces))


def parse_expr(text: str) -> Expr:
    """A standalone guard or action expression."""
    p = _Parser(SourceUnit.from_text(text, STATECHART))
    e = p.expr()
    p.end()
    return e


def _by_name(interfaces) -> dict:
    if isinstance(interfaces, Mapping):
        return dict(interfaces)
    return {i.name: i for i in interfaces}


# --------------------------------------------------------------------------
# pretty printer

def pretty_print(model: Union[StatechartDef, CompositeDef, Sequence[InterfaceDef]]) -> str:
    """Canonical source text; re-parsing it yields a structurally equal model."""
    if isinstance(model, StatechartDef):
        return _print_statechart(model)
    if isinstance(model, CompositeDef):
        return _print_composite(model)
    return "\n".join(_print_interface(i) for i in model)


def _print_interface(iface: InterfaceDef) -> str:
    lines = [f"interface {iface.name} {{"]
    for ev in iface.events:
        params = ""
        if ev.parameters:
            params = "(" + ", ".join(f"{n}: {t}" for n, t in ev.parameters) + ")"
        lines.append(f"    {ev.direction} event {ev.name}{params}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _print_ports(ports, indent="    ") -> list[str]:
    if not ports:
        return []
    return [f"{indent}port {p.name}: {p.mode} {p.interface.name}" for p in ports]


def _print_action(a) -> str:
    if isinstance(a, Assign):
        return f"{a.variable} := {format_expr(a.value)}"
    args = ""
    if a.arguments:
        args = "(" + ", ".join(format_expr(x) for x in a.arguments) + ")"
    return f"raise {a.port}.{a.event}{args}"


def _print_statechart(chart: StatechartDef) -> str:
    head = f"statechart {chart.name}"
    lines = [head + (" [" if chart.ports else " {")]
    if chart.ports:
        lines += _print_ports(chart.ports)
        lines.append("] {")
    for v in chart.variables:
        init = ("true" if v.initial else "false") if v.type == BOOLEAN else str(v.initial)
        lines.append(f"    var {v.name}: {v.type} := {init}")
    for r in chart.regions:
        lines.append(f"    region {r.name} {{")
        if r.initial is not None:
            lines.append(f"        initial {r.initial}")
        for st in r.states:
            lines.append(f"        state {st.name} {{")
            if st.entry_actions:
                lines.append("            entry / " + "; ".join(map(_print_action, st.entry_actions)))
            for tr in st.transitions:
                parts = ["on"]
                if tr.trigger:
                    parts.append(f"{tr.trigger[0]}.{tr.trigger[1]}")
                if tr.guard is not None:
                    parts.append(f"[{format_expr(tr.guard)}]")
                if tr.actions:
                    parts.append("/ " + "; ".join(map(_print_action, tr.actions)))
                parts.append(f"-> {tr.target}")
                lines.append("            " + " ".join(parts))
            lines.append("        }")
        lines.append("    }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _print_composite(c: CompositeDef) -> str:
    lines = [f'import "{imp}"' for imp in c.imports]
    if lines:
        lines.append("")
    lines.append(f"cascade {c.name}" + (" [" if c.system_ports else " {"))
    if c.system_ports:
        lines += _print_ports(c.system_ports)
        lines.append("] {")
    lines += [f"    component {i.name}: {i.statechart}" for i in c.instances]
    lines += [f"    bind {b.system_port} -> {b.instance}.{b.port}" for b in c.bindings]
    lines += [f"    channel [{ch.source[0]}.{ch.source[1]}] -o)- [{ch.target[0]}.{ch.target[1]}]"
              for ch in c.channels]
    if c.execution_list is not None:
        lines.append("    execute " + ", ".join(c.execution_list))
    if c.evaluation is not None:
        lines.append(f"    evaluate {c.evaluation.instance}: " + ", ".join(c.evaluation.failure_states))
    lines.append("}")
    return "\n".join(lines) + "\n"
