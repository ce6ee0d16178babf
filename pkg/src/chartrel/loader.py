"""Load a model directory: interfaces, statecharts and one cascade composite."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

from .model import (CompositeDef, Diagnostic, InterfaceDef, StatechartDef, validate_composite,
                    validate_interfaces, validate_statechart)
from .parser import (ParseError, SourceUnit, _Parser, parse_composite, parse_interfaces,
                     parse_statechart)


class ModelError(Exception):
    """Raised when a model directory does not parse or validate."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass
class Model:
    composite: CompositeDef
    library: dict
    interfaces: dict
    directory: Path
    files: list = field(default_factory=list)

    def fault_table_path(self) -> Path:
        tables = sorted(self.directory.glob("*.faults.csv"))
        if len(tables) != 1:
            raise FileNotFoundError(f"expected one *.faults.csv in {self.directory}, found {len(tables)}")
        return tables[0]


def bundled_model_dir(name: str = "epas") -> Path:
    return Path(str(resources.files("chartrel") / "models" / name))


def _imports(unit: SourceUnit) -> tuple:
    return _Parser(unit).header()


def _collect(directory: Path) -> tuple:
    composites = sorted(directory.glob("*.gcd"))
    if not composites:
        raise ModelError([Diagnostic("no composite found", path=str(directory))])
    if len(composites) > 1:
        names = ", ".join(p.name for p in composites)
        raise ModelError([Diagnostic(f"more than one composite found: {names}", path=str(directory))])
    comp_unit = SourceUnit.from_path(composites[0])
    try:
        imports = _imports(comp_unit)
    except ParseError as exc:
        raise ModelError([exc.diagnostic]) from None
    if imports:
        files = [(directory / rel).resolve() for rel in imports]
        missing = [Diagnostic(f"imported file not found: {p.name}", path=comp_unit.path)
                   for p in files if not p.exists()]
        if missing:
            raise ModelError(missing)
    else:
        files = sorted(directory.glob("*.gi")) + sorted(directory.glob("*.gsc"))
    return comp_unit, files


def check_model(directory: Union[str, Path]) -> list[Diagnostic]:
    """Every parse and validation diagnostic for a model directory (empty if clean)."""
    try:
        load_model(directory)
    except ModelError as exc:
        return exc.diagnostics
    return []


def load_model(directory: Union[str, Path]) -> Model:
    directory = Path(directory)
    comp_unit, files = _collect(directory)
    units = [SourceUnit.from_path(p) for p in files]
    diags: list[Diagnostic] = []

    interfaces: list[InterfaceDef] = []
    for unit in (u for u in units if u.kind == "interfaces"):
        try:
            interfaces += parse_interfaces(unit)
        except ParseError as exc:
            diags.append(exc.diagnostic)
    diags += validate_interfaces(interfaces)
    if diags:
        raise ModelError(diags)
    iface_map = {i.name: i for i in interfaces}

    library: dict[str, StatechartDef] = {}
    for unit in (u for u in units if u.kind == "statechart"):
        try:
            chart = parse_statechart(unit, iface_map)
        except ParseError as exc:
            diags.append(exc.diagnostic)
            continue
        if chart.name in library:
            diags.append(Diagnostic(f"duplicate statechart '{chart.name}'", path=unit.path,
                                    line=chart.pos[0], column=chart.pos[1]))
        library[chart.name] = chart
        diags += [_with_path(d, unit.path) for d in validate_statechart(chart)]
    if diags:
        raise ModelError(diags)

    try:
        composite = parse_composite(comp_unit, library, iface_map)
    except ParseError as exc:
        raise ModelError([exc.diagnostic]) from None
    diags = [_with_path(d, comp_unit.path) for d in validate_composite(composite, library)]
    if diags:
        raise ModelError(diags)
    return Model(composite, library, iface_map, directory, [Path(comp_unit.path)] + list(files))


def _with_path(d: Diagnostic, path: str) -> Diagnostic:
    return Diagnostic(d.message, d.where, d.line, d.column, d.severity, path)
