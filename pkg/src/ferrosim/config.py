"""Layered TOML configuration: built-in presets, then files, then flags.

Recognized top-level tables are ``device``, ``read`` and ``provenance``
(device presets), ``cell`` (:class:`~ferrosim.cells.CellConfig` fields),
``solver`` (:class:`~ferrosim.engine.SolverConfig` fields for netlist runs)
and ``cell_solver`` (the same fields for the cell benches).  Any other key
is rejected with its dotted path.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import presets
from .cells import CELL_SOLVER, CellConfig, weight_table
from .engine import SolverConfig
from .ftj import flatten_stack
from .presets import DeviceVariant, PresetError, load_presets, parse_device_tables

TABLES = ("device", "read", "provenance", "cell", "solver", "cell_solver")


class ConfigError(PresetError):
    pass


@dataclass(frozen=True)
class ResolvedConfig:
    devices: Mapping[str, DeviceVariant]
    cell: CellConfig = CellConfig()
    solver: SolverConfig = SolverConfig()
    solver_cell: SolverConfig = CELL_SOLVER
    sources: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        """Every value materialized, in a TOML-serializable layout."""
        def solver_dict(sc: SolverConfig) -> dict:
            d = dataclasses.asdict(sc)
            d["dt_max_schedule"] = [list(x) for x in sc.dt_max_schedule]
            return {k: v for k, v in d.items() if v is not None}

        return {
            "device": {k: flatten_stack(v.stack) for k, v in sorted(self.devices.items())},
            "read": {k: v.read_vmax for k, v in sorted(self.devices.items())},
            "cell": dataclasses.asdict(self.cell),
            "solver": solver_dict(self.solver),
            "cell_solver": solver_dict(self.solver_cell),
        }


def _overlay_dataclass(obj, table: Mapping, prefix: str, source: str):
    if not isinstance(table, Mapping):
        raise ConfigError(f"{source}: '{prefix}' must be a table", prefix)
    names = {f.name for f in dataclasses.fields(obj)}
    for key in table:
        if key not in names:
            raise ConfigError(f"{source}: unknown key {prefix}.{key}", f"{prefix}.{key}")
    kw = {k: tuple(tuple(x) for x in v) if k == "dt_max_schedule" else v for k, v in table.items()}
    try:
        return dataclasses.replace(obj, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {prefix}: {exc}", prefix) from exc


def apply_document(cfg: ResolvedConfig, doc: Mapping, source: str = "<config>") -> ResolvedConfig:
    """Overlay one parsed TOML document on ``cfg``."""
    for key in doc:
        if key not in TABLES:
            raise ConfigError(f"{source}: unknown key {key}", key)
    try:
        devices = parse_device_tables(
            {k: doc[k] for k in ("device", "read", "provenance") if k in doc}, cfg.devices, source)
    except PresetError as exc:
        raise ConfigError(str(exc), exc.key) from exc
    cell = _overlay_dataclass(cfg.cell, doc["cell"], "cell", source) if "cell" in doc else cfg.cell
    solver = (_overlay_dataclass(cfg.solver, doc["solver"], "solver", source)
              if "solver" in doc else cfg.solver)
    solver_cell = (_overlay_dataclass(cfg.solver_cell, doc["cell_solver"], "cell_solver", source)
                   if "cell_solver" in doc else cfg.solver_cell)
    return ResolvedConfig(devices, cell, solver, solver_cell, cfg.sources + (source,))


def load_config(paths: Iterable = (), overrides: Iterable[Mapping] = ()) -> ResolvedConfig:
    """Built-in presets, then each file in ``paths`` left to right, then ``overrides``.

    Raises :class:`ConfigError` naming the offending key path (or the TOML
    line for syntax errors).  A missing file raises ``OSError``.
    """
    cfg = ResolvedConfig(load_presets())
    for path in paths:
        text = Path(path).read_text(encoding="utf-8")
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg = apply_document(cfg, doc, str(path))
    for doc in overrides:
        cfg = apply_document(cfg, doc, "<flags>")
    return cfg


def activate(cfg: ResolvedConfig) -> None:
    """Make ``cfg.devices`` the presets seen by every simulation in this process."""
    presets.use_presets(cfg.devices)
    weight_table.cache_clear()


def deactivate() -> None:
    """Restore the built-in presets."""
    presets.use_presets(None)
    weight_table.cache_clear()
