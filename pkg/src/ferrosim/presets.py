"""Device-variant presets (A, B, C) and TOML loading."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .ftj import FLAT_KEYS, FtjStack, replace_flat

VARIANTS = ("A", "B", "C")


class PresetError(ValueError):
    """Malformed preset or configuration file; ``key`` holds the offending dotted path."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class DeviceVariant:
    name: str
    stack: FtjStack
    read_vmax: float = 2.0
    provenance: Mapping[str, str] = field(default_factory=dict)


def _builtin_text() -> str:
    return resources.files("ferrosim").joinpath("data/presets.toml").read_text(encoding="utf-8")


def parse_device_tables(doc: Mapping, base: Mapping[str, DeviceVariant] | None = None,
                        source: str = "<config>") -> dict[str, DeviceVariant]:
    """Apply ``[device.X]`` / ``[read]`` / ``[provenance.X]`` tables on top of ``base``."""
    out = dict(base or {})
    devices = doc.get("device", {})
    if not isinstance(devices, Mapping):
        raise PresetError(f"{source}: 'device' must be a table", "device")
    for name, table in devices.items():
        if name not in VARIANTS:
            raise PresetError(f"{source}: unknown device variant device.{name}", f"device.{name}")
        for key in table:
            if key not in FLAT_KEYS:
                raise PresetError(f"{source}: unknown key device.{name}.{key}", f"device.{name}.{key}")
        prev = out.get(name)
        stack = prev.stack if prev else FtjStack()
        try:
            stack = replace_flat(stack, dict(table))
        except (TypeError, ValueError) as exc:
            raise PresetError(f"{source}: device.{name}: {exc}", f"device.{name}") from exc
        out[name] = DeviceVariant(name, stack,
                                  prev.read_vmax if prev else 2.0,
                                  dict(prev.provenance) if prev else {})
    for name, vmax in doc.get("read", {}).items():
        if name not in out:
            raise PresetError(f"{source}: unknown key read.{name}", f"read.{name}")
        v = out[name]
        out[name] = DeviceVariant(name, v.stack, float(vmax), v.provenance)
    for name, notes in doc.get("provenance", {}).items():
        if name not in out:
            raise PresetError(f"{source}: unknown key provenance.{name}", f"provenance.{name}")
        v = out[name]
        out[name] = DeviceVariant(name, v.stack, v.read_vmax, {**v.provenance, **notes})
    return out


def load_presets(path=None) -> dict[str, DeviceVariant]:
    """Built-in presets, or those in ``path`` if given."""
    text = Path(path).read_text(encoding="utf-8") if path else _builtin_text()
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise PresetError(f"{path or 'presets.toml'}: {exc}") from exc
    return parse_device_tables(doc, source=str(path or "presets.toml"))


_CACHE: dict[str, DeviceVariant] | None = None


def get_variant(name: str) -> DeviceVariant:
    global _CACHE
    if _CACHE is None:
        _CACHE = load_presets()
    try:
        return _CACHE[name.upper()]
    except KeyError:
        raise PresetError(f"unknown device variant {name!r}", name) from None


def resolve_stack(device) -> FtjStack:
    """Accept a variant name, a :class:`DeviceVariant` or a bare :class:`FtjStack`."""
    if isinstance(device, FtjStack):
        return device
    if isinstance(device, DeviceVariant):
        return device.stack
    return get_variant(str(device)).stack


def use_presets(variants: Mapping[str, DeviceVariant] | None) -> None:
    """Install ``variants`` as the process-wide presets (``None`` restores the built-ins)."""
    global _CACHE
    _CACHE = dict(variants) if variants is not None else None
