"""Config-document ingestion and serialization.

A system is described by one human-readable YAML/JSON document (see
``docs/config-schema.md`` in the repository root for the field reference).
``load_system`` accepts a file path or an already-parsed mapping and returns
a fully validated :class:`~chpdispatch.model.SystemModel`; ``dump_system``
is its exact inverse (round-trips are field-identical).
"""

from __future__ import annotations

import os
from typing import Any, Mapping

import numpy as np
import yaml

from .model import (
    BatteryUnit,
    Branch,
    ChpUnit,
    Diagnostic,
    ElectricNetwork,
    ForecastSeries,
    GridConnection,
    HeatNetwork,
    HeatPipe,
    HeatPump,
    PvUnit,
    SystemModel,
    ThermalTank,
    validate_system,
)

SCHEMA_VERSION = 1

__all__ = ["ConfigError", "ModelValidationError", "load_system", "dump_system", "SCHEMA_VERSION"]


class ConfigError(ValueError):
    """Malformed config document; ``path`` names the offending entry."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ModelValidationError(ValueError):
    """A structurally well-formed document that violates model invariants."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        lines = "\n".join(f"  - {d}" for d in diagnostics)
        super().__init__(f"system model failed validation:\n{lines}")


class _Reader:
    """Cursor into the document tree that reports full paths on errors."""

    def __init__(self, data: Mapping[str, Any], path: str = ""):
        if not isinstance(data, Mapping):
            raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path

    def _join(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def child(self, key: str) -> "_Reader":
        return _Reader(self.require(key), self._join(key))

    def optional_child(self, key: str) -> "_Reader | None":
        if key not in self.data or self.data[key] is None:
            return None
        return self.child(key)

    def require(self, key: str) -> Any:
        if key not in self.data:
            raise ConfigError(self._join(key), "required field is missing")
        return self.data[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.data.get(key, default)

    def number(self, key: str, default: float | None = None) -> float:
        val = self.data.get(key, default)
        if val is None:
            raise ConfigError(self._join(key), "required numeric field is missing")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(self._join(key), f"expected a number, got {val!r}")
        return float(val)

    def integer(self, key: str, default: int | None = None) -> int:
        val = self.data.get(key, default)
        if val is None:
            raise ConfigError(self._join(key), "required integer field is missing")
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(self._join(key), f"expected an integer, got {val!r}")
        return val

    def string(self, key: str, default: str | None = None) -> str:
        val = self.data.get(key, default)
        if not isinstance(val, str):
            raise ConfigError(self._join(key), f"expected a string, got {val!r}")
        return val

    def series(self, key: str, length: int, default: float | None = None) -> np.ndarray:
        """A scalar (broadcast) or list of exactly ``length`` numbers."""
        val = self.data.get(key, default)
        if val is None:
            raise ConfigError(self._join(key), "required series is missing")
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            return np.full(length, float(val))
        if isinstance(val, (list, tuple)):
            if len(val) != length:
                raise ConfigError(
                    self._join(key), f"series length {len(val)} inconsistent with horizon {length}"
                )
            try:
                return np.asarray(val, dtype=float)
            except (TypeError, ValueError):
                raise ConfigError(self._join(key), "series entries must be numbers") from None
        raise ConfigError(self._join(key), f"expected number or list, got {type(val).__name__}")

    def items(self, key: str) -> list["_Reader"]:
        val = self.data.get(key, [])
        if val is None:
            val = []
        if not isinstance(val, (list, tuple)):
            raise ConfigError(self._join(key), "expected a list")
        return [_Reader(v, f"{self._join(key)}[{i}]") for i, v in enumerate(val)]


def load_system(source: str | os.PathLike | Mapping[str, Any]) -> SystemModel:
    """Build a validated SystemModel from a file path or in-memory document."""
    if isinstance(source, Mapping):
        doc = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        if not isinstance(doc, Mapping):
            raise ConfigError("<root>", "document must be a mapping")
    model = _parse(doc)
    diags = validate_system(model)
    if diags:
        raise ModelValidationError(diags)
    return model


def _parse(doc: Mapping[str, Any]) -> SystemModel:
    root = _Reader(doc)
    version = root.integer("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")

    hz = root.child("horizon")
    T = hz.integer("steps")
    dt = hz.number("step_seconds")
    base_mva = root.number("base_mva", 1.0)

    net = _parse_electric(root.child("electric_network"))
    heat_reader = root.optional_child("heat_network")
    heat = _parse_heat(heat_reader, T) if heat_reader else _empty_heat()

    chp = [
        ChpUnit(
            name=r.string("name"),
            bus=r.integer("bus"),
            heat_node=r.integer("heat_node"),
            power_to_heat=r.number("power_to_heat"),
            p_min=r.number("p_min"),
            p_max=r.number("p_max"),
            q_min=r.number("q_min"),
            q_max=r.number("q_max"),
            ramp_p=r.number("ramp_p"),
            ramp_q=r.number("ramp_q"),
            cost=r.number("cost"),
        )
        for r in root.items("chp_units")
    ]
    hps = [
        HeatPump(
            name=r.string("name"),
            bus=r.integer("bus"),
            heat_node=r.integer("heat_node"),
            power_to_heat=r.number("power_to_heat"),
            power_factor=r.number("power_factor"),
            p_min=r.number("p_min"),
            p_max=r.number("p_max"),
            ramp_p=r.number("ramp_p"),
            cost=r.number("cost"),
        )
        for r in root.items("heat_pumps")
    ]
    bats = [
        BatteryUnit(
            name=r.string("name"),
            bus=r.integer("bus"),
            retention=r.number("retention"),
            eta_charge=r.number("eta_charge"),
            eta_discharge=r.number("eta_discharge"),
            capacity=r.number("capacity"),
            e_min=r.number("e_min"),
            e_max=r.number("e_max"),
            e_initial=r.number("e_initial"),
            p_min=r.number("p_min"),
            p_max=r.number("p_max"),
            ramp_p=r.number("ramp_p"),
            cost=r.number("cost"),
        )
        for r in root.items("batteries")
    ]
    tanks = [
        ThermalTank(
            name=r.string("name"),
            heat_node=r.integer("heat_node"),
            retention=r.number("retention"),
            eta_charge=r.number("eta_charge"),
            eta_discharge=r.number("eta_discharge"),
            capacity=r.number("capacity"),
            e_min=r.number("e_min"),
            e_max=r.number("e_max"),
            e_initial=r.number("e_initial"),
            h_min=r.number("h_min"),
            h_max=r.number("h_max"),
            ramp_h=r.number("ramp_h"),
            cost=r.number("cost"),
        )
        for r in root.items("thermal_tanks")
    ]
    pvs = [PvUnit(name=r.string("name"), bus=r.integer("bus")) for r in root.items("pv_units")]

    gr = root.child("grid")
    grid = GridConnection(
        bus=gr.integer("bus"),
        p_min=gr.number("p_min"),
        p_max=gr.number("p_max"),
        q_min=gr.number("q_min"),
        q_max=gr.number("q_max"),
        price=gr.series("price", T),
    )

    forecasts = _parse_forecasts(
        root.optional_child("forecasts"),
        T,
        pv_names=[p.name for p in pvs],
        n_bus=net.n_bus,
        n_heat=heat.n_node,
    )

    return SystemModel(
        base_mva=base_mva,
        horizon=T,
        step_seconds=dt,
        chp_units=tuple(chp),
        heat_pumps=tuple(hps),
        batteries=tuple(bats),
        tanks=tuple(tanks),
        pv_units=tuple(pvs),
        grid=grid,
        electric=net,
        heat=heat,
        forecasts=forecasts,
    )


def _parse_electric(r: _Reader) -> ElectricNetwork:
    buses = r.items("buses")
    if not buses:
        raise ConfigError("electric_network.buses", "at least one bus is required")
    n = len(buses)
    ids = [b.integer("id") for b in buses]
    if sorted(ids) != list(range(n)):
        raise ConfigError("electric_network.buses", f"bus ids must be 0..{n - 1}, got {sorted(ids)}")
    v_min = np.zeros(n)
    v_max = np.zeros(n)
    for b, i in zip(buses, ids):
        v_min[i] = b.number("v_min", 0.9)
        v_max[i] = b.number("v_max", 1.1)
    branches = [
        Branch(
            from_bus=br.integer("from"),
            to_bus=br.integer("to"),
            resistance=br.number("r"),
            reactance=br.number("x"),
            flow_max=br.number("flow_max"),
        )
        for br in r.items("branches")
    ]
    return ElectricNetwork(
        n_bus=n,
        slack_bus=r.integer("slack_bus", 0),
        slack_voltage=r.number("slack_voltage", 1.0),
        v_min=v_min,
        v_max=v_max,
        branches=tuple(branches),
    )


def _empty_heat() -> HeatNetwork:
    z = np.zeros(0)
    return HeatNetwork(
        n_node=0,
        pipes=(),
        ts_min=z,
        ts_max=z,
        tr_min=z,
        tr_max=z,
        inflow=z,
        outflow=z,
        ground_temperature=np.zeros(1),
        initial_supply_temperature=0.0,
        initial_return_temperature=0.0,
    )


def _parse_heat(r: _Reader, T: int) -> HeatNetwork:
    nodes = r.items("nodes")
    n = len(nodes)
    ids = [nd.integer("id") for nd in nodes]
    if sorted(ids) != list(range(n)):
        raise ConfigError("heat_network.nodes", f"node ids must be 0..{n - 1}, got {sorted(ids)}")
    arrays = {k: np.zeros(n) for k in ("ts_min", "ts_max", "tr_min", "tr_max", "inflow", "outflow")}
    for nd, i in zip(nodes, ids):
        arrays["ts_min"][i] = nd.number("ts_min")
        arrays["ts_max"][i] = nd.number("ts_max")
        arrays["tr_min"][i] = nd.number("tr_min")
        arrays["tr_max"][i] = nd.number("tr_max")
        arrays["inflow"][i] = nd.number("inflow_kg_s", 0.0)
        arrays["outflow"][i] = nd.number("outflow_kg_s", 0.0)
    pipes = []
    for p in r.items("pipes"):
        flow = p.series("mass_flow", T) if isinstance(p.get("mass_flow"), list) else None
        pipes.append(
            HeatPipe(
                from_node=p.integer("from"),
                to_node=p.integer("to"),
                length=p.number("length"),
                diameter=p.number("diameter"),
                conductivity=p.number("conductivity"),
                mass_flow=flow if flow is not None else np.array([p.number("mass_flow")]),
                cross_section=p.number("cross_section", 0.0),
            )
        )
    water = r.optional_child("water")
    density = water.number("density", 1000.0) if water else 1000.0
    heat_capacity = water.number("heat_capacity", 4182.0) if water else 4182.0
    ground = r.series("ground_temperature", T) if isinstance(r.get("ground_temperature"), list) else np.array([r.number("ground_temperature", 10.0)])
    return HeatNetwork(
        n_node=n,
        pipes=tuple(pipes),
        ts_min=arrays["ts_min"],
        ts_max=arrays["ts_max"],
        tr_min=arrays["tr_min"],
        tr_max=arrays["tr_max"],
        inflow=arrays["inflow"],
        outflow=arrays["outflow"],
        ground_temperature=ground,
        initial_supply_temperature=r.number("initial_supply_temperature", 80.0),
        initial_return_temperature=r.number("initial_return_temperature", 50.0),
        water_density=density,
        water_heat_capacity=heat_capacity,
    )


def _parse_forecasts(
    r: _Reader | None, T: int, pv_names: list[str], n_bus: int, n_heat: int
) -> ForecastSeries:
    def block(reader: _Reader | None, key: str, rows: list[str]) -> tuple[np.ndarray, ...]:
        lo = np.zeros((len(rows), T))
        mid = np.zeros((len(rows), T))
        hi = np.zeros((len(rows), T))
        if reader is None:
            return lo, mid, hi
        sub = reader.optional_child(key)
        if sub is None:
            return lo, mid, hi
        for raw_key in sub.data:
            if str(raw_key) not in rows:
                raise ConfigError(
                    f"forecasts.{key}.{raw_key}", f"unknown channel (expected one of {rows})"
                )
        for i, name in enumerate(rows):
            entry = None
            if name in sub.data:
                entry = sub.child(name)
            elif name.isdigit() and int(name) in sub.data:
                entry = _Reader(sub.data[int(name)], f"forecasts.{key}.{name}")
            if entry is None:
                continue
            mid[i] = entry.series("center", T)
            lo[i] = entry.series("min", T) if "min" in entry.data else mid[i]
            hi[i] = entry.series("max", T) if "max" in entry.data else mid[i]
        return lo, mid, hi

    pv = block(r, "pv", pv_names)
    pl = block(r, "electric_load_p", [str(i) for i in range(n_bus)])
    ql = block(r, "electric_load_q", [str(i) for i in range(n_bus)])
    hl = block(r, "heat_load", [str(i) for i in range(n_heat)])
    return ForecastSeries(
        pv_min=pv[0], pv_center=pv[1], pv_max=pv[2],
        p_load_min=pl[0], p_load_center=pl[1], p_load_max=pl[2],
        q_load_min=ql[0], q_load_center=ql[1], q_load_max=ql[2],
        heat_load_min=hl[0], heat_load_center=hl[1], heat_load_max=hl[2],
    )


def dump_system(model: SystemModel, path: str | os.PathLike | None = None) -> dict:
    """Serialize a SystemModel back to the document form (and optionally a file)."""
    doc = _to_document(model)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(doc, fh, sort_keys=False)
    return doc


def _series_out(a: np.ndarray) -> list[float] | float:
    vals = [float(v) for v in np.asarray(a).ravel()]
    if len(set(vals)) == 1 and len(vals) > 1:
        return vals[0]
    if len(vals) == 1:
        return vals[0]
    return vals


def _to_document(m: SystemModel) -> dict:
    net = m.electric
    heat = m.heat
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "base_mva": m.base_mva,
        "horizon": {"steps": m.horizon, "step_seconds": m.step_seconds},
        "electric_network": {
            "slack_bus": net.slack_bus,
            "slack_voltage": net.slack_voltage,
            "buses": [
                {"id": i, "v_min": float(net.v_min[i]), "v_max": float(net.v_max[i])}
                for i in range(net.n_bus)
            ],
            "branches": [
                {
                    "from": br.from_bus,
                    "to": br.to_bus,
                    "r": br.resistance,
                    "x": br.reactance,
                    "flow_max": br.flow_max,
                }
                for br in net.branches
            ],
        },
        "chp_units": [
            {
                "name": c.name, "bus": c.bus, "heat_node": c.heat_node,
                "power_to_heat": c.power_to_heat,
                "p_min": c.p_min, "p_max": c.p_max, "q_min": c.q_min, "q_max": c.q_max,
                "ramp_p": c.ramp_p, "ramp_q": c.ramp_q, "cost": c.cost,
            }
            for c in m.chp_units
        ],
        "heat_pumps": [
            {
                "name": h.name, "bus": h.bus, "heat_node": h.heat_node,
                "power_to_heat": h.power_to_heat, "power_factor": h.power_factor,
                "p_min": h.p_min, "p_max": h.p_max, "ramp_p": h.ramp_p, "cost": h.cost,
            }
            for h in m.heat_pumps
        ],
        "batteries": [
            {
                "name": b.name, "bus": b.bus, "retention": b.retention,
                "eta_charge": b.eta_charge, "eta_discharge": b.eta_discharge,
                "capacity": b.capacity, "e_min": b.e_min, "e_max": b.e_max,
                "e_initial": b.e_initial, "p_min": b.p_min, "p_max": b.p_max,
                "ramp_p": b.ramp_p, "cost": b.cost,
            }
            for b in m.batteries
        ],
        "thermal_tanks": [
            {
                "name": s.name, "heat_node": s.heat_node, "retention": s.retention,
                "eta_charge": s.eta_charge, "eta_discharge": s.eta_discharge,
                "capacity": s.capacity, "e_min": s.e_min, "e_max": s.e_max,
                "e_initial": s.e_initial, "h_min": s.h_min, "h_max": s.h_max,
                "ramp_h": s.ramp_h, "cost": s.cost,
            }
            for s in m.tanks
        ],
        "pv_units": [{"name": p.name, "bus": p.bus} for p in m.pv_units],
        "grid": {
            "bus": m.grid.bus,
            "p_min": m.grid.p_min, "p_max": m.grid.p_max,
            "q_min": m.grid.q_min, "q_max": m.grid.q_max,
            "price": _series_out(m.grid.price),
        },
    }
    if heat.n_node > 0:
        doc["heat_network"] = {
            "water": {"density": heat.water_density, "heat_capacity": heat.water_heat_capacity},
            "ground_temperature": _series_out(heat.ground_temperature),
            "initial_supply_temperature": heat.initial_supply_temperature,
            "initial_return_temperature": heat.initial_return_temperature,
            "nodes": [
                {
                    "id": i,
                    "ts_min": float(heat.ts_min[i]), "ts_max": float(heat.ts_max[i]),
                    "tr_min": float(heat.tr_min[i]), "tr_max": float(heat.tr_max[i]),
                    "inflow_kg_s": float(heat.inflow[i]), "outflow_kg_s": float(heat.outflow[i]),
                }
                for i in range(heat.n_node)
            ],
            "pipes": [
                {
                    "from": p.from_node, "to": p.to_node, "length": p.length,
                    "diameter": p.diameter, "conductivity": p.conductivity,
                    "mass_flow": _series_out(p.mass_flow),
                    "cross_section": p.cross_section,
                }
                for p in heat.pipes
            ],
        }
    fc = m.forecasts
    forecasts: dict[str, Any] = {}
    channel_names = {
        "pv": [p.name for p in m.pv_units],
        "electric_load_p": [str(i) for i in range(net.n_bus)],
        "electric_load_q": [str(i) for i in range(net.n_bus)],
        "heat_load": [str(i) for i in range(heat.n_node)],
    }
    for name, lo, mid, hi in fc.blocks():
        entries = {}
        for i, ch in enumerate(channel_names[name]):
            if lo.size and (np.any(lo[i]) or np.any(mid[i]) or np.any(hi[i])):
                entries[ch] = {
                    "min": [float(v) for v in lo[i]],
                    "center": [float(v) for v in mid[i]],
                    "max": [float(v) for v in hi[i]],
                }
        if entries:
            forecasts[name] = entries
    if forecasts:
        doc["forecasts"] = forecasts
    return doc
