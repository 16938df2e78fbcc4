"""Scenario configuration: schema validation, construction and execution."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

import jsonschema
import numpy as np

from .dynamics import (
    equal_split_state,
    financial_contact_session,
    simulate,
    stationary_state,
    trading_contact_session,
)
from .economy import (
    MONEY,
    CobbDouglas,
    Economy,
    MicroState,
    conserved_keys,
    macro_state_of,
    make_economy,
    set_contact,
    utility_from_dict,
)
from .exceptions import ConfigError, DomainError
from .partition import EntropyModel, log_partition, thermo_integrate_logZ

SCENARIO_SCHEMA = "exchange-scenario/1"
REPORT_SCHEMA = "exchange-scenario-report/1"


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """Bundled JSON schema: ``scenario``, ``report`` or ``axioms-report``."""
    text = resources.files("exchange_entropy").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate(doc, schema_name: str) -> None:
    """Raise :class:`ConfigError` at the first (deepest) schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: (-len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ConfigError(best.message, _pointer(best.absolute_path))


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario document."""

    doc: dict

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def name(self):
        return self.doc.get("name")

    @property
    def actions(self) -> list:
        return list(self.doc.get("actions", []))

    @property
    def estimator(self) -> dict:
        est = {"burn_in": None, "thin": None, "replicas": 1, "sweeps": 20}
        est.update(self.doc.get("estimator", {}))
        return est

    @property
    def output(self) -> dict:
        out = {"dir": None, "format": "json"}
        out.update(self.doc.get("output", {}))
        return out

    def with_overrides(self, *, seed=None, replicas=None, out=None, fmt=None) -> "ScenarioConfig":
        doc = json.loads(json.dumps(self.doc))
        if seed is not None:
            doc["seed"] = int(seed)
        if replicas is not None:
            doc.setdefault("estimator", {})["replicas"] = int(replicas)
        if out is not None or fmt is not None:
            o = doc.setdefault("output", {})
            if out is not None:
                o["dir"] = out
            if fmt is not None:
                o["format"] = fmt
        return load_config(doc)

    def hash(self) -> str:
        """SHA-256 of the canonical document without its output section."""
        doc = {k: v for k, v in self.doc.items() if k != "output"}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(source) -> ScenarioConfig:
    """Load from a path, JSON text or mapping, and validate."""
    if isinstance(source, Mapping):
        doc = json.loads(json.dumps(source))
    else:
        text = str(source)
        if os.path.exists(text):
            with open(text) as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "/") from None
    validate(doc, "scenario")
    cfg = ScenarioConfig(doc)
    economy = build_economy(cfg)
    _initial_totals(cfg, economy)
    for i, action in enumerate(cfg.actions):
        if action["action"] in ("make_contact", "break_contact"):
            for p in action["parts"]:
                if p >= economy.structure.n_parts:
                    raise ConfigError(f"unknown part {p}", f"/actions/{i}/parts")
        if action["action"] == "add_money" and action.get("agent", 0) >= economy.n_agents:
            raise ConfigError("agent index out of range", f"/actions/{i}/agent")
    return cfg


def build_economy(cfg: ScenarioConfig) -> Economy:
    spec = cfg.doc["economy"]
    utils = []
    for i, group in enumerate(spec["population"]):
        try:
            u = utility_from_dict(group["utility"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), f"/economy/population/{i}/utility") from None
        utils.extend([u] * group["count"])
    n = len(utils)
    parts = None
    if "part_sizes" in spec:
        sizes = spec["part_sizes"]
        if sum(sizes) != n:
            raise ConfigError(f"part sizes sum to {sum(sizes)} but the population has {n} agents",
                              "/economy/part_sizes")
        starts = np.cumsum([0] + sizes)
        parts = [list(range(int(starts[k]), int(starts[k + 1]))) for k in range(len(sizes))]
    tradable = {tuple(t["parts"]): frozenset(t["goods"]) for t in spec.get("tradable", [])}
    topo = spec.get("topology", {"name": "all_to_all"})
    default_rate = 1.0 / (n - 1) if n > 1 else 1.0
    try:
        return make_economy(
            utils,
            goods=spec.get("goods"),
            parts=parts,
            tradable=tradable,
            topology=topo["name"],
            rate=topo.get("rate", default_rate),
            matrix=topo.get("matrix"),
            trader_rate=spec.get("trader_rate", 1.0),
            money_part=spec.get("money_part", 0),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc), "/economy") from None


def _initial_totals(cfg: ScenarioConfig, economy: Economy) -> dict:
    keys = conserved_keys(economy)
    totals = {}
    for i, item in enumerate(cfg.doc["initial"]["totals"]):
        good = item["good"]
        parts = tuple(item["parts"]) if "parts" in item else None
        matches = [k for k in keys if k.good == good and (parts is None or k.parts == tuple(sorted(parts)))]
        if len(matches) != 1:
            labels = [k.label() for k in keys if k.good == good]
            raise ConfigError(
                f"total does not name exactly one conserved quantity; candidates {labels}",
                f"/initial/totals/{i}",
            )
        totals[matches[0]] = float(item["total"])
    missing = [k.label() for k in keys if k not in totals]
    if missing:
        raise ConfigError(f"missing initial totals for {missing}", "/initial/totals")
    return totals


def initial_state(cfg: ScenarioConfig, economy: Economy, rng) -> MicroState:
    totals = _initial_totals(cfg, economy)
    mode = cfg.doc["initial"].get("state")
    if mode is None:
        mode = "stationary" if all(isinstance(a.utility, CobbDouglas) for a in economy.agents) else "equal"
    if mode == "stationary":
        return stationary_state(economy, totals, rng)
    return equal_split_state(economy, totals)


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def _analytic(economy: Economy, state: MicroState):
    macro = macro_state_of(economy, state)
    try:
        model = EntropyModel.from_economy(economy)
        return model, macro, log_partition(model, macro)
    except (DomainError, ArithmeticError):
        return None, macro, None


def _run_replica(cfg: ScenarioConfig, replica: int, seed_seq) -> tuple:
    rng = np.random.default_rng(seed_seq)
    est = cfg.estimator
    economy = build_economy(cfg)
    state = initial_state(cfg, economy, rng)
    model, macro, lz = _analytic(economy, state)
    steps = [{
        "step": 0, "action": "initial", "totals": {k.label(): v for k, v in macro.totals.items()},
        "log_z": lz, "delta_log_z": None, "order": model.order if model else None,
    }]
    series = []
    error = None
    sim_kw = {"burn_in": est["burn_in"], "thin": est["thin"], "sweeps": est["sweeps"],
              "record_events": False, "keep_snapshots": False}
    for idx, action in enumerate(cfg.actions, start=1):
        kind = action["action"]
        extra = {}
        try:
            prev_macro = macro
            traj = None
            if kind == "simulate":
                traj = simulate(economy, state, action["events"], rng, **sim_kw)
            elif kind == "financial_contact":
                traj, pot = financial_contact_session(economy, state, action["pot"], action["events"], rng, **sim_kw)
                extra["pot_final"] = pot
            elif kind == "trading_contact":
                prices = {int(g): float(p) for g, p in action["prices"].items()}
                parts = tuple(action["parts"]) if "parts" in action else None
                traj = trading_contact_session(economy, state, prices, action["events"], rng,
                                               parts=parts, **sim_kw)
            elif kind == "add_money":
                p = state.possessions.copy()
                p[action.get("agent", 0), MONEY] += action["amount"]
                state = MicroState(p)
            else:
                economy = set_contact(economy, *action["parts"], action["goods"], kind == "make_contact")
            if traj is not None:
                state = traj.final
                for row_t, row_e, row in zip(traj.sample_times, traj.sample_events, traj.totals):
                    for key, value in zip(traj.keys, row):
                        series.append((replica, idx, kind, int(row_e), float(row_t), key.label(), float(value)))
            new_model, macro, new_lz = _analytic(economy, state)
            delta = new_lz - lz if (new_lz is not None and lz is not None) else None
            key = new_model.money_key if new_model is not None else None
            if kind in ("financial_contact", "add_money") and key in prev_macro.totals:
                before, after = prev_macro[key], macro[key]
                extra["money_inflow"] = after - before
                if before > 0:
                    # contact does not change the model: integrate coolness along the money line
                    extra["delta_log_z_integral"] = thermo_integrate_logZ(new_model, macro, before, after)
            steps.append({
                "step": idx, "action": kind, "totals": {k.label(): v for k, v in macro.totals.items()},
                "log_z": new_lz, "delta_log_z": delta,
                "order": new_model.order if new_model else None, **extra,
            })
            model, lz = new_model, new_lz
        except Exception as exc:  # report the failing step, stop this replica
            error = {"step": idx, "type": type(exc).__name__, "message": str(exc)}
            break
    return {"replica": replica, "steps": steps, "error": error}, series


def run_scenario(cfg: ScenarioConfig) -> tuple:
    """Execute every replica; returns ``(report, csv_rows)``.

    Replica ``r`` draws from the ``r``-th child of the scenario seed, so
    results do not depend on how many replicas run.
    """
    replicas = int(cfg.estimator["replicas"])
    children = np.random.SeedSequence(cfg.seed).spawn(replicas)
    results, rows = [], []
    for r, child in enumerate(children):
        res, series = _run_replica(cfg, r, child)
        results.append(res)
        rows.extend(series)
    economy = build_economy(cfg)
    try:
        model_desc = EntropyModel.from_economy(economy).describe()
    except DomainError:
        model_desc = None
    report = {
        "schema": REPORT_SCHEMA,
        "name": cfg.name,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "model": model_desc,
        "ok": all(r["error"] is None for r in results),
        "replicas": results,
    }
    return report, rows


def report_json(report: Mapping) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def series_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "step", "action", "event", "time", "quantity", "total"])
    for r in rows:
        w.writerow([r[0], r[1], r[2], r[3], repr(r[4]), r[5], repr(r[6])])
    return buf.getvalue()


def write_outputs(report, rows, out_dir: str, fmt: str = "json", stem: str = "report") -> list:
    """Write the report (and CSV series) into ``out_dir``; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = os.path.join(out_dir, f"{stem}.json")
        with open(path, "w") as fh:
            fh.write(report_json(report))
        written.append(path)
    if fmt in ("csv", "both"):
        path = os.path.join(out_dir, f"{stem}_series.csv")
        with open(path, "w") as fh:
            fh.write(series_csv(rows))
        written.append(path)
    return written
