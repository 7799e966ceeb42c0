"""JSON scenario files that drive every CLI subcommand.

A scenario is a JSON object with the sections ``road``, ``regions``,
``channels``, ``game``, ``pricing``, ``sim``, ``analysis`` and
``output``; see ``docs/scenario.md`` for the field list.  Loading fills
defaults, so ``loads(dumps(s)) == s``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import game, linkstate, mac, sim, traffic

SCHEMA_VERSION = 1

MAC_DEFAULTS = {"cw_min": 32, "m": 5, "M": 7, "sigma": 1.0, "T_s": 40.0, "T_o": 10.0,
                "T_c": 6.0, "mode": "rts_cts", "arrival_rate": 0.0, "buffer": 10}
BNN_DEFAULTS = {"h": 0.01, "eps": 1e-6, "max_steps": 1_000_000, "record_every": 100}
OPT_DEFAULTS = {"starts": 16, "seed": 0}
SIM_DEFAULTS = {"horizon": 1_100_000, "warmup": None, "seed": 0, "replications": 1,
                "batches": 20, "counts": None,
                "bounds": {"throughput": 0.08, "service_time": 0.08, "collision_prob": 0.05,
                           "slot_abs": 0.03}}
ANALYSIS_DEFAULTS = {"n": [1, 2, 5, 10, 20, 50], "lambda_sweep": None}
OUTPUT_DEFAULTS = {"format": "csv", "path": None}


class ScenarioError(ValueError):
    """Schema violations, each prefixed by its field path."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


class _Checker:
    def __init__(self):
        self.problems = []

    def fail(self, path, msg):
        self.problems.append(f"{path}: {msg}")

    def obj(self, parent, key, path, required=True):
        if key not in parent or parent[key] is None:
            if required:
                self.fail(f"{path}.{key}" if path else key, "missing")
            return None
        val = parent[key]
        if not isinstance(val, dict):
            self.fail(f"{path}.{key}" if path else key, "must be an object")
            return None
        return val

    def number(self, parent, key, path, lo=None, hi=None, strict_lo=False, required=True,
               integer=False):
        where = f"{path}.{key}"
        if key not in parent or parent[key] is None:
            if required:
                self.fail(where, "missing")
            return None
        val = parent[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(where, f"must be a number, got {val!r}")
            return None
        if integer and val != int(val):
            self.fail(where, f"must be an integer, got {val!r}")
        if lo is not None and (val <= lo if strict_lo else val < lo):
            self.fail(where, f"must be {'>' if strict_lo else '>='} {lo}, got {val!r}")
        if hi is not None and val > hi:
            self.fail(where, f"must be <= {hi}, got {val!r}")
        return val

    def matrix(self, val, path, shape, positive=True):
        arr = None
        try:
            arr = np.asarray(val, float)
        except (TypeError, ValueError):
            self.fail(path, "must be a numeric array")
            return None
        if arr.shape != shape:
            self.fail(path, f"must have shape {list(shape)}, got {list(arr.shape)}")
            return None
        if positive and np.any(~(arr > 0)):
            self.fail(path, "entries must be positive")
        return arr


def _with_defaults(section, defaults):
    out = copy.deepcopy(defaults)
    for k, v in (section or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def validate(raw: dict) -> dict:
    """Return the scenario with defaults filled, or raise :class:`ScenarioError`."""
    ck = _Checker()
    if not isinstance(raw, dict):
        raise ScenarioError(["<root>: must be a JSON object"])
    data = copy.deepcopy(raw)
    version = data.get("schema", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        ck.fail("schema", f"unsupported version {version!r}")
    data["schema"] = SCHEMA_VERSION
    data.setdefault("name", "")
    data.setdefault("metadata", {})

    road = ck.obj(data, "road", "")
    classes = []
    d = None
    if road is not None:
        d = ck.number(road, "d", "road", lo=0, strict_lo=True)
        cls_list = road.get("classes")
        if not isinstance(cls_list, list) or not cls_list:
            ck.fail("road.classes", "must be a nonempty list")
            cls_list = []
        for i, c in enumerate(cls_list):
            p = f"road.classes[{i}]"
            if not isinstance(c, dict):
                ck.fail(p, "must be an object")
                continue
            c.setdefault("name", f"class{i}")
            c.setdefault("zeta", 0.0)
            c.setdefault("deadline", None)
            c.setdefault("omega", None)
            ck.number(c, "lambda", p, lo=0, strict_lo=True)
            ck.number(c, "x_min", p, lo=0, strict_lo=True)
            ck.number(c, "frame_len", p, lo=0, strict_lo=True)
            ck.number(c, "zeta", p, lo=0)
            ck.number(c, "mass", p, lo=0, strict_lo=True)
            ck.number(c, "omega", p, lo=1, required=False, integer=True)
            ck.number(c, "deadline", p, lo=0, required=False)
            if d and c.get("x_min") and c.get("omega") and c["omega"] * c["x_min"] > d:
                ck.fail(f"{p}.omega", f"{c['omega']} vehicles do not fit on d={d}")
            classes.append(c)
    C = len(classes)

    regions = ck.obj(data, "regions", "")
    N = 0
    if regions is not None:
        radii = regions.get("radii")
        if not isinstance(radii, list) or not radii:
            ck.fail("regions.radii", "must be a nonempty list")
        else:
            N = len(radii)
            r = np.asarray(radii, float)
            if np.any(r <= 0) or np.any(np.diff(r) >= 0):
                ck.fail("regions.radii", "must be positive and strictly decreasing")
            if d and r[0] > d:
                ck.fail("regions.radii", f"coverage radius {r[0]} exceeds d={d}")

    chans = data.get("channels")
    if not isinstance(chans, list) or not chans:
        ck.fail("channels", "must be a nonempty list")
        chans = []
    for j, ch in enumerate(chans):
        p = f"channels[{j}]"
        if not isinstance(ch, dict):
            ck.fail(p, "must be an object")
            continue
        ch.setdefault("name", f"ch{j}")
        ch["mac"] = _with_defaults(ch.get("mac"), MAC_DEFAULTS)
        try:
            mac.MacParameters(**ch["mac"])
        except (TypeError, ValueError) as exc:
            ck.fail(f"{p}.mac", str(exc))
        if "rates" not in ch:
            ck.fail(f"{p}.rates", "missing")
        elif C and N:
            ck.matrix(ch["rates"], f"{p}.rates", (C, N))
    L = len(chans)

    g = data["game"] = _with_defaults(data.get("game"), {"phi": 1.0, "available": None, "zeta": None,
                                                         "bnn": BNN_DEFAULTS,
                                                         "optimizer": OPT_DEFAULTS})
    ck.number(g, "phi", "game", lo=0, strict_lo=True)
    if g["zeta"] is not None and (not isinstance(g["zeta"], list) or len(g["zeta"]) != C
                                  or any(not isinstance(v, (int, float)) or v < 0
                                         for v in g["zeta"])):
        ck.fail("game.zeta", f"must list {C} nonnegative delay weights")
    if g["available"] is not None:
        av = np.asarray(g["available"])
        if av.shape != (C, L):
            ck.fail("game.available", f"must have shape {[C, L]}")
        elif not av.astype(bool).any(axis=1).all():
            ck.fail("game.available", "every class needs an available channel")
    ck.number(g["bnn"], "h", "game.bnn", lo=0, strict_lo=True)
    ck.number(g["bnn"], "eps", "game.bnn", lo=0)
    ck.number(g["bnn"], "max_steps", "game.bnn", lo=0, integer=True)
    ck.number(g["bnn"], "record_every", "game.bnn", lo=0, integer=True)
    ck.number(g["optimizer"], "starts", "game.optimizer", lo=1, integer=True)
    ck.number(g["optimizer"], "seed", "game.optimizer", lo=0, integer=True)

    pr = data["pricing"] = _with_defaults(data.get("pricing"), {"grid": None, "seed": None})
    if pr["grid"] is not None:
        if not isinstance(pr["grid"], list) or len(pr["grid"]) != C:
            ck.fail("pricing.grid", f"must list price values for each of the {C} classes")
        elif any(not isinstance(a, list) or not a or min(a) < 0 for a in pr["grid"]):
            ck.fail("pricing.grid", "each entry must be a nonempty list of prices >= 0")

    s = data["sim"] = _with_defaults(data.get("sim"), SIM_DEFAULTS)
    ck.number(s, "horizon", "sim", lo=1, integer=True)
    ck.number(s, "warmup", "sim", lo=0, required=False, integer=True)
    ck.number(s, "seed", "sim", lo=0, integer=True)
    ck.number(s, "replications", "sim", lo=1, integer=True)
    if s["warmup"] is not None and s["horizon"] is not None and s["warmup"] >= s["horizon"]:
        ck.fail("sim.warmup", "must be below sim.horizon")
    if s["counts"] is not None:
        cnt = np.asarray(s["counts"])
        if cnt.shape != (L, C) or np.any(cnt < 0):
            ck.fail("sim.counts", f"must be a nonnegative {L}x{C} matrix (channels x classes)")

    a = data["analysis"] = _with_defaults(data.get("analysis"), ANALYSIS_DEFAULTS)
    if not isinstance(a["n"], list) or any(not isinstance(v, (int, float)) or v < 1
                                           for v in a["n"]):
        ck.fail("analysis.n", "must be a list of occupancies >= 1")
    if a["lambda_sweep"] is not None and (not isinstance(a["lambda_sweep"], list)
                                          or any(v <= 0 for v in a["lambda_sweep"])):
        ck.fail("analysis.lambda_sweep", "must be a list of positive densities")

    o = data["output"] = _with_defaults(data.get("output"), OUTPUT_DEFAULTS)
    if o["format"] not in ("csv", "json"):
        ck.fail("output.format", "must be 'csv' or 'json'")

    if ck.problems:
        raise ScenarioError(ck.problems)
    return data


@dataclass(frozen=True)
class Scenario:
    data: dict

    def __eq__(self, other):
        return isinstance(other, Scenario) and dumps(self) == dumps(other)

    @property
    def name(self):
        return self.data["name"]

    @property
    def d(self) -> float:
        return float(self.data["road"]["d"])

    def vehicle_classes(self):
        """Road classes; ``game.zeta`` overrides the per-class delay weights."""
        cls = self.data["road"]["classes"]
        zeta = self.data["game"]["zeta"] or [c["zeta"] for c in cls]
        return [traffic.VehicleClass(c["lambda"], c["x_min"], c["frame_len"], z,
                                     c["deadline"], c["omega"], c["name"])
                for c, z in zip(cls, zeta)]

    @property
    def masses(self):
        return np.array([c["mass"] for c in self.data["road"]["classes"]], float)

    def region_probs(self) -> linkstate.RegionProbs:
        radii = self.data["regions"]["radii"]
        model = linkstate.RegionModel(radii, np.ones(len(radii)), self.d)
        return linkstate.region_probabilities(model)

    def mac_parameters(self):
        return [mac.MacParameters(**ch["mac"]) for ch in self.data["channels"]]

    def channel_specs(self):
        return [game.ChannelSpec(mac.MacParameters(**ch["mac"]), ch["rates"], ch["name"])
                for ch in self.data["channels"]]

    def game(self) -> game.PopulationGame:
        gd = self.data["game"]
        return game.PopulationGame.build(self.vehicle_classes(), self.d, self.masses,
                                         self.channel_specs(), self.region_probs(),
                                         gd["available"], gd["phi"])

    def sim_config(self, seed=None) -> sim.SimConfig:
        s = self.data["sim"]
        counts = s["counts"]
        if counts is None:
            g = self.game()
            counts = np.rint(g.initial_state().x.T).astype(int)
        classes = self.vehicle_classes()
        return sim.SimConfig(list(np.asarray(counts, int)), self.mac_parameters(),
                             [ch["rates"] for ch in self.data["channels"]],
                             [c.frame_len for c in classes], self.region_probs().p,
                             horizon=s["horizon"], warmup=s["warmup"],
                             seed=s["seed"] if seed is None else seed, batches=s["batches"])


def loads(text: str) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"<json>: {exc}"]) from exc
    return Scenario(validate(raw))


def load(path) -> Scenario:
    """Read and validate a scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError([f"<file>: {exc}"]) from exc
    return loads(text)


def dumps(scn: Scenario) -> str:
    return json.dumps(scn.data, indent=2, sort_keys=True)


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package (e.g. ``"reference"``)."""
    return Path(__file__).with_name("scenarios") / f"{name}.json"
