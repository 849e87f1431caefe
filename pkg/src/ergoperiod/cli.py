"""Command-line runner.

A run reads one JSON config, executes one experiment and writes

* ``result.json``  experiment output (deterministic for a given config and seed),
* ``manifest.json`` config digest, version, per-check verdicts, artifact list,
* ``timing.json``  wall time (kept apart so the other two are byte-stable),
* CSV series where the experiment produces one.

Exit status: 0 all checks pass, 1 a check failed, 2 config or runtime error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import markov as mk
from . import measures as ms
from . import noise as nz
from . import rds
from . import sublinear as sl
from . import wiener as wn
from .errors import ConfigInvalid, EmptySeries, ErgoperiodError
from .streams import map_tasks, stream

SCHEMA_VERSION = 1
EXPERIMENTS = (
    "noise-check",
    "rds-verify",
    "estimate-measure",
    "ps-ergodic",
    "condition-a",
    "sublinear-invariance",
    "sublinear-ergodic",
    "birkhoff-qs",
    "wiener-shift",
    "canonical-sample",
)
_TOP_KEYS = {"schema_version", "experiment", "seed", "workers", "system", "params", "output"}

# Knobs per experiment: name -> (default, (description, validator))
_pos_int = ("positive integer", lambda v: isinstance(v, int) and not isinstance(v, bool) and v > 0)
_nonneg_int = ("non-negative integer", lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0)
_pos_num = ("positive number", lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0)
_nonneg_num = ("non-negative number", lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0)
_opt_bool = ("boolean or null", lambda v: v is None or isinstance(v, bool))
_list = ("list", lambda v: isinstance(v, list) and len(v) > 0)
_opt_list = ("list or null", lambda v: v is None or (isinstance(v, list) and len(v) > 0))
_opt_num = ("number or null", lambda v: v is None or isinstance(v, (int, float)))

PARAMS: dict[str, dict] = {
    "noise-check": {"n": (100_000, _pos_int), "t": (None, _opt_num), "group_trials": (200, _pos_int)},
    "rds-verify": {"n_trials": (1000, _pos_int), "tol": (1e-12, _pos_num)},
    "estimate-measure": {"m": (16, _pos_int), "n": (10_000, _pos_int), "bins": (64, _pos_int), "z_max": (4.0, _pos_num)},
    "ps-ergodic": {"tau": (1, _pos_int), "rho0": (None, _opt_list), "atol": (1e-12, _pos_num), "expect": (None, _opt_bool)},
    "condition-a": {"s": (0, _nonneg_int), "n_paths": (200, _pos_int), "window": (16, _pos_int), "atol": (1e-12, _pos_num)},
    "sublinear-invariance": {
        "tau": (1, _pos_int), "n_phi": (100, _pos_int), "steps": ([1], _list), "tol": (1e-12, _pos_num),
        "m": (16, _pos_int), "n": (20_000, _pos_int), "z_max": (4.0, _pos_num),
    },
    "sublinear-ergodic": {"atol": (1e-12, _pos_num), "candidates": (None, _opt_list), "expect": (None, _opt_bool)},
    "birkhoff-qs": {
        "observables": (["sin", "cos", "half", "noise_sin"], _list), "horizons": ([100, 1000, 10000], _list),
        "delta": (0.0625, _pos_num), "n_paths": (100, _pos_int), "m": (16, _pos_int), "epsilon": (0.05, _pos_num),
        "max_fraction": (0.01, _nonneg_num), "constant": (1.0, ("number", lambda v: isinstance(v, (int, float)))),
        "state": (0, _nonneg_int),
    },
    "wiener-shift": {
        "tau": (0.25, _pos_num), "h": (0.01, _pos_num), "N": (100_000, _pos_int), "lags": ([0, 1, 2, 3], _list),
        "block": (None, ("positive integer or null", lambda v: v is None or (isinstance(v, int) and v > 0))),
        "bootstrap": (200, _pos_int), "ks_n": (10_000, _pos_int),
    },
    "canonical-sample": {
        "rho": (None, _opt_list), "times": ([0, 1, 2], _list), "n_paths": (100_000, _pos_int), "shift": (1, _pos_int),
        "z_max": (4.0, _pos_num),
    },
}
SYSTEM_KEYS = {"noise", "cocycle", "path", "matrix", "kind", "N", "step", "alpha"}
_NOISE_KEYS = {"kind", "alpha", "step", "symbol_count", "window", "h", "horizon"}
_COCYCLE_KEYS = {"kind", "amplitude", "maps"}
_PATH_KEYS = {"kind", "states", "tau"}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    system: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    workers: int = 1
    output: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "seed": self.seed,
            "workers": self.workers,
            "system": copy.deepcopy(self.system),
            "params": copy.deepcopy(self.params),
            "output": copy.deepcopy(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the worker count."""
        body = self.to_dict()
        body.pop("workers")
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigInvalid(where, "must be an object")
    for key in section:
        if key not in allowed:
            raise ConfigInvalid(f"{where}.{key}" if where else key, "unknown key")


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a decoded config; unknown keys and out-of-range knobs raise :class:`ConfigInvalid`."""
    _check_keys(data, _TOP_KEYS, "")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigInvalid("schema_version", f"must be {SCHEMA_VERSION}")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigInvalid("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    seed = data.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigInvalid("seed", "mandatory unsigned 64-bit integer")
    workers = data.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigInvalid("workers", "must be a positive integer")
    params = data.get("params", {})
    _check_keys(params, set(PARAMS[exp]), "params")
    for key, value in params.items():
        desc, ok = PARAMS[exp][key][1]
        if not ok(value):
            raise ConfigInvalid(f"params.{key}", f"must be a {desc}")
    system = data.get("system", {})
    _check_keys(system, SYSTEM_KEYS, "system")
    for sub, keys in (("noise", _NOISE_KEYS), ("cocycle", _COCYCLE_KEYS), ("path", _PATH_KEYS)):
        if sub in system:
            _check_keys(system[sub], keys, f"system.{sub}")
    output = data.get("output", {})
    _check_keys(output, {"dir"}, "output")
    return ExperimentConfig(exp, seed, copy.deepcopy(system), copy.deepcopy(params), workers, copy.deepcopy(output))


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("config", f"not valid JSON: {exc}") from exc
    return parse_config(data)


def resolved_params(cfg: ExperimentConfig) -> dict:
    return {k: cfg.params.get(k, default) for k, (default, _) in PARAMS[cfg.experiment].items()}


# ---------------------------------------------------------------- building systems


def build_noise(spec: dict | None) -> nz.NoiseSystem:
    spec = dict(spec or {"kind": "torus2"})
    kind = spec.get("kind", "torus2")
    if kind == "torus2":
        return nz.Torus2(alpha=spec.get("alpha", nz.DEFAULT_ALPHA))
    if kind == "rotation":
        return nz.IrrationalRotation(alpha=spec.get("alpha", nz.DEFAULT_ALPHA), step=spec.get("step", 1.0))
    if kind == "bernoulli":
        return nz.BernoulliShift(symbol_count=spec.get("symbol_count", 2), window=spec.get("window", 16))
    if kind == "wiener":
        return nz.WienerGrid(h=spec.get("h", 0.01), horizon=spec.get("horizon", 1.0))
    raise ConfigInvalid("system.noise.kind", f"unknown noise kind {kind!r}")


def build_cocycle(system: dict) -> rds.Cocycle:
    spec = system.get("cocycle", {"kind": "circle-shift"})
    kind = spec.get("kind")
    if kind == "circle-shift":
        return rds.CircleShift(build_noise(system.get("noise")), amplitude=spec.get("amplitude", 0.1))
    if kind == "finite-map":
        if "maps" not in spec:
            raise ConfigInvalid("system.cocycle.maps", "finite-map needs maps (1-based states)")
        maps = np.asarray(spec["maps"], dtype=np.int64) - 1
        return rds.FiniteMap(maps, nz.BernoulliShift(symbol_count=maps.shape[0]))
    raise ConfigInvalid("system.cocycle.kind", f"unknown cocycle kind {kind!r}")


def build_path(system: dict) -> rds.RandomPeriodicPath:
    cocycle = build_cocycle(system)
    spec = system.get("path", {"kind": "circle"})
    kind = spec.get("kind")
    if kind == "circle":
        if not isinstance(cocycle, rds.CircleShift):
            raise ConfigInvalid("system.path.kind", "circle path needs a circle-shift cocycle")
        return rds.CirclePath(cocycle)
    if kind == "cycle":
        if not isinstance(cocycle, rds.FiniteMap):
            raise ConfigInvalid("system.path.kind", "cycle path needs a finite-map cocycle")
        return rds.CyclePath(cocycle, [v - 1 for v in spec["states"]], spec.get("tau"))
    raise ConfigInvalid("system.path.kind", f"unknown path kind {kind!r}")


def build_matrix(system: dict, base: Path) -> mk.StochasticMatrix:
    if "matrix" in system:
        spec = system["matrix"]
        if isinstance(spec, str) and not Path(spec).is_absolute():
            spec = base / spec
        return mk.read_matrix(spec)
    if system.get("cocycle", {}).get("kind") == "finite-map":
        return mk.StochasticMatrix(build_cocycle(system).transition_matrix())
    raise ConfigInvalid("system.matrix", "a transition matrix (CSV path or inline rows) is required")


# ---------------------------------------------------------------- experiments


@dataclass
class Outcome:
    result: dict
    checks: dict  # name -> bool
    series: dict = field(default_factory=dict)  # file name -> (header, rows)


def _exp_noise_check(cfg, p, base) -> Outcome:
    system = build_noise(cfg.system.get("noise"))
    t = p["t"] if p["t"] is not None else (system.mesh or 0.37)
    battery = nz.observable_battery(system)
    names = sorted(battery)
    reports = map_tasks(lambda i: nz.check_preservation(system, t, battery[names[i]], p["n"], cfg.seed + i), range(len(names)), cfg.workers)
    rng = stream(cfg.seed, 99)
    omega = system.sample(rng, p["group_trials"])
    mesh = system.mesh
    if mesh is None:
        a, b = rng.random(2) * 5
    else:
        a, b = (rng.integers(0, min(50, int(getattr(system, "window", 50))) + 1, size=2) * mesh)
    lhs = system.shift(a, system.shift(b, omega))
    rhs = system.shift(a + b, omega)
    defect = float(np.max(system.distance(lhs, rhs)))
    result = {
        "system": system.name,
        "t": float(t),
        "observables": {n: {"mean_raw": r.mean_raw, "mean_shifted": r.mean_shifted, "z": r.z_score} for n, r in zip(names, reports)},
        "group_defect": defect,
    }
    checks = {f"preservation:{n}": r.passed for n, r in zip(names, reports)}
    checks["group_property"] = defect <= 1e-12
    return Outcome(result, checks)


def _exp_rds_verify(cfg, p, base) -> Outcome:
    cocycle = build_cocycle(cfg.system)
    rep = rds.verify_cocycle(cocycle, p["n_trials"], cfg.seed, p["tol"])
    result = {"cocycle": {"max_defect": rep.max_defect, **rep.details}}
    checks = {"cocycle_identity": rep.passed}
    if "path" in cfg.system or isinstance(cocycle, rds.CircleShift):
        path = build_path(cfg.system)
        rr = rds.verify_rpp(path, p["n_trials"], cfg.seed, p["tol"])
        result["path"] = {"max_defect": rr.max_defect, "tau": float(path.tau), **rr.details}
        checks["rpp_identities"] = rr.passed
    return Outcome(result, checks)


def _exp_estimate_measure(cfg, p, base) -> Outcome:
    path = build_path(cfg.system)
    family = ms.estimate_family(path, p["m"], p["n"], p["bins"], cfg.seed)
    avg = ms.average_measure(family)
    rep = ms.check_family_periodicity(path, family, z_max=p["z_max"], seed=cfg.seed)
    result = {
        "tau": family.tau,
        "s_grid": family.s_grid.tolist(),
        "family": [m.to_dict() for m in family.measures],
        "average": avg.to_dict(),
        "periodicity": {"max_z": rep.max_defect, "per_step": rep.per_step},
    }
    rows = [(float(c), float(w)) for c, w in zip(avg.partition.centers, avg.weights)]
    return Outcome(result, {"family_periodicity": rep.passed}, {"average_measure.csv": (("bin_center", "weight"), rows)})


def _periodic_measures(P, tau, rho0):
    if rho0 is None:
        return mk.find_periodic_measures(P, tau)
    return [mk.DiscretePeriodicMeasure.from_initial(P, rho0, tau)]


def _exp_ps_ergodic(cfg, p, base) -> Outcome:
    P = build_matrix(cfg.system, base)
    pms = _periodic_measures(P, p["tau"], p["rho0"])
    verdicts, checks = [], {}
    for i, pm in enumerate(pms):
        v = mk.is_ps_ergodic(P, p["tau"], pm, p["atol"])
        cc = mk.cross_check_ps(P, p["tau"], pm, p["atol"])
        fam = [mk.enumerate_invariant_sets(P, p["tau"], pm.vectors[s], p["atol"], s=s).to_dict() for s in range(pm.tau)]
        verdicts.append({"measure": pm.to_dict(), **v.to_dict(), "invariant_sets": fam, "structural": cc.structural})
        checks[f"cross_check:{i}"] = cc.agree
        if p["expect"] is not None:
            checks[f"expected_verdict:{i}"] = v.ergodic == p["expect"]
    return Outcome({"tau": p["tau"], "n": P.n, "verdicts": verdicts}, checks)


def _exp_condition_a(cfg, p, base) -> Outcome:
    path = build_path(cfg.system)
    if not isinstance(path, rds.CyclePath):
        raise ConfigInvalid("system.path.kind", "condition-a needs a cycle path on a finite map")
    P = mk.StochasticMatrix(path.cocycle.transition_matrix())
    tau = int(path.tau)
    s = p["s"] % tau
    rho0 = np.zeros(P.n)
    rho0[path.states[0]] = 1.0
    pm = mk.DiscretePeriodicMeasure.from_initial(P, rho0, tau)
    verdict = mk.is_ps_ergodic(P, tau, pm, p["atol"])
    fam = mk.enumerate_invariant_sets(P, tau, pm.vectors[s], p["atol"], s=s)
    rep = mk.check_condition_A(path, s, fam, p["n_paths"], p["window"], cfg.seed)
    checks = {}
    if verdict.per_s[s]:
        checks["strengthened_condition_A"] = rep.strengthened_violations == 0
    result = {"ps_ergodic": verdict.to_dict(), "invariant_sets": fam.to_dict(), "condition_A": rep.to_dict()}
    return Outcome(result, checks)


def _random_battery(n, count, seed):
    rng = stream(seed, 60)
    return {f"phi{i}": rng.uniform(-1, 1, size=n) for i in range(count)}


def _exp_sublinear_invariance(cfg, p, base) -> Outcome:
    if "matrix" in cfg.system or cfg.system.get("cocycle", {}).get("kind") == "finite-map":
        P = build_matrix(cfg.system, base)
        rows = []
        ok = True
        for i, pm in enumerate(mk.find_periodic_measures(P, p["tau"])):
            ue = sl.UpperExpectation.from_vectors(pm.vectors, pm.tau)
            steps = sorted(set(int(k) for k in p["steps"]) | {p["tau"]})
            rep = sl.check_sublinear_invariance(P, ue, _random_battery(P.n, p["n_phi"], cfg.seed), steps, p["tol"])
            rows.append({"measure": i, "max_defect": rep.max_defect})
            ok &= rep.passed
        return Outcome({"families": rows}, {"invariance_exact": ok})
    path = build_path(cfg.system)
    grid = np.arange(p["m"]) * (path.tau / p["m"])
    ue = sl.UpperExpectation([sl.SkewSample(path, s, p["n"], cfg.seed, i) for i, s in enumerate(grid)], float(path.tau), grid)
    obs = _circle_observables(1.0, 0)
    battery = {k: obs[k] for k in ("sin", "cos", "half", "noise_sin")}
    steps = [float(t) for t in p["steps"]]
    rep = sl.check_sublinear_invariance(path, ue, battery, steps, z_max=p["z_max"], n=p["n"], seed=cfg.seed)
    uppers = {k: ue.upper_expect(fn) for k, fn in battery.items()}
    return Outcome({"max_abs_z": rep.max_defect, "rows": rep.rows, "upper": uppers}, {"invariance_z": rep.passed})


def _exp_sublinear_ergodic(cfg, p, base) -> Outcome:
    kind = cfg.system.get("kind", "two-interval-surrogate")
    if kind == "two-interval-surrogate":
        sur = sl.TwoIntervalSurrogate(int(cfg.system.get("N", 12)), int(cfg.system.get("step", 5)))
        system, ue = sur.system, sur.upper()
        if p["candidates"] is None:
            cands = system.invariant_sets()
        else:
            cands = [np.isin(np.arange(system.n), c) for c in p["candidates"]]
    elif kind == "two-interval":
        system = sl.TwoIntervalRotation(cfg.system.get("alpha", nz.DEFAULT_ALPHA))
        ue = system.upper()
        cands = [sl.IntervalSet(tuple(tuple(iv) for iv in c)) for c in (p["candidates"] or [[], [[0, 2]]])]
    else:
        raise ConfigInvalid("system.kind", f"unknown sublinear system {kind!r}")
    verdicts = sl.sublinear_ergodic_check(system, ue, cands, p["atol"])
    ergodic = all(v.passed for v in verdicts)
    result = {
        "kind": kind,
        "ergodic": ergodic,
        "sets": [{"set": v.label, "V": v.v_set, "V_complement": v.v_complement, "pass": v.passed} for v in verdicts],
    }
    checks = {"expected_verdict": ergodic == p["expect"]} if p["expect"] is not None else {"ergodic": ergodic}
    return Outcome(result, checks)


def _circle_observables(constant: float, state: int) -> dict:
    """Observables on (noise, phase) pairs with their exact grid-mean targets."""
    return {
        "sin": lambda w, x: np.sin(2 * np.pi * x),
        "cos": lambda w, x: np.cos(2 * np.pi * x),
        "half": lambda w, x: (np.asarray(x) < 0.5).astype(float),
        "noise_sin": lambda w, x: np.sin(2 * np.pi * np.asarray(w)[..., -1]),
        "constant": lambda w, x: np.full(np.shape(x), float(constant)),
        "state": lambda w, x: (np.asarray(x) == state).astype(float),
    }


def _exp_birkhoff_qs(cfg, p, base) -> Outcome:
    path = build_path(cfg.system)
    obs = _circle_observables(p["constant"], p["state"])
    exact = {"sin": 0.0, "cos": 0.0, "half": 0.5, "noise_sin": 0.0, "constant": float(p["constant"])}
    unknown = [o for o in p["observables"] if o not in obs]
    if unknown:
        raise ConfigInvalid("params.observables", f"unknown observable {unknown[0]!r}")
    battery = {o: obs[o] for o in p["observables"]}
    targets = {o: exact.get(o) for o in battery}
    if isinstance(path, rds.CyclePath) and "state" in battery:
        targets["state"] = float(np.mean(path.states == p["state"]))
    reports = sl.birkhoff_qs_lln(path, battery, p["horizons"], p["delta"], p["n_paths"], p["m"], p["epsilon"],
                                 cfg.seed, targets, workers=cfg.workers)
    result, checks, rows = {}, {}, []
    for name, rep in reports.items():
        result[name] = {"target": rep.target, "rows": rep.rows(), "max_fraction": [rep.max_fraction(T) for T in rep.horizons]}
        checks[f"max_fraction:{name}"] = rep.max_fraction() <= p["max_fraction"]
        checks[f"nonincreasing:{name}"] = rep.nonincreasing()
        rows += [(name, T, rep.max_fraction(T)) for T in rep.horizons]
    return Outcome(result, checks, {"qs_fraction.csv": (("observable", "T", "max_fraction"), rows)})


def _exp_wiener_shift(cfg, p, base) -> Outcome:
    tau, h = p["tau"], p["h"]
    battery = wn.standard_battery(tau)
    names = list(battery)

    def task(i):
        F, target = battery[names[i]]
        return wn.birkhoff_shift_average(F, tau, p["N"], h, cfg.seed + i, target, p["block"], p["bootstrap"])

    avgs = map_tasks(task, range(len(names)), cfg.workers)
    F = battery["positive"][0]
    covs = wn.decorrelation(F, F, tau, p["lags"], p["N"], h, cfg.seed, p["bootstrap"])
    ks = wn.regeneration_ks(h=h, horizon=max(1.0, 4 * tau), n=p["ks_n"], shift_by=tau, seed=cfg.seed)
    checks = {f"orbit_average:{a.functional}": a.passed for a in avgs}
    for c in covs:
        if c.lag >= F.depth:
            checks[f"decorrelation:lag{c.lag}"] = abs(c.z) <= 4
    checks["regeneration_ks"] = ks.passed
    result = {
        "averages": [a.summary() for a in avgs],
        "decorrelation": [{"lag": c.lag, "cov": c.cov, "stderr": c.stderr} for c in covs],
        "ks": {"statistic": ks.statistic, "critical": ks.critical, "pvalue": ks.pvalue},
    }
    series = {f"running_{a.functional}.csv": (("n", "running_average"), list(zip(*a.running))) for a in avgs}
    return Outcome(result, checks, series)


def _exp_canonical_sample(cfg, p, base) -> Outcome:
    P = build_matrix(cfg.system, base)
    if p["rho"] is None:
        pms = mk.find_periodic_measures(P, 1)
        rho = np.mean([pm.vectors[0] for pm in pms], axis=0)
    else:
        rho = np.asarray(p["rho"], dtype=float)
    times = [int(t) for t in p["times"]]
    paths = mk.sample_canonical(P, rho, times, p["n_paths"], cfg.seed)
    exact = mk.fdd(P, rho, times)
    idx = np.ravel_multi_index(paths.T, exact.shape)
    freq = np.bincount(idx, minlength=exact.size) / len(paths)
    pe = exact.ravel()
    se = np.sqrt(np.maximum(pe * (1 - pe), 1e-300) / len(paths))
    z = np.where(pe > 0, (freq - pe) / se, np.where(freq > 0, np.inf, 0.0))
    first = lambda tup: (tup[:, 0] == 0).astype(float)  # noqa: E731
    sh = mk.check_shift_invariance_canonical(P, rho, first, times, p["shift"], p["n_paths"], cfg.seed)
    ue = sl.UpperExpectation.from_vectors([rho], 1)
    phi = np.zeros(exact.shape)
    phi.flat[0] = 1.0
    result = {
        "rho": rho.tolist(),
        "times": times,
        "max_cell_z": float(np.max(np.abs(z))),
        "shift_invariance": {"mean_raw": sh.mean_raw, "mean_shifted": sh.mean_shifted, "z": sh.z_score},
        "canonical_expectation_first_cell": sl.canonical_sublinear_expect(P, ue, times, phi),
        "exact_first_cell": float(pe[0]),
    }
    checks = {"fdd_cells": bool(np.max(np.abs(z)) <= p["z_max"]), "shift_invariance": sh.passed}
    return Outcome(result, checks)


RUNNERS = {
    "noise-check": _exp_noise_check,
    "rds-verify": _exp_rds_verify,
    "estimate-measure": _exp_estimate_measure,
    "ps-ergodic": _exp_ps_ergodic,
    "condition-a": _exp_condition_a,
    "sublinear-invariance": _exp_sublinear_invariance,
    "sublinear-ergodic": _exp_sublinear_ergodic,
    "birkhoff-qs": _exp_birkhoff_qs,
    "wiener-shift": _exp_wiener_shift,
    "canonical-sample": _exp_canonical_sample,
}


# ---------------------------------------------------------------- output


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return json.dumps(None)
    text = format(x, ".17g")
    if all(c not in text for c in ".eE"):
        text += ".0"
    return text


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with sorted keys and floats at 17 significant digits (non-finite -> null)."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_plot_data(series, path, header=("x", "y")) -> Path:
    """Write ``series`` as CSV with a header row and LF line endings."""
    rows = list(series)
    if not rows:
        raise EmptySeries(f"refusing to write empty series to {path}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


@dataclass
class RunResult:
    manifest: dict
    result: dict
    wall_time: float
    exit_code: int


def run(cfg: ExperimentConfig, out_dir=None, base_dir=None) -> RunResult:
    """Execute ``cfg`` and write its outputs under ``out_dir`` (skipped when ``None``)."""
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    params = resolved_params(cfg)
    start = time.perf_counter()
    try:
        outcome = RUNNERS[cfg.experiment](cfg, params, base)
    except ConfigInvalid:
        raise
    except ErgoperiodError as exc:
        module = type(exc).__module__.split(".")[-1]
        raise RuntimeError(f"experiment {cfg.experiment}: {module}: {type(exc).__name__}: {exc}") from exc
    wall = time.perf_counter() - start
    passed = all(bool(v) for v in outcome.checks.values())
    artifacts = ["result.json"] + sorted(outcome.series)
    manifest = {
        "experiment": cfg.experiment,
        "schema_version": cfg.schema_version,
        "config_digest": cfg.digest(),
        "tool_version": __version__,
        "seed": cfg.seed,
        "params": params,
        "checks": {k: bool(v) for k, v in sorted(outcome.checks.items())},
        "passed": passed,
        "artifacts": artifacts,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(dumps(outcome.result) + "\n", encoding="utf-8", newline="\n")
        for name, (header, rows) in sorted(outcome.series.items()):
            emit_plot_data(rows, out / name, header)
        (out / "manifest.json").write_text(dumps(manifest) + "\n", encoding="utf-8", newline="\n")
        (out / "timing.json").write_text(dumps({"wall_time_s": wall}) + "\n", encoding="utf-8", newline="\n")
    return RunResult(manifest, outcome.result, wall, 0 if passed else 1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ergoperiod", description="Run a periodic-measure experiment from a JSON config.")
    ap.add_argument("--config", help="experiment config (JSON)")
    ap.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    ap.add_argument("--workers", type=int, help="worker threads (default: $ERGOPERIOD_WORKERS or the config)")
    ap.add_argument("--out", help="output directory (default: config output.dir or ./out)")
    ap.add_argument("--list-experiments", action="store_true", help="print experiment kinds and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_experiments:
        for name in EXPERIMENTS:
            print(name)
        return 0
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        raw = json.loads(Path(args.config).read_text())
        if isinstance(raw, dict):
            if args.seed is not None:
                raw["seed"] = args.seed
            workers = args.workers
            if workers is None and os.environ.get("ERGOPERIOD_WORKERS"):
                try:
                    workers = int(os.environ["ERGOPERIOD_WORKERS"])
                except ValueError:
                    raise ConfigInvalid("ERGOPERIOD_WORKERS", "must be an integer") from None
            if workers is not None:
                raw["workers"] = workers
        else:
            raise ConfigInvalid("config", "top level must be an object")
        cfg = parse_config(raw)
        out = args.out or cfg.output.get("dir", "out")
        res = run(cfg, out, Path(args.config).resolve().parent)
    except ConfigInvalid as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced with experiment context
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if res.exit_code == 0 else "FAIL"
    for name, ok in res.manifest["checks"].items():
        print(f"{'ok ' if ok else 'BAD'} {name}")
    print(f"{status} {cfg.experiment} -> {out}")
    return res.exit_code
