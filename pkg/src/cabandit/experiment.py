"""Experiment configuration and runners behind the command line.

A configuration is a JSON object::

    {
      "mode": "simulate",              # simulate | replay | tune | diagnose | synth-log
      "horizon": 1000,                 # rounds per simulated run
      "env": {...},                    # EnvConfig fields (simulate, diagnose)
      "vary_env": true,                # derive a fresh environment per seed
      "policies": [{"name": "cab", "params": {"alpha": 0.1}}],
      "seeds": [0, 1, 2, 3, 4],
      "stride": 100,
      "jobs": 1,
      "out": "out",
      "log": {"path": null, "format": "raw", "catalog": null, "c": 25,
              "strict": false, "require_positive": false},
      "tune": {"grid": {"alpha": [0.0, 0.01, ...]}, "split": 0.2}
    }

:func:`resolve_config` fills every default (policy parameters included) so
the resolved document reproduces a run exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import CLUB, DynUCB, LinUCBMultiple, LinUCBSingle, RandomPolicy
from .cab import CAB
from .env import EnvConfig, generate_env
from .exceptions import ConfigError
from .io import ingest, write_catalog, write_replay_log
from .metrics import RegretTrace, downsample, regret_ratio_vs_ran
from .replay import ALPHA_GRID, ReplayLog, replay, synthesize_random_log, tune
from .sparse import SpCAB

__all__ = [
    "POLICIES",
    "MODES",
    "CURVE_HEADER",
    "make_policy",
    "resolve_config",
    "simulate_seed",
    "neighborhood_sum_bound",
    "run_experiment",
]

POLICIES = {
    "cab": CAB,
    "spcab": SpCAB,
    "linucb-single": LinUCBSingle,
    "linucb-multiple": LinUCBMultiple,
    "club": CLUB,
    "dynucb": DynUCB,
    "ran": RandomPolicy,
}
MODES = ("simulate", "replay", "tune", "diagnose", "synth-log")
CURVE_HEADER = ["policy", "seed", "index", "metric", "value"]

_TOP_KEYS = {"mode", "horizon", "env", "vary_env", "policies", "seeds", "stride", "jobs", "out", "log", "tune"}
_LOG_DEFAULTS = {"path": None, "format": "raw", "catalog": None, "c": 25, "strict": False, "require_positive": False}
_TUNE_DEFAULTS = {"grid": {"alpha": ALPHA_GRID}, "split": 0.2}


def make_policy(name: str, params: dict | None = None, random_state=None):
    """Instantiate a registered policy by name."""
    if name not in POLICIES:
        raise ConfigError(f"policies.name: unknown policy {name!r}; choose from {sorted(POLICIES)}")
    cls = POLICIES[name]
    params = dict(params or {})
    valid = set(cls().get_params())
    unknown = sorted(set(params) - valid)
    if unknown:
        raise ConfigError(f"policies.params: {name} has no parameter(s) {unknown}")
    return cls(**params, random_state=random_state)


def _check_int(field, value, low):
    if isinstance(value, bool) or not isinstance(value, int) or value < low:
        raise ConfigError(f"{field}: expected an integer >= {low}, got {value!r}")
    return value


def resolve_config(raw: dict) -> dict:
    """Validate ``raw`` and materialise every default.

    Raises :class:`ConfigError` naming the offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown field(s) {unknown}")
    mode = raw.get("mode", "simulate")
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}, got {mode!r}")

    try:
        env = EnvConfig.from_dict(raw.get("env") or {})
    except TypeError as exc:
        raise ConfigError(f"env: {exc}") from None
    except ConfigError as exc:
        raise ConfigError(f"env: {exc}") from None

    log = dict(_LOG_DEFAULTS)
    extra = sorted(set(raw.get("log") or {}) - set(_LOG_DEFAULTS))
    if extra:
        raise ConfigError(f"log: unknown field(s) {extra}")
    log.update(raw.get("log") or {})
    if log["format"] not in ("raw", "replay"):
        raise ConfigError(f"log.format: expected 'raw' or 'replay', got {log['format']!r}")
    _check_int("log.c", log["c"], 1)
    if mode in ("replay", "tune", "synth-log"):
        for key in ("path", "catalog"):
            p = log[key]
            if key == "path" and p is None:
                raise ConfigError("log.path: required in this mode")
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"log.{key}: file not found: {p}")
        if mode == "synth-log" and log["format"] != "raw":
            raise ConfigError("log.format: synth-log reads a raw log")

    tune_cfg = dict(_TUNE_DEFAULTS)
    extra = sorted(set(raw.get("tune") or {}) - set(_TUNE_DEFAULTS))
    if extra:
        raise ConfigError(f"tune: unknown field(s) {extra}")
    tune_cfg.update(raw.get("tune") or {})
    if not isinstance(tune_cfg["grid"], dict) or not tune_cfg["grid"]:
        raise ConfigError("tune.grid: expected a nonempty object of parameter lists")
    if not 0.0 < float(tune_cfg["split"]) < 1.0:
        raise ConfigError("tune.split: expected a value in (0, 1)")

    horizon = _check_int("horizon", raw.get("horizon", 1000), 1)
    seeds = raw.get("seeds", [0, 1, 2, 3, 4])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: expected a nonempty list of integers")
    for s in seeds:
        _check_int("seeds", s, 0)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: duplicates are not allowed")

    specs = raw.get("policies", [{"name": "cab"}])
    if not isinstance(specs, list) or not specs:
        raise ConfigError("policies: expected a nonempty list")
    policies, labels = [], set()
    for spec in specs:
        if isinstance(spec, str):
            spec = {"name": spec}
        extra = sorted(set(spec) - {"name", "label", "params"})
        if extra:
            raise ConfigError(f"policies: unknown field(s) {extra}")
        name = spec.get("name")
        params = dict(spec.get("params") or {})
        if "random_state" in params:
            raise ConfigError("policies.params.random_state: set through seeds")
        est = make_policy(name, params)
        full = est.get_params()
        full.pop("random_state", None)
        if "horizon" in full and full["horizon"] is None and mode in ("simulate", "diagnose"):
            full["horizon"] = horizon
        label = spec.get("label", name)
        if label in labels:
            raise ConfigError(f"policies.label: duplicate label {label!r}")
        labels.add(label)
        policies.append({"name": name, "label": label, "params": full})

    return {
        "mode": mode,
        "horizon": horizon,
        "env": env.to_dict(),
        "vary_env": bool(raw.get("vary_env", True)),
        "policies": policies,
        "seeds": list(seeds),
        "stride": _check_int("stride", raw.get("stride", 100), 1),
        "jobs": _check_int("jobs", raw.get("jobs", 1), 1),
        "out": str(raw.get("out", "out")),
        "log": log,
        "tune": {"grid": tune_cfg["grid"], "split": float(tune_cfg["split"])},
    }


# simulation ------------------------------------------------------------------
def _env_for_seed(cfg: dict, seed: int):
    env_cfg = EnvConfig.from_dict(cfg["env"])
    if cfg["vary_env"]:
        derived = int(np.random.SeedSequence([env_cfg.seed, seed]).generate_state(1)[0])
        env_cfg = dataclasses.replace(env_cfg, seed=derived)
    return generate_env(env_cfg)


def neighborhood_sum_bound(T: int, c: int, expected_m: float, n: int, delta: float = 0.05) -> float:
    """Right-hand side ``2 T c E[m] / n + 12 log(log T / delta)`` for the sum of ``1/|N|``."""
    return 2.0 * T * c * expected_m / n + 12.0 * math.log(math.log(T) / delta)


def simulate_seed(cfg: dict, seed: int, diagnose: bool = False) -> dict:
    """Run every configured policy on one seeded environment and round stream.

    All policies see the same rounds; each gets a noise generator with the
    same seed. Returns per-policy arrays ``regret`` and ``expected_payoff``;
    with ``diagnose`` also the true inverse neighbourhood sizes and, for the
    CAB family, whether the chosen candidate's estimated neighbourhood was
    exact.
    """
    env = _env_for_seed(cfg, seed)
    T = cfg["horizon"]
    stream = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED, 1]))
    rounds = [env.sample_round(stream, t) for t in range(1, T + 1)]
    out = {"env_seed": env.cfg.seed, "policies": {}}
    for spec in cfg["policies"]:
        pol = make_policy(spec["name"], spec["params"], random_state=seed).reset(env.n_users, env.d)
        noise = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED, 2]))
        regret = np.empty(T)
        mean_payoff = np.empty(T)
        inv_size = np.empty(T) if diagnose else None
        exact = [] if diagnose and isinstance(pol, CAB) else None
        U = env.model.vectors
        for k, r in enumerate(rounds):
            X = r.contexts
            chosen = pol.select(r.user, X, r.t)
            if exact is not None:
                member = pol._pending[4][0][:, chosen]
                est = frozenset(np.flatnonzero(member).tolist())
                exact.append(est == env.true_neighborhood(r.user, X[chosen]))
            pol.observe(r.user, X, chosen, env.payoff(r.user, X[chosen], noise))
            means = X @ U[r.user]
            regret[k] = max(means.max() - means[chosen], 0.0)
            mean_payoff[k] = means[chosen]
            if inv_size is not None:
                inv_size[k] = 1.0 / len(env.true_neighborhood(r.user, X[chosen]))
        res = {"regret": regret, "expected_payoff": mean_payoff}
        if diagnose:
            res["inverse_neighborhood"] = inv_size
            if exact is not None:
                res["neighborhood_exact"] = np.asarray(exact)
        out["policies"][spec["label"]] = res
    if diagnose:
        out["expected_m"] = env.expected_clusters(
            np.random.default_rng(np.random.SeedSequence([seed, 0x5EED, 3])), n_samples=2000
        )
        out["n_users"] = env.n_users
        out["c"] = env.cfg.c
    return out


# replay ----------------------------------------------------------------------
def _load_log(cfg: dict):
    log = cfg["log"]
    return ingest(log["path"], log["format"], catalog=log["catalog"])


def _replay_log_for_seed(cfg: dict, data, seed: int) -> ReplayLog:
    if isinstance(data, ReplayLog):
        return data
    log = cfg["log"]
    return synthesize_random_log(
        data, log["c"], seed, strict=log["strict"], require_positive=log["require_positive"]
    )


def _running_mean(payoffs: np.ndarray) -> np.ndarray:
    return np.cumsum(payoffs) / np.arange(1, payoffs.size + 1) if payoffs.size else payoffs


def _replay_seed(cfg: dict, data, seed: int) -> dict:
    log = _replay_log_for_seed(cfg, data, seed)
    out = {"policies": {}, "n_events": len(log)}
    for spec in cfg["policies"]:
        params = dict(spec["params"])
        if params.get("horizon", 0) is None:
            params["horizon"] = max(len(log), 1)
        res = replay(make_policy(spec["name"], params, random_state=seed), log)
        out["policies"][spec["label"]] = {"payoffs": res.payoffs, "retained": res.n_retained}
    return out


def _tune_seed(cfg: dict, data, seed: int) -> dict:
    log = _replay_log_for_seed(cfg, data, seed)
    out = {"policies": {}, "n_events": len(log)}
    for spec in cfg["policies"]:
        params = dict(spec["params"])
        if params.get("horizon", 0) is None:
            params["horizon"] = max(len(log), 1)
        template = make_policy(spec["name"], params, random_state=seed)
        grid = {k: v for k, v in cfg["tune"]["grid"].items() if k in params}
        if not grid:
            grid = {"random_state": [seed]}
        result = tune(template, log, grid, split=cfg["tune"]["split"])
        best = {k: v for k, v in result.best_params.items() if k != "random_state"}
        out["policies"][spec["label"]] = {
            "payoffs": result.test.payoffs,
            "retained": result.test.n_retained,
            "best_params": best,
        }
    return out


# driver ----------------------------------------------------------------------
def _run_seeds(fn, args_per_seed, jobs: int):
    if jobs <= 1 or len(args_per_seed) <= 1:
        return [fn(*a) for a in args_per_seed]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *a) for a in args_per_seed]
        # merged in seed order regardless of completion order
        return [f.result() for f in futures]


def _fmt(value) -> str:
    return repr(float(value))


def _summary_block(per_seed: dict) -> dict:
    metrics = sorted({m for v in per_seed.values() for m in v})
    block = {"per_seed": per_seed, "mean": {}, "stddev": {}}
    for m in metrics:
        vals = [v[m] for v in per_seed.values() if m in v and v[m] is not None]
        if vals:
            block["mean"][m] = float(np.mean(vals))
            block["stddev"][m] = float(np.std(vals))
    return block


def run_experiment(cfg: dict, out_dir=None) -> dict:
    """Execute a resolved config, write the output files and return the summary.

    Writes ``curves.csv`` (header ``policy,seed,index,metric,value``),
    ``summary.json`` (final metrics per policy and seed, with mean and
    population standard deviation) and ``resolved_config.json``.
    """
    out = Path(out_dir if out_dir is not None else cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    mode, stride, seeds = cfg["mode"], cfg["stride"], cfg["seeds"]
    rows: list = []
    summary: dict = {"mode": mode, "policies": {}}
    per_seed: dict = {p["label"]: {} for p in cfg["policies"]}

    if mode in ("simulate", "diagnose"):
        diagnose = mode == "diagnose"
        results = _run_seeds(simulate_seed, [(cfg, s, diagnose) for s in seeds], cfg["jobs"])
        ran_label = next((p["label"] for p in cfg["policies"] if p["name"] == "ran"), None)
        for seed, res in zip(seeds, results):
            for spec in cfg["policies"]:
                label = spec["label"]
                r = res["policies"][label]
                trace = RegretTrace(r["regret"], seed=seed)
                idx, vals = downsample(trace.cumulative, stride)
                rows += [(label, seed, int(i), "cum_regret", v) for i, v in zip(idx, vals)]
                final = {
                    "cum_regret": float(trace.cumulative[-1]),
                    "mean_expected_payoff": float(r["expected_payoff"].mean()),
                }
                if ran_label is not None:
                    ran = RegretTrace(res["policies"][ran_label]["regret"])
                    ratio = regret_ratio_vs_ran(trace, ran)
                    keep = (ratio[:, 0] % stride) == 0
                    rows += [(label, seed, int(i), "regret_ratio", v) for i, v in ratio[keep]]
                    final["regret_ratio"] = float(ratio[-1, 1]) if len(ratio) else None
                if diagnose:
                    T = cfg["horizon"]
                    lhs = float(r["inverse_neighborhood"].sum())
                    rhs = neighborhood_sum_bound(T, res["c"], res["expected_m"], res["n_users"])
                    final.update(inverse_neighborhood_sum=lhs, inverse_neighborhood_bound=rhs)
                    if "neighborhood_exact" in r:
                        final["neighborhood_exact_rate"] = float(r["neighborhood_exact"].mean())
                per_seed[label][str(seed)] = final
            if diagnose:
                summary.setdefault("expected_m", {})[str(seed)] = res["expected_m"]
    elif mode in ("replay", "tune"):
        data = _load_log(cfg)
        fn = _replay_seed if mode == "replay" else _tune_seed
        results = _run_seeds(fn, [(cfg, data, s) for s in seeds], cfg["jobs"])
        for seed, res in zip(seeds, results):
            for spec in cfg["policies"]:
                label = spec["label"]
                r = res["policies"][label]
                curve = _running_mean(r["payoffs"])
                idx, vals = downsample(curve, stride)
                rows += [(label, seed, int(i), "ctr", v) for i, v in zip(idx, vals)]
                final = {
                    "ctr": float(curve[-1]) if curve.size else None,
                    "retained": r["retained"],
                    "retention": r["retained"] / res["n_events"] if res["n_events"] else 0.0,
                }
                if "best_params" in r:
                    final["best_params"] = r["best_params"]
                per_seed[label][str(seed)] = final
    elif mode == "synth-log":
        data = _load_log(cfg)
        log = _replay_log_for_seed(cfg, data, seeds[0])
        write_replay_log(log, out / "replay_log.csv")
        write_catalog(log.catalog, out / "catalog.csv")
        summary["n_events"] = len(log)
        summary["c"] = cfg["log"]["c"]
        per_seed = {}

    for label, block in per_seed.items():
        numeric = {s: {k: v for k, v in m.items() if not isinstance(v, dict)} for s, m in block.items()}
        summary["policies"][label] = _summary_block(numeric)
        extras = {s: m["best_params"] for s, m in block.items() if "best_params" in m}
        if extras:
            summary["policies"][label]["best_params"] = extras

    with open(out / "curves.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for label, seed, i, metric, v in rows:
            w.writerow([label, seed, i, metric, _fmt(v)])
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "resolved_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
