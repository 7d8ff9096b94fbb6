"""Command-line entry point.

Examples
--------
::

    cabandit --mode simulate --policy cab,linucb-multiple,ran --seeds 0,1,2 --out runs/sim
    cabandit --config runs/sim/resolved_config.json --out runs/again
    cabandit --mode replay --log events.csv --c 15 --policy cab,ran --out runs/replay

Exit status is 0 on success, 1 for configuration errors (unknown policy or
flag, missing file, invalid value) and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import ConfigError
from .experiment import MODES, POLICIES, resolve_config, run_experiment

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: config error: {message}\n")


def _seeds(text: str) -> list[int]:
    """``0,1,2`` or a range ``0-4``."""
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(a) for a in text.split("-"))
            return list(range(lo, hi + 1))
        return [int(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cabandit", description="Context-aware clustering of bandits: simulation and replay.")
    p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--policy", help=f"comma-separated names from {sorted(POLICIES)}")
    p.add_argument("--alpha", type=float, help="exploration coefficient for every UCB-type policy")
    p.add_argument("--gamma", type=float, help="gap parameter for cab/spcab (default 0.2)")
    p.add_argument("--seeds", type=_seeds, help="seed list, e.g. 0,1,2 or 0-4")
    p.add_argument("--jobs", type=int, help="worker processes for seeds")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--stride", type=int, help="emit every stride-th curve point (default 100)")
    p.add_argument("--horizon", type=int, help="rounds per simulated run")
    p.add_argument("--log", metavar="PATH", help="event log CSV (replay, tune, synth-log)")
    p.add_argument("--log-format", choices=("raw", "replay"))
    p.add_argument("--catalog", metavar="PATH", help="item catalog CSV")
    p.add_argument("--c", type=int, help="candidate list size for synthesized logs")
    return p


def _merge(args, raw: dict) -> dict:
    cfg = dict(raw)
    for key in ("mode", "seeds", "jobs", "out", "stride", "horizon"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    if args.policy is not None:
        cfg["policies"] = [{"name": n.strip()} for n in args.policy.split(",") if n.strip()]
    log = dict(cfg.get("log") or {})
    for key, value in (("path", args.log), ("format", args.log_format), ("catalog", args.catalog), ("c", args.c)):
        if value is not None:
            log[key] = value
    if log:
        cfg["log"] = log
    specs = cfg.get("policies", [{"name": "cab"}])
    merged = []
    for spec in specs:
        spec = {"name": spec} if isinstance(spec, str) else dict(spec)
        params = dict(spec.get("params") or {})
        cls = POLICIES.get(spec.get("name"))
        names = set(cls().get_params()) if cls else set()
        if args.alpha is not None and "alpha" in names:
            params["alpha"] = args.alpha
        if args.gamma is not None and "gamma" in names:
            params["gamma"] = args.gamma
        if params:
            spec["params"] = params
        merged.append(spec)
    cfg["policies"] = merged
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = {}
        if args.config:
            path = Path(args.config)
            if not path.is_file():
                raise ConfigError(f"--config: file not found: {path}")
            try:
                raw = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--config: invalid JSON in {path}: {exc}") from None
        cfg = resolve_config(_merge(args, raw))
    except ConfigError as exc:
        print(f"cabandit: config error: {exc}", file=sys.stderr)
        return 1
    try:
        run_experiment(cfg)
    except ConfigError as exc:
        print(f"cabandit: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"cabandit: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
