"""Command-line front end: ``invrl {fit,eval,train,replay,curves}``.

Relative output paths are resolved against ``$INVRL_OUTPUT_DIR`` when it is
set.  Usage problems (bad flags, missing or malformed inputs) exit with 2,
training divergence with 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from invrl.baselines import baseline_controller
from invrl.catalog import CatalogError, CatalogRecord, ItemCatalog, load_catalog
from invrl.env import ClusterSpec, ConfigError
from invrl.evaluate import ExperimentConfig, evaluate, export_report
from invrl.ppo.config import PRESETS, PpoConfig, load_config, preset
from invrl.ppo.losses import TrainingDivergence
from invrl.ppo.trainer import (CURVE_FIELDS, PolicyController, load_checkpoint, save_checkpoint,
                               write_curve)
from invrl.stochastic import HistoryError, fit_demand_mle, fit_lead_time_mle, read_history_csv

log = logging.getLogger("invrl")

OUTPUT_ENV = "INVRL_OUTPUT_DIR"
MINMAX_MODES = {"up_to": dict(review="position", quantity="up_to"),
                "literal": dict(review="on_hand", quantity="fixed")}
MANIFEST_FORMAT = "invrl-train-manifest"


class UsageError(Exception):
    pass


def out_path(path) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def in_path(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    return p


# -- fit --------------------------------------------------------------------

def cmd_fit(args) -> int:
    demands = read_history_csv(in_path(args.demands), "value", "demand")
    leads = read_history_csv(in_path(args.leads), "lead_time", "lead_time")
    base = load_catalog(in_path(args.base)) if args.base else None
    records = []
    for item in sorted(set(demands) | set(leads), key=str):
        if item not in demands or item not in leads:
            raise UsageError(f"item {item!r} needs both demand and lead-time history")
        dm = fit_demand_mle(demands[item])
        lm = fit_lead_time_mle(leads[item])
        costs = dict(C_o=0.0, C_h=0.0, C_s=0.0)
        if base is not None and item in base:
            ref = base[item]
            costs = dict(C_o=ref.C_o, C_h=ref.C_h, C_s=ref.C_s)
        records.append(CatalogRecord(id=item, b=dm.b, mu=dm.mu, p=lm.p, **costs))
    ItemCatalog(records).save(out_path(args.out))
    log.info("fitted %d item(s) -> %s", len(records), args.out)
    return 0


# -- eval -------------------------------------------------------------------

def _experiment(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(in_path(args.config))
        overrides = {k: v for k, v in dict(horizon=args.horizon, replications=args.reps,
                                           seed=args.seed, catalog=args.catalog).items()
                     if v is not None}
        return ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    if not args.items:
        raise UsageError("give --items or --config")
    clusters = ([dict(items=args.items, capacity=args.capacity)] if args.shared
                else [dict(items=[i], capacity=args.capacity) for i in args.items])
    return ExperimentConfig(
        clusters=clusters, policy=getattr(args, "policy", "ppo"),
        horizon=args.horizon or 240, replications=args.reps or 100,
        seed=args.seed if args.seed is not None else 0,
        alpha=getattr(args, "alpha", 0.90), minmax_mode=getattr(args, "minmax_mode", "up_to"),
        shortage_unit=args.shortage_unit, catalog=args.catalog)


def _catalog(cfg: ExperimentConfig):
    return load_catalog(in_path(cfg.catalog)) if cfg.catalog else load_catalog()


def cmd_eval(args) -> int:
    cfg = _experiment(args)
    kind = cfg.policy
    if kind not in ("minmax", "oracle", "zero"):
        raise UsageError(f"eval supports minmax, oracle and zero policies, got {kind!r}")
    kwargs = MINMAX_MODES[cfg.minmax_mode] if kind == "minmax" else {}

    def factory(cluster, _k):
        return baseline_controller(kind, cluster, cfg.alpha, **kwargs)

    report = evaluate(cfg, factory, threads=args.threads, catalog=_catalog(cfg),
                      trace_path=out_path(args.trace) if args.trace else None)
    _write_report(report, args)
    return 0


def _write_report(report, args):
    path = out_path(args.out)
    export_report(report, path)
    if args.plot:
        from invrl.plotting import cost_bars
        cost_bars(report.rows, out_path(args.plot))
    for r in report.rows:
        log.info("%s %s %s: cost %.6g (sd %.3g), shortages %.3g", r.scope, r.id, r.policy,
                 r.mean_cost, r.std_cost, r.mean_shortages)


# -- train ------------------------------------------------------------------

def _ppo_config(args) -> PpoConfig:
    if args.ppo_config:
        cfg = load_config(in_path(args.ppo_config))
    else:
        cfg = preset(args.preset, args.scale)
    changes = {}
    if args.hidden:
        changes["hidden"] = tuple(args.hidden)
    if args.workers:
        changes["num_workers"] = args.workers
    for item in args.set or []:
        key, _, raw = item.partition("=")
        if key not in PpoConfig.__dataclass_fields__:
            raise UsageError(f"unknown PPO setting {key!r}")
        try:
            changes[key] = json.loads(raw)
        except json.JSONDecodeError:
            changes[key] = raw
    return cfg.replace(**changes) if changes else cfg


def cmd_train(args) -> int:
    from invrl.ippo import baseline_reward_lines, ippo_train

    cfg = _ppo_config(args)
    catalog = load_catalog(in_path(args.catalog)) if args.catalog else load_catalog()
    missing = [i for i in args.items if i not in catalog]
    if missing:
        raise UsageError(f"item id(s) {missing} not in catalog")
    groups = [args.items] if args.shared else [[i] for i in args.items]
    root = out_path(Path(args.out_dir) / "manifest.json").parent
    top = {"format": MANIFEST_FORMAT, "version": 1, "runs": []}
    for ids in groups:
        cluster = ClusterSpec.from_items(catalog.items(ids), capacity=args.capacity)
        tag = "-".join(str(i) for i in ids)
        run_dir = root / f"cluster_{tag}"
        run_dir.mkdir(parents=True, exist_ok=True)
        lines = baseline_reward_lines(cluster, ("minmax", "oracle"), args.baseline_reps,
                                      args.seed, cfg.horizon)

        def progress(row, _res):
            log.info("[%s] iter %d  steps %d  reward %.4g  normalized %.3f", tag,
                     row["iteration"], row["timesteps"], row["mean_reward"],
                     row["normalized_reward"])

        try:
            agents, curve, result = ippo_train(cluster, cfg, args.seed, args.timesteps,
                                               normalizer=lines["_normalizer"], callback=progress)
        except TrainingDivergence as exc:
            if exc.last_good is not None:
                bad = run_dir / f"agent_{exc.agent}_last_good.json"
                save_checkpoint(bad, _arch_for(cfg, cluster), exc.last_good,
                                _amap_for(cfg, cluster))
            log.error("training diverged: %s", exc)
            return 1
        agent_files = []
        for k in range(len(agents.params)):
            name = "shared" if cfg.share_policy else str(ids[k])
            ck = f"agent_{name}.json"
            save_checkpoint(run_dir / ck, agents.arch, agents.params[k], agents.action_map,
                            extra={"item_id": None if cfg.share_policy else ids[k]})
            cv = f"agent_{name}_curve.csv"
            write_curve(run_dir / cv, result.agent_curves[k])
            agent_files.append({"checkpoint": ck, "curve": cv})
        write_curve(run_dir / "curve.csv", curve)
        manifest = {
            "format": MANIFEST_FORMAT, "version": 1, "items": ids, "capacity": cluster.capacity,
            "catalog": str(Path(args.catalog).resolve()) if args.catalog else None,
            "seed": args.seed, "timesteps": args.timesteps, "config": cfg.to_dict(),
            "preset": args.preset, "scale": args.scale,
            "include_space": agents.arch.obs_dim == 5, "agents": agent_files,
            "curve": "curve.csv", "baselines": lines,
        }
        _dump_json(run_dir / "manifest.json", manifest)
        top["runs"].append(f"cluster_{tag}/manifest.json")
    _dump_json(root / "manifest.json", top)
    return 0


def _arch_for(cfg, cluster):
    from invrl.ppo.network import Architecture
    amap = _amap_for(cfg, cluster)
    return Architecture(5 if cluster.shared else 4, cfg.hidden, cfg.head, amap.n_actions,
                        cfg.vf_share_layers, cfg.activation)


def _amap_for(cfg, cluster):
    from invrl.ppo.trainer import ActionMap
    return ActionMap(cfg.head, cluster.capacity, cfg.action_stride, cfg.normalize_actions)


def _dump_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_manifest(path):
    path = in_path(path)
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != MANIFEST_FORMAT:
        raise UsageError(f"{path}: not a training manifest")
    if "runs" in data:
        return [m for run in data["runs"] for m in _load_manifest(path.parent / run)]
    data["_dir"] = path.parent
    return [data]


# -- replay -----------------------------------------------------------------

def cmd_replay(args) -> int:
    manifests = _load_manifest(args.checkpoint)
    catalog_path = args.catalog or manifests[0].get("catalog")
    catalog = load_catalog(in_path(catalog_path)) if catalog_path else load_catalog()
    controllers = []
    clusters = []
    for m in manifests:
        loaded = [load_checkpoint(m["_dir"] / a["checkpoint"]) for a in m["agents"]]
        arch, _, amap, _ = loaded[0]
        cfg = PpoConfig.from_dict({**m["config"], "hidden": tuple(m["config"]["hidden"])})
        clusters.append(dict(items=m["items"], capacity=m["capacity"]))
        controllers.append((arch, [p for _, p, _, _ in loaded], amap, m["include_space"],
                            cfg.share_policy))
    exp = ExperimentConfig(clusters=clusters, policy="ppo", horizon=args.horizon or 240,
                           replications=args.reps or 100,
                           seed=args.seed if args.seed is not None else 0,
                           shortage_unit=args.shortage_unit, catalog=catalog_path)

    def factory(cluster, k):
        arch, params, amap, space, share = controllers[k]
        return PolicyController(arch, params, amap, cluster, include_space=space,
                                deterministic=not args.stochastic, share_policy=share)

    report = evaluate(exp, factory, threads=args.threads, catalog=catalog,
                      trace_path=out_path(args.trace) if args.trace else None)
    _write_report(report, args)
    return 0


# -- curves -----------------------------------------------------------------

PLOT_FIELDS = ["series", "iteration", "timesteps", "mean_reward", "normalized_reward"]


def cmd_curves(args) -> int:
    series = {}
    lines = {}
    for path in args.inputs:
        for m in _load_manifest(path):
            label = "items " + ",".join(str(i) for i in m["items"]) + f" seed {m['seed']}"
            norm = m["baselines"]["_normalizer"]
            horizon = m["config"]["horizon"]
            rows = _read_curve(m["_dir"] / m["curve"])
            for r in rows:
                r["normalized_reward"] = float(r["mean_reward"]) / horizon / norm
            series[label] = rows
            for name, value in m["baselines"].items():
                if not name.startswith("_"):
                    lines.setdefault(name, value)
    last = max((float(r["timesteps"]) for rows in series.values() for r in rows), default=0.0)
    with open(out_path(args.out), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_FIELDS)
        for label, rows in series.items():
            for r in rows:
                w.writerow([label, r["iteration"], r["timesteps"], r["mean_reward"],
                            repr(r["normalized_reward"])])
        for name, value in lines.items():
            for t in (0, int(last)):
                w.writerow([name, "", t, "", repr(float(value))])
    if args.plot:
        from invrl.plotting import learning_curves
        learning_curves(series, out_path(args.plot), lines)
    return 0


def _read_curve(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CURVE_FIELDS:
            raise UsageError(f"{path}: unexpected curve columns {reader.fieldnames}")
        return list(reader)


# -- parser -----------------------------------------------------------------

def _eval_flags(p, policy=True):
    p.add_argument("--catalog", help="catalog JSON (default: bundled 50 items)")
    p.add_argument("--horizon", type=int, help="periods per replication (default 240)")
    p.add_argument("--reps", type=int, help="replications (default 100)")
    p.add_argument("--seed", type=int, help="root seed (default 0)")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--plot", help="also write a cost bar chart (PNG)")
    p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--trace", help="write a per-period trace of the first replication")
    p.add_argument("--shortage-unit", choices=("events", "units"), default="events")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invrl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit demand and lead-time laws from history CSVs")
    p.add_argument("--demands", required=True, help="CSV with item_id, period, value")
    p.add_argument("--leads", required=True, help="CSV with item_id, order_id, lead_time")
    p.add_argument("--out", required=True, help="fitted catalog JSON")
    p.add_argument("--base", help="catalog supplying unit costs for fitted items")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a baseline policy")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--items", type=int, nargs="+")
    p.add_argument("--shared", action="store_true", help="items share one storage")
    p.add_argument("--capacity", type=int, help="storage capacity override")
    p.add_argument("--policy", choices=("minmax", "oracle", "zero"), default="minmax")
    p.add_argument("--minmax-mode", choices=sorted(MINMAX_MODES), default="up_to")
    p.add_argument("--alpha", type=float, default=0.90, help="MinMax service level")
    _eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train PPO agents (one per item)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="ppo_c")
    p.add_argument("--scale", choices=("desk", "full"), default="desk")
    p.add_argument("--ppo-config", help="PPO config JSON (overrides --preset)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one PPO setting (JSON value)")
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--workers", type=int, help="parallel rollout environments")
    p.add_argument("--catalog")
    p.add_argument("--items", type=int, nargs="+", required=True)
    p.add_argument("--shared", action="store_true", help="train the items as one cluster")
    p.add_argument("--capacity", type=int)
    p.add_argument("--timesteps", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline-reps", type=int, default=20)
    p.add_argument("--out-dir", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("replay", help="evaluate trained agents from a manifest")
    p.add_argument("--checkpoint", required=True, help="manifest.json written by train")
    p.add_argument("--stochastic", action="store_true", help="sample instead of the mode")
    _eval_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("curves", help="merge training curves and baseline lines")
    p.add_argument("--inputs", nargs="+", required=True, help="manifest.json files")
    p.add_argument("--out", required=True, help="plot-ready CSV")
    p.add_argument("--plot", help="also write a PNG figure")
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, CatalogError, HistoryError, FileNotFoundError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"invrl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
