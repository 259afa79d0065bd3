"""Command-line interface: simulate, fit, summarize, predict, km.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import posterior as post
from .data import BinGrid, load_csv, normalize_times, read_frame, schema_of
from .errors import ConfigError, DataError, InvalidTreeError, NumericalError, TreedHazardsError
from .sampler import (Invalid, MoveConfig, NodeCache, Sample, SamplerConfig, TreeModel, evaluate,
                      run)
from .simgen import SCENARIOS, SimSpec, simulate
from .tree import TreePriorParams, describe, from_records, leaf_assignment, to_records

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# Every configurable setting, with its default, under a flat dotted key.
DEFAULTS = {
    "data.path": None,
    "data.schema": None,
    "data.time_col": "time",
    "data.status_col": "status",
    "model.bins": 100,
    "model.tau_scale": 10.0,
    "model.length_scale": 1.0,
    "prior.gamma": 0.95,
    "prior.theta": 2.0,
    "prior.min_node_size": 25,
    "moves.p_grow": 0.25,
    "moves.p_prune": 0.25,
    "moves.p_change": 0.25,
    "moves.p_swap": 0.25,
    "moves.p_adjacent": 0.75,
    "tempering.chains": 8,
    "tempering.t_min": 0.1,
    "tempering.swap_interval": 10,
    "mcmc.iterations": 10_000,
    "mcmc.burn_in": None,
    "mcmc.thin": 1,
    "mcmc.log_every": 100,
    "run.seed": 0,
    "run.out": "fit_out",
}

INT_KEYS = {"model.bins", "prior.min_node_size", "tempering.chains", "tempering.swap_interval",
            "mcmc.iterations", "mcmc.burn_in", "mcmc.thin", "mcmc.log_every", "run.seed"}
FLOAT_KEYS = {"model.tau_scale", "model.length_scale", "prior.gamma", "prior.theta",
              "moves.p_grow", "moves.p_prune", "moves.p_change", "moves.p_swap",
              "moves.p_adjacent", "tempering.t_min"}

SAMPLES_FILE = "samples.jsonl"
CONFIG_FILE = "config.json"
DIAG_FILE = "diagnostics.log"


class UsageError(ConfigError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- configuration ---------------------------------------------------------------

def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object of dotted keys")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return raw


def resolve_config(file_cfg: dict | None, overrides: dict) -> dict:
    """Defaults, then the config file, then command-line flags."""
    cfg = dict(DEFAULTS)
    cfg.update(file_cfg or {})
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return {k: _coerce(k, v) for k, v in cfg.items()}


def sampler_config(cfg: dict) -> SamplerConfig:
    try:
        moves = MoveConfig(cfg["moves.p_grow"], cfg["moves.p_prune"], cfg["moves.p_change"],
                           cfg["moves.p_swap"], cfg["moves.p_adjacent"])
        prior = TreePriorParams(cfg["prior.gamma"], cfg["prior.theta"], cfg["prior.min_node_size"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["mcmc.burn_in"] is not None and cfg["mcmc.burn_in"] >= cfg["mcmc.iterations"]:
        raise ConfigError("iterations must exceed burn-in")
    return SamplerConfig(iterations=cfg["mcmc.iterations"], burn_in=cfg["mcmc.burn_in"],
                         thin=cfg["mcmc.thin"], chains=cfg["tempering.chains"],
                         t_min=cfg["tempering.t_min"], swap_interval=cfg["tempering.swap_interval"],
                         moves=moves, prior=prior, bins=cfg["model.bins"],
                         tau_scale=cfg["model.tau_scale"], length_scale=cfg["model.length_scale"],
                         log_every=cfg["mcmc.log_every"])


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or key not in DEFAULTS:
            raise ConfigError(f"bad --set entry {item!r}; expected KEY=VALUE with a known key")
        out[key] = None if value.lower() in ("", "none", "null") else value
    return out


def load_data(cfg: dict):
    if not cfg["data.path"]:
        raise ConfigError("no data file given (--data or data.path)")
    return load_csv(cfg["data.path"], cfg["data.schema"], cfg["data.time_col"],
                    cfg["data.status_col"])


# -- sample stream -------------------------------------------------------------

def sample_record(s: Sample, data) -> dict:
    return {"iter": s.iteration, "log_posterior": s.log_posterior, "log_prior": s.log_prior,
            "log_likelihood": s.log_likelihood, "n_leaves": s.n_leaves,
            "tree": to_records(s.tree, data.names, data.kinds, data.labels)}


def read_samples(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except FileNotFoundError:
        raise DataError(f"no such sample stream: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read sample stream {path}: {exc}") from exc


def map_record(records: list[dict]) -> dict:
    best = None
    for r in records:
        if best is None or r["log_posterior"] > best["log_posterior"]:
            best = r
    if best is None:
        raise DataError("empty sample stream")
    return best


def _fit_dir_config(samples_path, explicit) -> dict:
    path = explicit or Path(samples_path).with_name(CONFIG_FILE)
    if not Path(path).exists():
        raise ConfigError(f"config echo {path} not found; pass --config")
    return load_config(path)


def map_fits(cfg: dict, data, record: dict):
    """MAP tree from a sample record and its leaf fits recomputed from the data."""
    tree = from_records(record["tree"], data.names, data.kinds, data.labels)
    norm = normalize_times(data)
    sc = sampler_config(cfg)
    model = TreeModel(norm, BinGrid(sc.bins), sc.prior, sc.tau_scale, sc.length_scale)
    ev = evaluate(model, NodeCache(model), tree)
    if isinstance(ev, Invalid):
        raise InvalidTreeError(f"MAP tree is inconsistent with the data: {ev.reason}")
    return tree, ev.leaf_fits(model), model


# -- commands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = SimSpec(args.scenario, args.n, args.censoring, 0 if args.seed is None else args.seed)
    sim = simulate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim.write(out / "data.csv", out / "truth.csv")
    with open(out / "schema.json", "w", encoding="utf-8") as fh:
        json.dump(schema_of(sim.data), fh, indent=2)
    print(f"wrote {sim.data.n} rows to {out / 'data.csv'} "
          f"(censored {sim.data.censoring_proportion:.4f})")
    return EXIT_OK


def cmd_fit(args) -> int:
    file_cfg = load_config(args.config) if args.config else None
    overrides = {"data.path": args.data, "data.schema": args.schema, "run.seed": args.seed,
                 "run.out": args.out, "mcmc.iterations": args.iterations,
                 "mcmc.burn_in": args.burn_in, "tempering.chains": args.chains}
    overrides.update(_parse_set(args.set))
    cfg = resolve_config(file_cfg, overrides)
    sc = sampler_config(cfg)
    data = load_data(cfg)
    out = Path(cfg["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / CONFIG_FILE, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger = logging.getLogger("treedhazards.sampler")
    handler = logging.FileHandler(out / DIAG_FILE, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    old_level = logger.level
    logger.setLevel(logging.INFO)
    try:
        result = run(data, sc, cfg["run.seed"], threads=args.threads)
        for kind, st in result.move_stats[0].items():
            logger.info(f"final move={kind} proposed={st.proposed} accepted={st.accepted} "
                        f"invalid={st.invalid}")
        logger.info(f"final pt_proposed={result.swaps_proposed} pt_accepted={result.swaps_accepted}")
    finally:
        logger.removeHandler(handler)
        logger.setLevel(old_level)
        handler.close()
    with open(out / SAMPLES_FILE, "w", encoding="utf-8") as fh:
        for s in result.samples:
            fh.write(json.dumps(sample_record(s, data)) + "\n")
    print(f"wrote {len(result.samples)} samples to {out / SAMPLES_FILE}")
    return EXIT_OK


def _summary_inputs(args):
    cfg = _fit_dir_config(args.samples, args.config)
    if args.data:
        cfg["data.path"] = args.data
    if args.schema:
        cfg["data.schema"] = args.schema
    cfg = resolve_config(cfg, {"run.seed": args.seed})
    data = load_data(cfg)
    rec = map_record(read_samples(args.samples))
    tree, fits, model = map_fits(cfg, data, rec)
    return cfg, data, rec, tree, fits, model


def cmd_summarize(args) -> int:
    cfg, data, rec, tree, fits, model = _summary_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scale = model.data.time_scale
    curves = post.leaf_curves(fits, model.grid, scale, args.draws, args.level, cfg["run.seed"])
    post.write_curves(list(enumerate(curves)), out / "curves.csv")
    with open(out / "map_tree.txt", "w", encoding="utf-8") as fh:
        fh.write(f"log_posterior={rec['log_posterior']!r} iteration={rec['iter']}\n")
        fh.write(describe(tree, data.names, data.labels) + "\n\n")
        fh.write(post.format_leaf_table(fits) + "\n")
    with open(out / "map_tree.json", "w", encoding="utf-8") as fh:
        json.dump({"log_posterior": rec["log_posterior"], "iter": rec["iter"],
                   "tree": rec["tree"]}, fh, indent=2)
    pd.DataFrame(post.leaf_table(fits)).to_csv(out / "leaves.csv", index=False,
                                               float_format="%.17g", lineterminator="\n")
    pd.DataFrame({"row": np.arange(data.n), "leaf_id": leaf_assignment(tree, data.X)}).to_csv(
        out / "assignments.csv", index=False, lineterminator="\n")
    print(describe(tree, data.names, data.labels))
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg, data, rec, tree, fits, model = _summary_inputs(args)
    frame = read_frame(args.rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if len(frame) == 0:
        logging.getLogger(__name__).warning("no rows to predict in %s", args.rows)
        print(f"warning: {args.rows} has no rows; nothing written", file=sys.stderr)
        return EXIT_OK
    X = data.encode_rows(frame)
    for i, row in enumerate(X):
        curve = post.predict(tree, fits, row, model.grid, model.data.time_scale, args.draws,
                             args.level, cfg["run.seed"])
        post.write_curves([(tree.route(row), curve)], out / f"row_{i}.csv")
    print(f"wrote {len(X)} prediction files to {out}")
    return EXIT_OK


def cmd_km(args) -> int:
    data = load_csv(args.data, args.schema, args.time_col, args.status_col)
    if args.groups:
        g = read_frame(args.groups)
        col = "leaf_id" if "leaf_id" in g.columns else ("group" if "group" in g.columns else None)
        if col is None or len(g) != data.n:
            raise DataError("group file needs a leaf_id or group column with one row per observation")
        groups = g[col].to_numpy()
    else:
        groups = np.zeros(data.n, dtype=object)
        groups[:] = "all"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for key in sorted(set(groups.tolist()), key=str):
        m = groups == key
        km = post.kaplan_meier(data.times[m], data.status[m], args.level)
        rows.append({"group": key, "time": 0.0, "survival": 1.0, "lower": 1.0, "upper": 1.0,
                     "n_risk": int(m.sum()), "n_events": 0})
        for t, s, lo, hi, nr, ne in zip(km.times, km.survival, km.lower, km.upper, km.n_risk,
                                        km.n_events):
            rows.append({"group": key, "time": float(t), "survival": float(s), "lower": float(lo),
                         "upper": float(hi), "n_risk": int(nr), "n_events": int(ne)})
    pd.DataFrame(rows).to_csv(out / "km.csv", index=False, float_format="%.17g",
                              lineterminator="\n")
    print(f"wrote {out / 'km.csv'}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="treedhazards", description="Bayesian treed hazards models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp, out_default):
        sp.add_argument("--config", help="JSON file of dotted-key settings")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--threads", type=int, default=1)

    s = sub.add_parser("simulate", help="write a simulated dataset and its truth table")
    s.add_argument("scenario", choices=[c for c in SCENARIOS if c != "custom"])
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--censoring", type=float, default=None)
    common(s, "sim_out")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="run the sampler and write the sample stream")
    f.add_argument("--data")
    f.add_argument("--schema")
    f.add_argument("--iterations", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--chains", type=int)
    f.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any dotted config key")
    common(f, None)
    f.set_defaults(func=cmd_fit)

    for name, fn, helptext in (("summarize", cmd_summarize, "MAP tree, leaf curves and table"),
                               ("predict", cmd_predict, "survival curves for new rows")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--samples", required=True, help="sample stream written by fit")
        sp.add_argument("--data", help="dataset (default: the one recorded in the config echo)")
        sp.add_argument("--schema")
        sp.add_argument("--draws", type=int, default=post.DEFAULT_DRAWS)
        sp.add_argument("--level", type=float, default=post.DEFAULT_LEVEL)
        if name == "predict":
            sp.add_argument("--rows", required=True, help="CSV of covariate rows")
        common(sp, f"{name}_out")
        sp.set_defaults(func=fn)

    k = sub.add_parser("km", help="Kaplan-Meier curves, optionally per group")
    k.add_argument("--data", required=True)
    k.add_argument("--schema")
    k.add_argument("--groups", help="CSV with a leaf_id or group column, one row per observation")
    k.add_argument("--time-col", default="time")
    k.add_argument("--status-col", default="status")
    k.add_argument("--level", type=float, default=post.DEFAULT_LEVEL)
    common(k, "km_out")
    k.set_defaults(func=cmd_km)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InvalidTreeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC
    except TreedHazardsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
