"""Command-line experiment runner.

Every subcommand builds an :class:`ExperimentConfig`, turns it into CSV rows
plus a summary dict, and stamps the config hash into each row. With
``--out`` the CSV goes to that path and the summary (including the full
config) to ``<out>.json``; ``regenerate`` replays a CSV from that sidecar.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analysis, sim
from .env import (Environment, EnvironmentSpec, certification_margin, deep_valley_census,
                  default_K7, good_window, is_t_good, kappa_solve, potential, random_spec,
                  slow_time_scale, validate_spec, valleys)
from .errors import NoRootError, SpiderError, ValidationError, WindowTooSmallError
from .spider import build_graph, parse_L, random_local_config_set

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything needed to regenerate an output file.

    ``env`` and ``L`` hold file contents, not paths, so the hash pins the
    actual model. ``params`` carries subcommand-specific settings.
    """

    command: str
    env: str | None = None
    L: str | None = None
    seed: int = 0
    replicas: int = 200
    budget: int = 1_000_000
    checkpoints: list | None = None
    mode: str = "rate-exact"
    quenched: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def canonical(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def spec(self, bypass=None):
        if self.env is None:
            raise ValueError("no environment given (--env)")
        bypass = self.params.get("bypass", False) if bypass is None else bypass
        return EnvironmentSpec.from_text(self.env, require_nestling=not bypass)

    def local_set(self):
        if self.L is None:
            raise ValueError("no local configuration set given (--L)")
        return parse_L(self.L)


def _read_text(value, base=None):
    """File contents for a path; multi-line strings pass through as inline text."""
    if value is None or "\n" in value:
        return value
    path = value if base is None or os.path.isabs(value) else os.path.join(base, value)
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _int_list(text):
    return [int(float(v)) for v in text.split(",") if v.strip()]


def build_config(args) -> ExperimentConfig:
    """Merge ``--config`` JSON (if any) with explicit command-line flags."""
    base = {}
    base_dir = None
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
        base_dir = os.path.dirname(os.path.abspath(args.config))
    params = dict(base.get("params", {}))
    for key in ("t", "eps", "K7", "nu", "gamma2", "n", "tol", "instances", "max_levels",
                "max_shapes", "max_legs", "seeds", "start", "level", "n_boot", "kappa",
                "lookahead", "window", "bypass", "cells", "inflate"):
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    if "cells" in params:
        params["cells"] = [
            {"env": _read_text(c["env"], base_dir), "L": _read_text(c["L"], base_dir)}
            if isinstance(c, dict) else {"env": _read_text(c, base_dir), "L": None}
            for c in params["cells"]
        ]
    cfg = ExperimentConfig(
        command=args.command,
        env=_read_text(args.env if args.env is not None else base.get("env"), base_dir),
        L=_read_text(args.L if args.L is not None else base.get("L"), base_dir),
        seed=args.seed if args.seed is not None else int(base.get("seed", 0)),
        replicas=args.replicas if args.replicas is not None else int(base.get("replicas", 200)),
        budget=args.budget if args.budget is not None else int(base.get("budget", 1_000_000)),
        checkpoints=(_int_list(args.checkpoints) if args.checkpoints
                     else base.get("checkpoints")),
        mode=sim.ClockMode.parse(args.mode or base.get("mode", "rate-exact")).value,
        quenched=args.quenched if args.quenched is not None else bool(base.get("quenched", False)),
        params=params,
    )
    return cfg


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def render_csv(cfg: ExperimentConfig, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash"] + list(header))
    h = cfg.hash
    for row in rows:
        w.writerow([h] + [_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_outputs(cfg, header, rows, summary, out):
    text = render_csv(cfg, header, rows)
    summary = _jsonable(dict(summary, config_hash=cfg.hash, config=cfg.to_dict()))
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        with open(out + ".json", "w", encoding="utf-8", newline="") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return text, summary


# --------------------------------------------------------------------------
# commands: each returns (header, rows, summary)
# --------------------------------------------------------------------------


def run_validate(cfg):
    spec = cfg.spec()
    report = validate_spec(spec)
    summary = {"environment": report.to_dict()}
    rows = [("env", name, passed) for name, passed in report.conditions.items()]
    try:
        summary["kappa"] = kappa_solve(spec)
    except NoRootError as exc:
        summary["kappa"] = None
        summary["kappa_error"] = str(exc)
    if cfg.L is not None:
        L = cfg.local_set()
        summary["L"] = {"N": L.n_legs, "size": len(L), "diameter": L.diameter,
                        "r1": list(L.r1), "r2": list(L.r2)}
        if summary["kappa"] is not None:
            summary["kappa_over_N"] = summary["kappa"] / L.n_legs
        rows += [("L", "i", True), ("L", "ii", True)]
    summary["ok"] = report.ok
    return ("scope", "condition", "passed"), rows, summary


def run_kappa(cfg):
    spec = cfg.spec()
    k = kappa_solve(spec)
    row = [k, spec.mean_log_rho]
    header = ["kappa", "mean_log_rho"]
    summary = {"kappa": k, "mean_log_rho": spec.mean_log_rho}
    if cfg.L is not None:
        n = cfg.local_set().n_legs
        row += [n, k / n]
        header += ["N", "kappa_over_N"]
        summary["kappa_over_N"] = k / n
    return header, [row], summary


def _start_state(cfg, L):
    start = cfg.params.get("start")
    if start is None:
        return tuple(L.r1)
    return tuple(int(v) for v in str(start).split(","))


def _checkpoints(cfg):
    return sorted(set(cfg.checkpoints)) if cfg.checkpoints else sim.log_grid(cfg.budget)


def _simulate_runs(cfg, spec, L):
    return sim.run_replicas(L, spec, _start_state(cfg, L), cfg.replicas, cfg.budget,
                            mode=cfg.mode, seed=cfg.seed, quenched=cfg.quenched,
                            checkpoints=_checkpoints(cfg))


def run_simulate(cfg):
    spec, L = cfg.spec(), cfg.local_set()
    runs = _simulate_runs(cfg, spec, L)
    rows = []
    for r in range(runs.replicas):
        for c, jumps in enumerate(runs.checkpoints):
            rows.append((r, runs.ckpt_t[r, c], runs.ckpt_s1[r, c], int(jumps)))
    level = float(cfg.params.get("level", 0.95))
    n_boot = int(cfg.params.get("n_boot", 2000))
    est = sim.speed_estimators(runs, level=level, n_boot=n_boot)
    summary = {"speed": est.to_dict(),
               "checkpoint_v_time": sim.checkpoint_speeds(runs).tolist(),
               "checkpoints": runs.checkpoints.tolist(),
               "mean_epochs": float(runs.n_epochs.mean())}
    try:
        summary["kappa"] = kappa_solve(spec)
        summary["kappa_over_N"] = summary["kappa"] / L.n_legs
    except NoRootError:
        summary["kappa"] = None
    return ("replica", "t", "S1", "jumps"), rows, summary


SWEEP_HEADER = ("cell", "kappa", "N", "kappa_over_N", "v_time", "v_time_lo", "v_time_hi",
                "v_regen", "v_regen_lo", "v_regen_hi", "censored_fraction", "replicas",
                "level", "exponent", "exponent_lo", "exponent_hi", "status")


def _sweep_cell(args):
    index, cell, cfg_dict = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    cfg.env, cfg.L = cell["env"], cell["L"] or cfg.L
    level = float(cfg.params.get("level", 0.95))
    n_boot = int(cfg.params.get("n_boot", 2000))
    row = {"cell": index, "status": "ok", "replicas": cfg.replicas, "level": level}
    try:
        spec, L = cfg.spec(), cfg.local_set()
        row["N"] = L.n_legs
        try:
            row["kappa"] = kappa_solve(spec)
            row["kappa_over_N"] = row["kappa"] / L.n_legs
        except NoRootError:
            pass
        runs = _simulate_runs(cfg, spec, L)
        est = sim.speed_estimators(runs, level=level, n_boot=n_boot)
        row.update(v_time=est.v_time, v_time_lo=est.v_time_ci[0], v_time_hi=est.v_time_ci[1],
                   v_regen=est.v_regen, v_regen_lo=est.v_regen_ci[0],
                   v_regen_hi=est.v_regen_ci[1], censored_fraction=est.censored_fraction)
        try:
            fit = sim.exponent_fit(runs, level=level, n_boot=n_boot)
            row.update(exponent=fit.slope, exponent_lo=fit.ci[0], exponent_hi=fit.ci[1])
        except SpiderError as exc:
            row["status"] = f"exponent: {exc}"
    except (SpiderError, ValueError) as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(cfg, workers=1):
    cells = cfg.params.get("cells") or []
    jobs = [(i, c, cfg.to_dict()) for i, c in enumerate(cells)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    results.sort(key=lambda r: (r.get("kappa_over_N", math.inf), r["cell"]))
    rows = [[r.get(k) for k in SWEEP_HEADER] for r in results]
    return SWEEP_HEADER, rows, {"cells": len(results),
                                "failed": sum(r["status"] != "ok" for r in results)}


def run_landscape(cfg):
    spec = cfg.spec()
    p = cfg.params
    n_legs = cfg.local_set().n_legs if cfg.L is not None else 1
    t = float(p.get("t", 1e6))
    eps = float(p.get("eps", 0.1))
    try:
        kappa = kappa_solve(spec) if p.get("kappa") is None else float(p["kappa"])
    except NoRootError:
        kappa = math.inf
    mlr = spec.mean_log_rho
    K7 = float(p["K7"]) if p.get("K7") is not None else (
        default_K7(spec, n_legs) if mlr != 0 else 1.0)
    xl, xr = good_window(t, K7)
    lookahead = int(p.get("lookahead") or max(1, xr - xl))
    nu = p.get("nu")
    horizon = math.floor(t ** float(nu)) if nu is not None else 0
    margin = certification_margin(t, kappa, mlr) if mlr < 0 else 0
    window = int(p.get("window") or max(xr + lookahead, horizon + margin, 1))

    env = Environment(spec, cfg.seed)
    prof = potential(env, min(xl, 0), max(window, xr + lookahead))
    good = is_t_good(prof, t, eps=eps, K7=K7, n_legs=n_legs, lookahead=lookahead)
    summary = {"t": t, "kappa": kappa, "t_good": good.to_dict(), "Lambda_t": good.verdict,
               "s0": slow_time_scale(t, float(p.get("gamma2", 1.0)))}
    rows = []
    deep = set()
    # the census needs a boundary at or past t^nu: widen the scan until one appears
    for attempt in range(6):
        try:
            dec = valleys(prof, t, kappa, window=window, margin=margin)
        except WindowTooSmallError as exc:
            summary.update(n_valleys=0, valleys_note=str(exc))
            return ("valley", "boundary", "depth", "deep"), rows, summary
        if nu is None or not kappa / n_legs < float(nu) < 1:
            if nu is not None:
                summary["census_error"] = f"need kappa/N < nu < 1, got nu = {nu}"
            break
        try:
            census = deep_valley_census(dec, t, kappa, float(nu), n_legs)
        except WindowTooSmallError as exc:
            summary["census_error"] = str(exc)
            window += max(margin, window // 2)
            prof = potential(env, min(xl, 0), max(window, xr + lookahead))
            continue
        summary.pop("census_error", None)
        summary["census"] = census.to_dict()
        deep = set(census.deep_valleys)
        break
    summary["valleys"] = dec.to_dict()
    summary["n_valleys"] = dec.n_valleys
    for i, depth in enumerate(dec.depths):
        rows.append((i, dec.boundaries[i], depth, i in deep))
    return ("valley", "boundary", "depth", "deep"), rows, summary


def random_gap_instance(gen, max_shapes=4, max_legs=3, max_levels=8):
    """Random (L, env, window) with a validated law."""
    n_legs = int(gen.integers(1, max_legs + 1))
    # connectivity plus a forward edge needs |L| >= N
    size = 1 if n_legs == 1 else int(gen.integers(n_legs, max(n_legs, max_shapes) + 1))
    L = random_local_config_set(gen, n_legs, size, spread=2)
    spec = random_spec(gen)
    env = Environment(spec, int(gen.integers(0, 2**31)))
    a = int(gen.integers(-5, 6))
    b = a + int(gen.integers(0, max_levels))
    return L, env, (a, b)


def run_gapcheck(cfg):
    p = cfg.params
    gen = np.random.default_rng(cfg.seed)
    rows = []
    n = int(p.get("instances", 200))
    for i in range(n):
        L, env, (a, b) = random_gap_instance(gen, int(p.get("max_shapes", 4)),
                                             int(p.get("max_legs", 3)), int(p.get("max_levels", 8)))
        a, b = analysis.inflated_window(L, (a, b), int(p.get("inflate", 0)))
        g = build_graph(L, env, (a, b))
        if g.n < 2:
            rows.append((i, L.n_legs, len(L), a, b, g.n, None, None, None, "trivial"))
            continue
        rep = analysis.congestion_bound(analysis.canonical_paths(g), env, with_exact=True)
        rows.append((i, L.n_legs, len(L), a, b, g.n, rep.A, rep.bound, rep.exact_gap,
                     "ok" if rep.holds else "violated"))
    checked = [r for r in rows if r[-1] != "trivial"]
    summary = {"instances": n, "checked": len(checked),
               "violations": sum(r[-1] == "violated" for r in checked)}
    return ("instance", "N", "L_size", "a", "b", "vertices", "A", "bound", "exact_gap",
            "status"), rows, summary


def run_transience(cfg):
    p = cfg.params
    bypass = bool(p.get("bypass", False))
    spec = cfg.spec(bypass)
    if not bypass:
        report = validate_spec(spec)
        if not report.ok:
            raise ValidationError(f"conditions {report.failed} fail (use --bypass)")
    L = cfg.local_set()
    n = int(p.get("n", 500))
    tol = float(p.get("tol", 1e-3))
    rows = []
    for k in range(int(p.get("seeds", 20))):
        env = Environment(spec, cfg.seed + k)
        rs = analysis.resistance_series(L, env, n, tol=tol)
        rows.append((cfg.seed + k, n, rs.partial_sums[-1], rs.majorant[-1], rs.tail_fraction,
                     rs.verdict))
    summary = {"converged": sum(r[-1] == "converged" for r in rows), "environments": len(rows)}
    return ("env_seed", "n", "R_n", "majorant", "tail_fraction", "verdict"), rows, summary


RUNNERS = {
    "validate": run_validate,
    "kappa": run_kappa,
    "simulate": run_simulate,
    "sweep": run_sweep,
    "landscape": run_landscape,
    "gapcheck": run_gapcheck,
    "transience": run_transience,
}


def execute(cfg: ExperimentConfig, workers: int = 1):
    if cfg.command == "sweep":
        return run_sweep(cfg, workers)
    return RUNNERS[cfg.command](cfg)


def regenerate(csv_path, out):
    """Re-run the config stored next to ``csv_path`` and write the CSV to ``out``."""
    with open(csv_path + ".json", encoding="utf-8") as fh:
        side = json.load(fh)
    cfg = ExperimentConfig.from_dict(side["config"])
    if cfg.hash != side["config_hash"]:
        raise ValidationError("sidecar config does not match its recorded hash")
    with open(csv_path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) > 1 and rows[1][0] != cfg.hash:
        raise ValidationError("CSV config_hash column does not match the sidecar")
    header, body, summary = execute(cfg)
    return write_outputs(cfg, header, body, summary, out)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _common(parser):
    g = parser.add_argument_group("run options")
    g.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    g.add_argument("--replicas", type=int, default=None, help="replica count (default 200)")
    g.add_argument("--budget", type=int, default=None, help="jump budget per replica")
    g.add_argument("--checkpoints", default=None, help="comma-separated jump counts")
    g.add_argument("--mode", choices=[m.value for m in sim.ClockMode], default=None)
    q = g.add_mutually_exclusive_group()
    q.add_argument("--quenched", dest="quenched", action="store_true", default=None,
                   help="one environment shared by all replicas")
    q.add_argument("--annealed", dest="quenched", action="store_false",
                   help="fresh environment per replica (default)")
    g.add_argument("--out", default=None, help="CSV path; summary goes to <out>.json")
    g.add_argument("--config", default=None, help="JSON config; flags override it")
    g.add_argument("--workers", type=int, default=1, help="process pool size for sweeps")
    g.add_argument("--env", default=None, help="environment law file")
    g.add_argument("--L", default=None, help="local configuration set file")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="spiderwalk", description="Molecular spiders in random environments.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub_validate = sub.add_parser("validate", help="check the environment law and L")
    sub_kappa = sub.add_parser("kappa", help="solve E[rho^kappa] = 1")
    sub_sim = sub.add_parser("simulate", help="run replicas and estimate the speed")
    sub_sim.add_argument("--start", default=None, help="start state, e.g. 0,1 (default r1)")
    sub_sim.add_argument("--level", type=float, default=None)
    sub_sim.add_argument("--n-boot", dest="n_boot", type=int, default=None)

    sub_sweep = sub.add_parser("sweep", help="speed table over a grid of laws")
    sub_sweep.add_argument("--cell", dest="cells", action="append", default=None,
                           help="environment file for one cell (repeatable)")
    sub_sweep.add_argument("--start", default=None)
    sub_sweep.add_argument("--level", type=float, default=None)
    sub_sweep.add_argument("--n-boot", dest="n_boot", type=int, default=None)

    sub_land = sub.add_parser("landscape", help="valleys, t-good check and deep-valley census")
    sub_land.add_argument("--t", type=float, default=None)
    sub_land.add_argument("--eps", type=float, default=None)
    sub_land.add_argument("--K7", type=float, default=None)
    sub_land.add_argument("--nu", type=float, default=None)
    sub_land.add_argument("--kappa", type=float, default=None)
    sub_land.add_argument("--gamma2", type=float, default=None,
                          help="constant in the slow time scale s0 (default 1)")
    sub_land.add_argument("--lookahead", type=int, default=None)
    sub_land.add_argument("--window", type=int, default=None)
    sub_land.add_argument("--bypass", action="store_true", default=None,
                          help="skip the nestling requirement")

    sub_gap = sub.add_parser("gapcheck", help="compare exact gaps with the canonical-path bound")
    sub_gap.add_argument("--instances", type=int, default=None)
    sub_gap.add_argument("--max-levels", dest="max_levels", type=int, default=None)
    sub_gap.add_argument("--max-shapes", dest="max_shapes", type=int, default=None)
    sub_gap.add_argument("--max-legs", dest="max_legs", type=int, default=None)
    sub_gap.add_argument("--inflate", type=int, default=None,
                         help="extend each window right by this many diameters of L")

    sub_tr = sub.add_parser("transience", help="resistance series over environment seeds")
    sub_tr.add_argument("--n", type=int, default=None)
    sub_tr.add_argument("--tol", type=float, default=None)
    sub_tr.add_argument("--seeds", type=int, default=None)
    sub_tr.add_argument("--bypass", action="store_true", default=None,
                        help="skip validation (e.g. symmetric laws)")

    sub_regen = sub.add_parser("regenerate", help="replay a CSV from its sidecar config")
    sub_regen.add_argument("csv")

    for p in (sub_validate, sub_kappa, sub_sim, sub_sweep, sub_land, sub_gap, sub_tr, sub_regen):
        _common(p)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        if args.command == "regenerate":
            if not args.out:
                raise ValueError("regenerate needs --out")
            text, _ = regenerate(args.csv, args.out)
            return EXIT_OK
        cfg = build_config(args)
        header, rows, summary = execute(cfg, workers=args.workers)
        text, summary = write_outputs(cfg, header, rows, summary, args.out)
        if not args.out:
            sys.stdout.write(text)
        print(json.dumps(summary if args.command in ("validate", "kappa") else
                         {k: v for k, v in summary.items() if k != "config"},
                         indent=2, sort_keys=True), file=sys.stdout if args.out else sys.stderr)
        if args.command == "validate" and not summary.get("ok", False):
            return EXIT_INVALID
        return EXIT_OK
    except (ValidationError, NoRootError) as exc:
        print(f"validation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SpiderError, ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
