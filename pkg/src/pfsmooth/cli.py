"""Command-line front end: ``simulate``, ``run`` and ``analyze``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import analysis
from .filter import DegenerateCloudError
from .io import (
    MODEL_NAMES,
    format_float,
    make_model,
    make_params,
    params_to_dict,
    read_key_values,
    read_observations,
    write_key_values,
    write_observations,
    write_states,
)
from .mcmc import ChainConfig, ExtractionMode, log_random_walk, run_chain
from .model import simulate_data
from .smoother import DegenerateBackwardKernelError

logger = logging.getLogger("pfsmooth")

EXIT_USAGE = 1
EXIT_NUMERICAL = 2

RUN_DEFAULTS = {
    "model": "growth",
    "params": None,
    "data": None,
    "sampler": "imh",
    "mode": "gt,gtrb,bs,bsm",
    "particles": "500",
    "sweeps": "5000",
    "traj": "25",
    "seed": None,
    "burn_in": "0",
    "max_rej": "15",
    "out": "run",
    "chains": "1",
    "backward": "auto",
    "pmmh_params": None,
    "rw_scale": "0.2",
    "prior_shape": "1.0",
    "prior_scale": "1.0",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _resolve_seed(seed):
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
        print(f"seed: {seed}")
    return int(seed)


def _load_params(model_name, path):
    values = read_key_values(path) if path else {}
    return make_params(model_name, values)


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    params = _load_params(args.model, args.params)
    model = make_model(args.model, params)
    seed = _resolve_seed(args.seed)
    x, obs = simulate_data(model, args.n, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_observations(obs, out / "observations.csv", args.model)
    write_states(x, out / "latent.csv", args.model)
    write_key_values(params_to_dict(params), out / "params.txt")
    print(f"wrote {len(obs)} observations to {out / 'observations.csv'}")
    return 0


# --------------------------------------------------------------------------
# run


def _merge_run_config(args) -> dict:
    cfg = dict(RUN_DEFAULTS)
    if args.config:
        file_cfg = read_key_values(args.config)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is None:
            continue
        cfg[key] = ",".join(value) if isinstance(value, list) else str(value)
    if args.dump_trajectories:
        cfg["dump_trajectories"] = "1"
    if args.no_timing:
        cfg["no_timing"] = "1"
    return cfg


def _parse_modes(text, default_j):
    modes = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item.lower() == "bs":
            item = f"bs:{default_j}"
        modes.append(ExtractionMode.parse(item))
    if not modes:
        raise UsageError("mode list is empty")
    return tuple(modes)


def _pmmh_setup(model_name, params, cfg):
    names = [n.strip() for n in (cfg["pmmh_params"] or "").split(",") if n.strip()]
    if not names:
        raise UsageError("pmmh needs --pmmh-params naming the unknown variances")
    if model_name == "hmm":
        raise UsageError("pmmh is available for the growth and lgss models")
    for name in names:
        if not name.endswith("_var") and not name.endswith("_sq"):
            raise UsageError(f"pmmh parameter {name!r} is not a variance")
        if not hasattr(params, name):
            raise UsageError(f"model {model_name} has no parameter {name!r}")
    a, b = float(cfg["prior_shape"]), float(cfg["prior_scale"])
    prior = stats.invgamma(a, scale=b)

    def prior_logdensity(theta):
        return float(np.sum(prior.logpdf(np.asarray(theta))))

    def factory(theta):
        return make_model(model_name, replace(params, **dict(zip(names, map(float, theta)))))

    theta0 = [getattr(params, n) for n in names]
    pm = log_random_walk(prior_logdensity, float(cfg["rw_scale"]))
    return names, factory, pm, theta0


def _chain_job(job):
    cfg, seed, out = job
    return _run_one_chain(cfg, seed, Path(out))


def _run_one_chain(cfg, seed, out: Path) -> dict:
    model_name = cfg["model"]
    params = _load_params(model_name, cfg["params"])
    obs = read_observations(cfg["data"], discrete=model_name == "hmm")
    modes = _parse_modes(cfg["mode"], int(cfg["traj"]))
    sampler = cfg["sampler"]
    param_model = None
    names = []
    if sampler == "pmmh":
        names, model, param_model, theta0 = _pmmh_setup(model_name, params, cfg)
    else:
        model = make_model(model_name, params)
        theta0 = None
    config = ChainConfig(
        sampler=sampler,
        modes=modes,
        N=int(cfg["particles"]),
        R=int(cfg["sweeps"]),
        seed=seed,
        burn_in=int(cfg["burn_in"]),
        max_rejections=int(cfg["max_rej"]),
        backward=cfg["backward"],
        keep_trajectories=cfg.get("dump_trajectories") == "1",
        theta0=theta0,
    )
    result = run_chain(config, model, obs, param_model)
    timing = cfg.get("no_timing") != "1"
    out.mkdir(parents=True, exist_ok=True)
    _write_run_outputs(out, cfg, seed, config, result, names, timing)
    stats_ = result.is_stats
    return {
        "accepted": int(result.accepted.sum()),
        "R": result.R,
        "is_rate": stats_.acceptance_rate,
        "fallbacks": stats_.fallbacks,
    }


def _write_run_outputs(out, cfg, seed, config, result, theta_names, timing):
    labels = [m.label for m in config.modes]
    t = (lambda v: format_float(v)) if timing else (lambda v: "0.0")
    header = ["sweep", "accepted", "log_z", "tau_pf_s", "tau_bs_s"]
    extra = [lab for lab in labels if not lab.startswith("bs") or lab == "bsm"]
    bs_labels = [lab for lab in labels if lab.startswith("bs") and lab != "bsm"]
    header += [f"tau_{lab}_s" for lab in extra + bs_labels[1:]]
    header += ["log_z_proposed", "is_proposals", "is_accepts", "is_fallbacks"]
    rows = []
    for r in result.records:
        tau_bs = r.tau[bs_labels[0]] if bs_labels else 0.0
        rows.append(
            [r.sweep, int(r.accepted), format_float(r.log_z), t(r.tau_pf), t(tau_bs)]
            + [t(r.tau[lab]) for lab in extra + bs_labels[1:]]
            + [format_float(r.log_z_proposed), r.is_stats.is_proposals,
               r.is_stats.is_accepts, r.is_stats.fallbacks]
        )
    _write_text(out / "chain.csv", _csv_text(header, rows))

    n1 = len(result.records[0].estimates[labels[0]])
    kcols = [f"k{k}" for k in range(n1)]
    for lab in labels:
        series = result.series(lab)
        _write_text(out / f"estimates_{lab}.csv", _csv_text(
            ["k", "estimate"], [[k, format_float(v)] for k, v in enumerate(series.mean(axis=0))]))
        _write_text(out / f"series_{lab}.csv", _csv_text(
            ["sweep", *kcols],
            [[r.sweep, *map(format_float, s)] for r, s in zip(result.records, series)]))
        if lab in bs_labels:
            wv = result.within_var(lab)
            _write_text(out / f"withinvar_{lab}.csv", _csv_text(
                ["sweep", *kcols],
                [[r.sweep, *map(format_float, s)] for r, s in zip(result.records, wv)]))
            if config.keep_trajectories:
                rows = []
                for r in result.records:
                    for j, traj in enumerate(r.trajectories[lab]):
                        rows.append([r.sweep, j, *map(format_float, traj)])
                _write_text(out / f"trajectories_{lab}.csv",
                            _csv_text(["sweep", "j", *kcols], rows))
    if theta_names:
        _write_text(out / "theta.csv", _csv_text(
            ["sweep", *theta_names],
            [[r.sweep, *map(format_float, r.theta)] for r in result.records]))

    # the output location is left out so that reruns elsewhere compare equal
    meta = {k: v for k, v in cfg.items() if v is not None and k != "out"}
    meta["seed"] = str(seed)
    meta["mode"] = ",".join(str(m) for m in config.modes)
    meta["timing"] = "1" if timing else "0"
    write_key_values(meta, out / "run.txt")


def cmd_run(args) -> int:
    cfg = _merge_run_config(args)
    if cfg["data"] is None:
        raise UsageError("--data is required")
    if not Path(cfg["data"]).is_file():
        raise UsageError(f"data file {cfg['data']} not found")
    if cfg["model"] not in MODEL_NAMES:
        raise UsageError(f"unknown model {cfg['model']!r}")
    seed = _resolve_seed(cfg["seed"])
    chains = int(cfg["chains"])
    if chains < 1:
        raise UsageError("--chains must be at least 1")
    out = Path(cfg["out"])
    if chains == 1:
        summaries = [_run_one_chain(cfg, seed, out)]
    else:
        seeds = [int(s.generate_state(1, np.uint64)[0] >> 1)
                 for s in np.random.SeedSequence(seed).spawn(chains)]
        jobs = [(cfg, s, str(out / f"chain_{c}")) for c, s in enumerate(seeds)]
        with ProcessPoolExecutor() as pool:
            summaries = list(pool.map(_chain_job, jobs))
    for c, s in enumerate(summaries):
        prefix = f"chain {c}: " if chains > 1 else ""
        is_rate = "n/a" if np.isnan(s["is_rate"]) else f"{s['is_rate']:.3f}"
        print(f"{prefix}acceptance rate {s['accepted'] / s['R']:.3f} "
              f"({s['accepted']}/{s['R']}); IS acceptance rate {is_rate}; "
              f"IS fallbacks {s['fallbacks']}")
    return 0


# --------------------------------------------------------------------------
# analyze


def _read_wide(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def _read_columns(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {key: np.array([float(r[key]) for r in rows]) for key in reader.fieldnames}


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    meta_path = run_dir / "run.txt"
    if not meta_path.is_file():
        raise UsageError(f"{run_dir} is not a run directory (run.txt missing)")
    meta = read_key_values(meta_path)
    chain = _read_columns(run_dir / "chain.csv")
    modes = _parse_modes(meta["mode"], int(meta.get("traj", "25")))
    labels = [m.label for m in modes]
    bs_labels = [lab for lab in labels if lab.startswith("bs") and lab != "bsm"]
    series, within, tau = {}, {}, {}
    for lab in labels:
        path = run_dir / f"series_{lab}.csv"
        if not path.is_file():
            logger.warning("no output for mode %s; skipped", lab)
            continue
        series[lab] = _read_wide(path)
        col = "tau_bs_s" if bs_labels and lab == bs_labels[0] else f"tau_{lab}_s"
        tau[lab] = chain[col]
        if lab in bs_labels and (run_dir / f"withinvar_{lab}.csv").is_file():
            within[lab] = _read_wide(run_dir / f"withinvar_{lab}.csv")
    if not series:
        raise UsageError("no mode outputs found")
    report = analysis.variance_report(series, within, chain["tau_pf_s"], tau)
    analysis.write_report_csv(report, run_dir / "variance_report.csv")

    lines = [f"R={report.R}", f"acceptance_rate={format_float(chain['accepted'].mean())}"]
    for lab, m in report.methods.items():
        lines.append(f"{lab}: mean_std_err={format_float(np.mean(m.std_err))}")
        j = report.geometric_j(lab)
        if j is not None:
            lines.append(f"{lab}: j_opt_geomean_rounded={j}")
    lines.append("[efficiency ratios]")
    timed = meta.get("timing", "1") == "1"
    if timed and "gt" in report.methods:
        for lab in report.methods:
            if lab == "gt":
                continue
            s = analysis.efficiency_ratio_summary(report, lab, "gt")
            lines.append(
                f"{lab}_vs_gt: min={format_float(s['min'])} max={format_float(s['max'])} "
                f"geomean={format_float(s['geomean'])} n_gt_1={s['n_gt_1']}/{s['n']}")
    _write_text(run_dir / "comparison.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pfsmooth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a latent trajectory and observations")
    p.add_argument("--model", choices=MODEL_NAMES, default="growth")
    p.add_argument("--params", help="key=value parameter file")
    p.add_argument("--n", type=int, default=50, help="number of observations")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run a Metropolised particle smoother")
    p.add_argument("--config", help="key=value run configuration; flags override it")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--params")
    p.add_argument("--data")
    p.add_argument("--sampler", choices=("imh", "pmmh"))
    p.add_argument("--mode", action="append",
                   help="gt, gtrb, bs[:J] or bsm; repeatable or comma separated")
    p.add_argument("--particles", type=int)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--traj", type=int, help="J for a bare 'bs' mode")
    p.add_argument("--seed", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--max-rej", dest="max_rej", type=int)
    p.add_argument("--out")
    p.add_argument("--chains", type=int)
    p.add_argument("--backward", choices=("auto", "ar", "exact"))
    p.add_argument("--pmmh-params", dest="pmmh_params",
                   help="comma-separated variance names sampled by pmmh")
    p.add_argument("--rw-scale", dest="rw_scale", type=float)
    p.add_argument("--prior-shape", dest="prior_shape", type=float)
    p.add_argument("--prior-scale", dest="prior_scale", type=float)
    p.add_argument("--dump-trajectories", action="store_true")
    p.add_argument("--no-timing", action="store_true",
                   help="write zero timings so that outputs are byte-reproducible")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="variance and efficiency report for a run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (DegenerateCloudError, DegenerateBackwardKernelError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
