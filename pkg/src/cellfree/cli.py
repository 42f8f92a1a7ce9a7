"""Command-line experiment driver.

    cellfree <command> --config FILE [--seed N] [--out DIR] [--preset desk|paper] [--workers N]

Commands: outage, pdf-check, cluster-enum, baseline, train, compare, mc.
Each writes <out>/<command>.csv (train and compare write one file per
objective) starting with a provenance comment and a header row.

Exit codes: 0 success, 1 config error, 2 validation failure, 3 runtime error.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from . import rng as rngmod
from .analytics import (
    AnalyticsError,
    cdf_consistency_check,
    outage_query_dynamic,
    outage_query_static,
    outage_static,
    query_from_breakdown,
    sinr_pdf,
)
from .channel import ChannelError, Network, draw_realization
from .clustering import ClusterConfig, ClusterError, enumerate_configs
from .config import ConfigError, load_config
from .drl import checkpoint
from .drl.agents import train_hybrid
from .drl.env import CellFreeEnv, EnvConfig
from .drl.evaluate import compare_policy, mean_ratio
from .montecarlo import MCConfig, NetworkSampler, Policy, estimate_outage
from .optimize import ProblemP1, GradientConfig, solve_joint
from .sinr import static_sinr
from .units import db_to_linear

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3
COMMANDS = ("outage", "pdf-check", "cluster-enum", "baseline", "train", "compare", "mc")


class ValidationFailure(RuntimeError):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, cfg, command, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# cellfree {__version__} command={command} preset={cfg.preset} "
                 f"config_sha256={cfg.sha256} seed={cfg.seed}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")
    return path


def _analysis_cluster(cfg):
    an = cfg.analysis
    if an["receiver"] == "static":
        return None
    if an["cluster"] is not None:
        try:
            c = ClusterConfig.from_string(an["cluster"])
        except (ValueError, ClusterError) as exc:
            raise ConfigError(f"analysis.cluster: {exc}") from exc
        if c.num_aps != cfg.scenario.topology.num_aps:
            raise ConfigError("analysis.cluster must assign every AP")
        return c
    return enumerate_configs(cfg.scenario.topology.num_aps, an["num_clusters"], cap=cfg.solver["action_cap"])[0]


def _mc_config(cfg, workers):
    return MCConfig(runs=cfg.mc_runs, seed=cfg.seed, batch_size=cfg.analysis["batch_size"], workers=workers,
                    scenario=cfg.analysis["receiver"])


def _policy(cfg, cluster):
    an = cfg.analysis
    return Policy(cluster=cluster, gain_method=an["gain_method"], sic=an["receiver"] == "dynamic_sic")


def _analytic_outage(cfg, scenario, cluster, thresholds):
    """Closed-form outage per threshold (NaN under SIC ordering, which has no closed form here)."""
    an = cfg.analysis
    if an["receiver"] == "dynamic_sic" or an["gain_method"] != "unit":
        return [math.nan] * len(thresholds)
    real = draw_realization(scenario, cfg.topology_seed, 0)
    k = an["user"]
    out = []
    for t in thresholds:
        if cluster is None:
            q = outage_query_static(real, np.ones((real.num_users, real.num_aps)), k, t)
        else:
            q = outage_query_dynamic(real, cluster, np.ones((real.num_users, cluster.num_clusters)), None, k, t)
        out.append(outage_static(q))
    return out


def run_outage(cfg, workers=1):
    an = cfg.analysis
    thresholds_db = an["thresholds_db"]
    thresholds = [float(db_to_linear(t)) for t in thresholds_db]
    sweep = an["user_sweep"] or [cfg.scenario.topology.num_users]
    cluster = _analysis_cluster(cfg)
    rows, ok = [], True
    for num_users in sweep:
        scenario = cfg.scenario.with_users(num_users)
        if an["user"] >= num_users:
            raise ConfigError("analysis.user_sweep entries must exceed analysis.user")
        analytic = _analytic_outage(cfg, scenario, cluster, thresholds)
        sampler = NetworkSampler(scenario, cfg.topology_seed, _policy(cfg, cluster))
        mc = estimate_outage(sampler, thresholds, _mc_config(cfg, workers), user=an["user"])
        for tdb, t, a, e in zip(thresholds_db, thresholds, analytic, mc):
            within = math.isnan(a) or abs(a - e.estimate) <= 3.0 * math.sqrt(a * (1.0 - a) / e.runs)
            ok &= within
            rows.append([num_users, tdb, t, a, e.estimate, e.stderr, within])
    header = ["num_users", "threshold_db", "threshold", "analytic", "mc", "stderr", "within_3se"]
    return header, rows, ok


def run_pdf_check(cfg, workers=1):
    an = cfg.analysis
    real = draw_realization(cfg.scenario, cfg.topology_seed, 0)
    bd = static_sinr(real, np.ones((real.num_users, real.num_aps)), an["user"])
    query = query_from_breakdown(bd, 1.0)
    rep = cdf_consistency_check(query, tol=an["tolerance"], points=an["pdf_points"])
    rows = [[g, sinr_pdf(query, g), i, c, a] for g, i, c, a in zip(rep.grid, rep.integrated, rep.closed_form,
                                                                   rep.integral_cdf)]
    rows.append(["normalization_error", rep.normalization_error, "", "", ""])
    header = ["gamma", "pdf", "integrated_pdf", "closed_form_cdf", "integral_cdf"]
    return header, rows, rep.consistent


def run_cluster_enum(cfg, workers=1):
    m = cfg.scenario.topology.num_aps
    configs = enumerate_configs(m, cfg.solver["num_clusters"], cap=cfg.solver["action_cap"])
    rows = [[i, c.to_string().replace(",", " "), " ".join(str(s) for s in c.sizes())] for i, c in enumerate(configs)]
    return ["index", "assignment", "sizes"], rows, True


def _problem(cfg, real, clusters, objective=None):
    s = cfg.solver
    return ProblemP1(real, tuple(clusters), objective or s["objective"], cfg.sic_sensitivity, s["gain_method"], s["sic"])


def run_baseline(cfg, workers=1):
    s = cfg.solver
    net = Network(cfg.scenario, cfg.topology_seed)
    clusters = enumerate_configs(net.num_aps, s["num_clusters"], cap=s["action_cap"])
    rows = []
    gcfg = GradientConfig(seed=cfg.seed)
    for i in range(s["instances"]):
        real = net.draw(rngmod.make_rng(cfg.seed, rngmod.SOLVER, i))
        sol = solve_joint(_problem(cfg, real, clusters), s["weight_solver"], gcfg, s["grid_points"])
        rows.append([i, sol.cluster.to_string().replace(",", " "), sol.objective_value,
                     " ".join(repr(float(r)) for r in sol.per_user_rates), sol.feasible,
                     " ".join(repr(float(w)) for w in sol.weights.reshape(-1))])
    return ["instance", "cluster", "objective", "per_user_rates", "feasible", "weights"], rows, True


def _env(cfg, objective):
    d, s = cfg.drl, cfg.solver
    return CellFreeEnv(EnvConfig(cfg.scenario, d["num_clusters"], cfg.topology_seed, objective, s["sic"],
                                 s["gain_method"], cfg.sic_sensitivity, d["penalty"], action_cap=s["action_cap"]))


def _checkpoint_path(cfg, out, objective):
    if cfg.drl["checkpoint"] is not None and len(cfg.drl["objectives"]) == 1:
        return cfg.drl["checkpoint"]
    return os.path.join(out, f"agent_{objective}.json")


def cmd_train(cfg, out, workers=1):
    paths = []
    envs = {obj: _env(cfg, obj) for obj in cfg.drl["objectives"]}  # cap violations surface before any training
    for obj, env in envs.items():
        result = train_hybrid(env, cfg.hyper, cfg.seed)
        lines = result.log.to_csv_lines()
        rows = [line.split(",") for line in lines[1:]]
        paths.append(write_csv(os.path.join(out, f"train_{obj}.csv"), cfg, "train", lines[0].split(","), rows))
        cp = _checkpoint_path(cfg, out, obj)
        os.makedirs(os.path.dirname(cp) or ".", exist_ok=True)
        checkpoint.save(result.bundle, cp)
        paths.append(cp)
    return paths, True


def cmd_compare(cfg, out, workers=1):
    paths = []
    for obj in cfg.drl["objectives"]:
        bundle = checkpoint.load(_checkpoint_path(cfg, out, obj))
        env = _env(cfg, obj)
        if (bundle.num_users, bundle.num_clusters, bundle.num_configs) != (env.num_users, env.num_clusters,
                                                                            env.num_configs):
            raise ConfigError("checkpoint does not match the configured scenario")
        rows = compare_policy(env, bundle, cfg.drl["instances"], cfg.seed, cfg.solver["weight_solver"],
                              cfg.solver["grid_points"])
        body = [[r.instance, r.policy_rate, r.baseline_rate, r.ratio] for r in rows]
        body.append(["mean", float(np.mean([r.policy_rate for r in rows])),
                     float(np.mean([r.baseline_rate for r in rows])), mean_ratio(rows)])
        paths.append(write_csv(os.path.join(out, f"compare_{obj}.csv"), cfg, "compare",
                               ["instance", "drl_rate", "baseline_rate", "ratio"], body))
    return paths, True


def run_mc(cfg, workers=1):
    an = cfg.analysis
    thresholds = [float(db_to_linear(t)) for t in an["thresholds_db"]]
    cluster = _analysis_cluster(cfg)
    sampler = NetworkSampler(cfg.scenario, cfg.topology_seed, _policy(cfg, cluster))
    est = estimate_outage(sampler, thresholds, _mc_config(cfg, workers), user=an["user"])
    rows = [[tdb, t, e.estimate, e.stderr, e.runs] for tdb, t, e in zip(an["thresholds_db"], thresholds, est)]
    return ["threshold_db", "threshold", "outage", "stderr", "runs"], rows, True


_TABLE_COMMANDS = {
    "outage": run_outage,
    "pdf-check": run_pdf_check,
    "cluster-enum": run_cluster_enum,
    "baseline": run_baseline,
    "mc": run_mc,
}


def run_command(command, cfg, out, workers=1):
    """Run one command; returns (written paths, validation ok)."""
    if command in _TABLE_COMMANDS:
        header, rows, ok = _TABLE_COMMANDS[command](cfg, workers)
        return [write_csv(os.path.join(out, f"{command}.csv"), cfg, command, header, rows)], ok
    if command == "train":
        return cmd_train(cfg, out, workers)
    if command == "compare":
        return cmd_compare(cfg, out, workers)
    raise ConfigError(f"unknown command {command!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="cellfree", description="Cell-free uplink experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--seed", type=int, default=None, help="overrides the file's seed")
    p.add_argument("--out", default=None, help="output directory (default: output.directory)")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--workers", type=int, default=1, help="Monte-Carlo worker processes")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config, args.preset, args.seed)
        out = args.out or cfg.output_dir
        paths, ok = run_command(args.command, cfg, out, args.workers)
    except (ConfigError, ClusterError, checkpoint.CheckpointError, ChannelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnalyticsError, ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    if not ok:
        print("validation failure: cross-check outside tolerance", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
