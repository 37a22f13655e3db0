"""Command-line front end: synth -> solve -> attack -> metrics.

The pipeline is staged through files so each stage can be rerun and tested
on its own. Every command is deterministic given fixed seeds and inputs.
Exit codes: 0 success, 2 input/config error, 3 non-convergence, 4 internal
failure.
"""

import argparse
import sys

import numpy as np

from . import attack as attack_mod
from . import config as config_mod
from . import features as features_mod
from . import metrics as metrics_mod
from . import sdot
from .boundary import detect_singular_pairs, export_pairs_csv
from .errors import (
    ConfigError,
    DimensionMismatch,
    NopainError,
    NotConverged,
    NotConvergedInput,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_INTERNAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nopain",
        description="Semi-discrete OT solver and singular-boundary sampler.",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="global random seed "
                       "(falls back to $NOPAIN_SEED, then 0)")
        p.add_argument("--threads", type=int,
                       help="parallelism cap for sampling (default: all cores); "
                            "never changes results")

    p = sub.add_parser("synth", help="generate a synthetic mixture feature file")
    common(p)
    p.add_argument("--modes", type=int, help="number of mixture modes")
    p.add_argument("--n", type=int, help="total number of feature vectors")
    p.add_argument("--dim", type=int, help="feature dimension")
    p.add_argument("--scale", type=float, help="mode mean magnitude")
    p.add_argument("--stddev", type=float, help="per-mode standard deviation")
    p.add_argument("-o", "--out", required=True, help="output NPFT path")

    p = sub.add_parser("solve", help="fit heights until cell masses are uniform")
    common(p)
    p.add_argument("--features", required=True, help="input NPFT (or CSV)")
    p.add_argument("-o", "--out", required=True, help="output NPHT path")
    p.add_argument("--log", help="per-epoch csv log (epoch,energy,batch_size,lr)")
    p.add_argument("--batch-size", type=int, help="initial noise batch size "
                   "(default 10 N)")
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--eta", type=float, help="energy convergence threshold")
    p.add_argument("--patience", type=int,
                   help="epochs without a new minimum before batch doubling")
    p.add_argument("--max-epochs", type=int, help="hard epoch cap")

    p = sub.add_parser("attack", help="detect singular boundaries and interpolate")
    common(p)
    p.add_argument("--features", required=True, help="input NPFT (or CSV)")
    p.add_argument("--heights", required=True, help="converged NPHT from solve")
    p.add_argument("-o", "--out", required=True, help="output adversarial NPFT")
    p.add_argument("--manifest", required=True,
                   help="output csv: anchor,neighbor,lambda_i,lambda_ik,angle_rad")
    p.add_argument("--k", type=int, help="neighbors ranked per cell")
    p.add_argument("--tau", type=float, help="singularity threshold")
    p.add_argument("--pair-selection", choices=("max-angle", "first-exceeding"))
    p.add_argument("--threshold-on", choices=("angle", "cosine"))
    p.add_argument("--samples", type=int,
                   help="noise samples for cell statistics "
                        "(default max(10 N, 100000), matching the solver's "
                        "certification batch)")
    p.add_argument("--eta", type=float,
                   help="energy bound the statistics must satisfy")
    p.add_argument("--pairs-csv",
                   help="also export detected pairs "
                        "(anchor,neighbor,cos_sim,angle_rad,probe_file_offset); "
                        "probes go to <pairs-csv>.probes.npft")

    p = sub.add_parser("metrics", help="chamfer distance between cloud files")
    common(p)
    p.add_argument("--original", required=True, help="NPPC file of originals")
    p.add_argument("--adversarial", required=True, help="NPPC file to compare")
    p.add_argument("-o", "--out", help="optional per-pair csv")
    p.add_argument("--cd-variant", choices=metrics_mod.CD_VARIANTS)

    return parser


_FLAG_KEYS = {
    "seed": "seed",
    "threads": "threads",
    "modes": "synth.modes",
    "n": "synth.n",
    "dim": "synth.dim",
    "scale": "synth.scale",
    "stddev": "synth.stddev",
    "batch_size": "solver.batch_size",
    "lr": "solver.learning_rate",
    "eta": "solver.eta",
    "patience": "solver.patience",
    "max_epochs": "solver.max_epochs",
    "k": "boundary.k",
    "tau": "boundary.tau",
    "pair_selection": "boundary.pair_selection",
    "threshold_on": "boundary.threshold_on",
    "samples": "attack.samples",
    "cd_variant": "metrics.cd_variant",
}


def _resolve_config(args) -> config_mod.RunConfig:
    file_values = None
    if getattr(args, "config", None):
        file_values = config_mod.parse_config_file(args.config)
    flags = {}
    for attr, key in _FLAG_KEYS.items():
        if hasattr(args, attr):
            flags[key] = getattr(args, attr)
    return config_mod.resolve(file_values, flags)


def cmd_synth(cfg: config_mod.RunConfig, args) -> int:
    spec = features_mod.axis_mixture_spec(
        modes=cfg.synth_modes, d=cfg.synth_dim, scale=cfg.synth_scale,
        stddev=cfg.synth_stddev, seed=cfg.seed)
    fs = features_mod.synth_mixture(spec, cfg.synth_n, cfg.synth_dim)
    features_mod.save_features(fs, args.out)
    print(f"wrote {args.out}: N={fs.count}, d={fs.dim}, "
          f"modes={cfg.synth_modes}")
    return EXIT_OK


def cmd_solve(cfg: config_mod.RunConfig, args) -> int:
    fs = features_mod.load_features(args.features)
    try:
        heights, _, report = sdot.solve(fs, cfg.solver, threads=cfg.threads)
    except NotConverged as exc:
        # Persist the best partial heights so the run can be diagnosed.
        if exc.heights is not None:
            sdot.save_heights(exc.heights, args.out, seed=cfg.solver.seed,
                              final_energy=exc.report.final_energy)
        if args.log and exc.report is not None:
            exc.report.write_log(args.log)
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    sdot.save_heights(heights, args.out, seed=cfg.solver.seed,
                      final_energy=report.final_energy)
    if args.log:
        report.write_log(args.log)
    print(f"converged in {report.epochs_run} epochs, "
          f"final energy {report.final_energy:.6e}")
    return EXIT_OK


def cmd_attack(cfg: config_mod.RunConfig, args) -> int:
    fs = features_mod.load_features(args.features)
    heights, _, _ = sdot.load_heights(args.heights)
    if len(heights) != fs.count:
        raise DimensionMismatch(
            f"heights N={len(heights)} does not match features N={fs.count}")
    # The solver certifies convergence on a batch of at least
    # EVAL_FLOOR_SAMPLES; re-estimating with fewer would add noise the
    # energy gate cannot distinguish from non-convergence.
    samples = cfg.attack_samples or max(10 * fs.count, sdot.EVAL_FLOOR_SAMPLES)
    stats = sdot.estimate_cell_stats(fs, heights, samples, seed=cfg.seed,
                                     threads=cfg.threads)
    feats, summary = attack_mod.run_attack(fs, heights, stats, cfg.boundary,
                                           eta=cfg.solver.eta)
    attack_mod.write_manifest(feats, args.manifest)
    if len(feats) >= 2:
        features_mod.save_features(
            attack_mod.adversarial_feature_set(feats), args.out)
    elif not feats:
        print("warning: no singular pairs found "
              "(tau may exceed every observed angle); no feature file written",
              file=sys.stderr)
    else:
        print("warning: only one pair found; feature files need N >= 2, "
              "no feature file written", file=sys.stderr)
    if args.pairs_csv:
        # Detection is deterministic, so rerunning it reproduces the pairs
        # that run_attack consumed.
        pairs, _ = detect_singular_pairs(fs, heights, stats, cfg.boundary)
        export_pairs_csv(pairs, args.pairs_csv, f"{args.pairs_csv}.probes.npft")
    print(summary.to_text())
    return EXIT_OK


def cmd_metrics(cfg: config_mod.RunConfig, args) -> int:
    originals = features_mod.load_clouds(args.original)
    adversarials = features_mod.load_clouds(args.adversarial)
    if len(originals) != len(adversarials):
        raise DimensionMismatch(
            f"cloud counts differ: {len(originals)} vs {len(adversarials)}")
    pairs = [metrics_mod.CloudPair(a, b)
             for a, b in zip(originals, adversarials)]
    mean_cd, per_pair = metrics_mod.batch_cd(pairs, variant=cfg.cd_variant)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("index,chamfer\n")
            for idx, value in enumerate(per_pair):
                fh.write(f"{idx},{value:.12g}\n")
    print(f"mean chamfer ({cfg.cd_variant}) over {len(per_pair)} pairs: "
          f"{mean_cd:.12g}")
    return EXIT_OK


_DISPATCH = {
    "synth": cmd_synth,
    "solve": cmd_solve,
    "attack": cmd_attack,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if not args.command:
        parser.print_help(file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = _resolve_config(args)
        for line in cfg.echo_lines():
            print(f"# {line}", file=sys.stderr)
        return _DISPATCH[args.command](cfg, args)
    except (NotConverged, NotConvergedInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ConfigError, NopainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - internal invariant breaches
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
