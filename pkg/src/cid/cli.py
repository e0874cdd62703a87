"""Command-line interface: ``cid {generate-toy,rank,evaluate,oracle-check}``.

Exit codes: 0 success, 1 pipeline failure (stage named on stderr), 2 bad
configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, build_config
from .data import generate_toy, save_csv
from .importance import PipelineError, read_importances_csv, write_importances_csv, write_summary_json
from .kernels import BACKEND
from .oracle_check import run_oracle_check
from .report import write_figure, write_scores_csv

logger = logging.getLogger("cid")

EXIT_OK, EXIT_PIPELINE, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--config", help="key = value file; command-line flags take precedence")
    g.add_argument("--input", help="CSV with a header row")
    g.add_argument("--toy-samples", type=int, help="use the toy generator with this many rows (default 800)")
    g.add_argument("--target", help="target column name (default y)")
    g.add_argument("--gaussianize", choices=("true", "false"), help="feed the model Gaussianized data (default true)")
    g = p.add_argument_group("estimation")
    g.add_argument("--bins", type=int, help="bins per variable (default 10)")
    g.add_argument("--k-sigma", type=float, help="outlier threshold in standard deviations (default 4)")
    g.add_argument("--subsamples", type=int, help="number of evaluation subsamples (default 200)")
    g.add_argument("--fraction", type=float, help="subsample size as a fraction of the evaluation rows (default 0.8)")
    g.add_argument("--permutations", type=int, help="permutations per feature and subsample (default 5)")
    g.add_argument("--train-fraction", type=float, help="share of rows used to fit the model (default 0.5)")
    g.add_argument("--n-trees", type=int, help="trees in the extra-trees ensemble (default 100)")
    g.add_argument("--phi", choices=("learned", "parametric"), help="entropy-to-importance map (default learned)")
    g.add_argument("--inv-c-grid", help="comma-separated 1/c candidates for the parametric map")
    g.add_argument("--rho", type=float, help="fixed graphical-lasso penalty (default: cross-validated)")
    g.add_argument("--rho-grid", help="comma-separated rho candidates for cross-validation")
    g.add_argument("--prior-graph", help="edge list fixing the graph (1-based feature indices, y for the target)")
    g.add_argument("--backend", choices=("compiled", "python"), help=f"kernel backend (default {BACKEND})")
    g = p.add_argument_group("output")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--out-dir", help="output directory (default results)")
    g.add_argument("--eval-subsets", type=int, help="feature subsets for evaluate (default 100)")
    g.add_argument("--subset-size", type=int, help="features per evaluation subset (default N/2)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cid", description="Covered-information corrected feature importance.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate-toy", help="write the six-feature toy dataset as CSV")
    p.add_argument("--samples", type=int, default=800)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="CSV path (default <out-dir>/toy.csv)")
    p.add_argument("--out-dir", default="results")

    p = sub.add_parser("rank", help="compute permutation, CID, Gini and univariate importances")
    _add_run_options(p)

    p = sub.add_parser("evaluate", help="score saved (or freshly computed) rankings by subset correlation")
    _add_run_options(p)

    p = sub.add_parser("oracle-check", help="compare the closed form with enumeration on random MRFs")
    p.add_argument("--max-nodes", type=int, default=4)
    p.add_argument("--max-states", type=int, default=5)
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    return parser


_RUN_KEYS = (
    "input", "toy_samples", "target", "gaussianize", "bins", "k_sigma", "subsamples", "fraction", "permutations",
    "train_fraction", "n_trees", "phi", "inv_c_grid", "rho", "rho_grid", "prior_graph", "backend", "seed",
    "out_dir", "eval_subsets", "subset_size",
)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k) for k in _RUN_KEYS}
    return build_config(overrides, args.config)


def _write_rank_outputs(cfg: RunConfig, result: pipeline.RankResult) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    estimates = [result.estimates[m] for m in pipeline.METHODS]
    write_importances_csv(estimates, out / "importances.csv")
    extra = {
        "config": cfg.to_dict(),
        "cycle_times": result.cycle_times,
        "stage_seconds": result.timings,
        "rows_trimmed": result.removed,
        "rho": result.cid.precision.rho,
        "edges": [list(map(int, e)) for e in result.cid.precision.edges()],
        "phi": _describe_phi(result.cid.phi),
        "backend": cfg.backend or BACKEND,
    }
    write_summary_json(estimates, out / "summary.json", extra)
    result.cid.profile.to_csv(out / "entropy_profile.csv")
    write_figure(estimates, out / "figure.svg")
    return out


def _describe_phi(phi) -> dict:
    if hasattr(phi, "c"):
        return {"mode": "parametric", "c": phi.c, "max_gain": phi.max_gain}
    reg = phi.regressor
    return {
        "mode": "learned",
        "coef": reg.coef_.tolist(),
        "intercept": float(reg.intercept_),
        "alpha": float(reg.alpha_),
        "beta": float(reg.beta_),
    }


def cmd_generate_toy(args) -> int:
    if args.samples < 1:
        raise ConfigError("--samples must be positive")
    path = Path(args.output) if args.output else Path(args.out_dir) / "toy.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_csv(generate_toy(args.samples, seed=args.seed), path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_rank(args) -> int:
    cfg = config_from_args(args)
    result = pipeline.rank(cfg)
    out = _write_rank_outputs(cfg, result)
    cid = result.estimates["cid"]
    print("CID ranking: " + " > ".join(cid.feature_names[i] for i in cid.ranking))
    print(f"wrote importances.csv, summary.json, entropy_profile.csv, figure.svg to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = config_from_args(args)
    out = Path(cfg.out_dir)
    saved = out / "importances.csv"
    summary = out / "summary.json"
    if saved.is_file() and summary.is_file():
        estimates = {e.method: e for e in read_importances_csv(saved)}
        cycle_times = json.loads(summary.read_text()).get("cycle_times", {})
        result = pipeline.restore(cfg, estimates, cycle_times)
        print(f"using saved rankings in {out}")
    else:
        result = pipeline.rank(cfg)
        _write_rank_outputs(cfg, result)
    scores = pipeline.evaluate(cfg, result)
    out.mkdir(parents=True, exist_ok=True)
    write_scores_csv(scores, out / "scores.csv")
    for method, row in scores.items():
        flag = " (degenerate)" if row["degenerate"] else ""
        print(f"{method:12s} correlation {row['correlation']:+.4f}{flag}  cycle {row['cycle_time_s']:.4f} s")
    print(f"wrote {out / 'scores.csv'}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    try:
        report = run_oracle_check(args.max_nodes, args.max_states, args.cases, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_PIPELINE


COMMANDS = {
    "generate-toy": cmd_generate_toy,
    "rank": cmd_rank,
    "evaluate": cmd_evaluate,
    "oracle-check": cmd_oracle_check,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"cid: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"cid: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"cid: pipeline failed at stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
