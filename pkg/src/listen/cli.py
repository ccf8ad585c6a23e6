"""Command-line entry point.

Examples
--------
  listen generate --items 200 --ranked 20 --seed 3 --out data/syn.json
  listen concordance --dataset data/syn.json
  listen fit-utility --dataset data/syn.json --out fit.json
  listen run --dataset data/syn.json --algorithm listen_t --algorithm baseline_random \\
      --oracle scripted_linear --replications 10 --out results/
  listen evaluate --dataset data/syn.json --trace results/traces/<cell>.jsonl --fit fit.json
  listen report --out results/
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .algorithms import ALGORITHMS, ConfigError
from .datasets import SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .evaluation import FittedUtility, FitConvergenceError, concordance, fit_utility, normalized_average_rank
from .fixtures import exam_fixture, flights_fixture, headphones_fixture
from .harness import ORACLE_KINDS, ExperimentPlan, OracleSpec, emit_reports, report_from_dir, run_experiment
from .model import SchemaError

FIXTURES = {"exam": exam_fixture, "flights": flights_fixture, "headphones": headphones_fixture}


def _print_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_run(args: argparse.Namespace) -> int:
    datasets = [load_dataset(p) for p in args.dataset]
    fixed = None
    if args.weights_file:
        fixed = json.loads(Path(args.weights_file).read_text())
        if isinstance(fixed, dict):
            fixed = [fixed]
    oracle = OracleSpec(kind=args.oracle, temperature=args.temperature, fixed_weights=fixed,
                        replay_dir=args.replay_dir)
    plan = ExperimentPlan(
        datasets=datasets,
        algorithms=args.algorithm or list(ALGORITHMS),
        out_dir=args.out,
        replications=args.replications,
        iterations=args.iterations,
        batch_size=args.batch_size,
        base_seed=args.seed,
        ablation=args.ablation_base_prompt,
        oracle=oracle,
        confirm_llm_spend=args.confirm_llm_spend,
        max_workers=args.workers,
    )
    if oracle.kind == "llm_http":
        print(f"estimated LLM calls: {plan.estimated_oracle_calls()}", file=sys.stderr)
    bundle = run_experiment(plan)
    paths = emit_reports(bundle)
    done = len(bundle.results) - len(bundle.failures)
    print(f"{done}/{len(bundle.results)} cells complete; reports in {args.out}")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return 0 if not bundle.failures else 2


def cmd_evaluate(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    fit = FittedUtility.from_dict(json.loads(Path(args.fit).read_text())) if args.fit else None
    utilities = fit.item_utilities(ds) if fit else None
    selections: list[str] = list(args.selected or [])
    for path in args.trace or []:
        for line in Path(path).read_text().splitlines():
            if line.strip():
                selections.append(json.loads(line)["selected"])
    if not selections:
        raise ConfigError("give --selected ids or --trace files")
    out = []
    for t, sid in enumerate(selections, start=1):
        if sid not in {it.id for it in ds.items}:
            raise ConfigError(f"selected id {sid!r} is not an item of {ds.name!r}")
        rank = normalized_average_rank(sid, ds)
        row = {"t": t, "selected": sid, "rank": rank.raw_rank, "nar": rank.normalized_rank,
               "ranked": rank.ranked}
        if utilities is not None:
            row["utility"] = float(utilities[ds.index_of(sid)])
        out.append(row)
    _print_json(out)
    return 0


def cmd_concordance(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    res = concordance(ds, args.samples, rng=args.seed, normalized=not args.raw_features)
    _print_json({
        "dataset": ds.name, "concordance": res.p, "two_se": res.two_se, "samples": res.n,
        "total_items": ds.n_items, "ranked_items": ds.n_ranked,
        "ranked_prop": ds.n_ranked / ds.n_items, "feature_space": res.feature_space,
    })
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    try:
        fit = fit_utility(ds, args.pairs, args.q, rng=args.seed, normalized=not args.raw_features,
                          fit_intercept=not args.no_intercept)
    except FitConvergenceError as exc:
        print(f"warning: {exc}", file=sys.stderr)
        fit = exc.partial
    text = json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if fit.converged else 3


def cmd_generate(args: argparse.Namespace) -> int:
    if args.fixture:
        ds = FIXTURES[args.fixture](seed=args.seed)
    else:
        if args.spec:
            spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text()))
        else:
            spec = SyntheticSpec(
                n_items=args.items, n_numerical=args.attributes,
                categorical_cardinalities=args.categorical or [], generator=args.generator,
                threshold_quantile=args.threshold_quantile, noise=args.noise,
                n_ranked=args.ranked, tie_group_size=args.tie_group, seed=args.seed, name=args.name,
            )
        ds = generate_synthetic(spec)
    save_dataset(ds, args.out)
    print(f"wrote {ds.name}: {ds.n_items} items, {ds.n_ranked} ranked -> {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    print(report_from_dir(args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="listen", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an algorithm x dataset x replication grid")
    p.add_argument("--dataset", action="append", required=True)
    p.add_argument("--algorithm", action="append", choices=ALGORITHMS)
    p.add_argument("--oracle", choices=ORACLE_KINDS, default="scripted_linear")
    p.add_argument("--temperature", type=float, default=0.0,
                   help="choice noise for scripted oracles; decoding temperature for llm_http")
    p.add_argument("--weights-file", help="JSON weight vector(s) for scripted_fixed_weights")
    p.add_argument("--replay-dir", help="earlier output directory for the replay oracle")
    p.add_argument("--iterations", type=int, default=25)
    p.add_argument("--replications", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablation-base-prompt", action="store_true",
                   help="also run every oracle-backed cell without the user priorities")
    p.add_argument("--out", required=True)
    p.add_argument("--confirm-llm-spend", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score selections against the ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--trace", action="append")
    p.add_argument("--selected", action="append")
    p.add_argument("--fit", help="fitted utility JSON for utility scores")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("concordance", help="random-linear-utility concordance of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw-features", action="store_true")
    p.set_defaults(func=cmd_concordance)

    p = sub.add_parser("fit-utility", help="fit linear utility weights to the ground-truth ranking")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--q", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw-features", action="store_true")
    p.add_argument("--no-intercept", action="store_true", help="fix the intercept at 0")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("generate", help="write a synthetic or fixture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="SyntheticSpec JSON file")
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--items", type=int, default=100)
    p.add_argument("--attributes", type=int, default=3)
    p.add_argument("--categorical", type=int, nargs="*", help="cardinality of each categorical attribute")
    p.add_argument("--generator", choices=("linear", "lexicographic", "threshold"), default="linear")
    p.add_argument("--threshold-quantile", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--ranked", type=int, default=10)
    p.add_argument("--tie-group", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("report", help="rebuild aggregate.csv from trace files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
