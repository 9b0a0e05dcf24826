"""Command-line interface.

Subcommands: collapse, cluster, stability, shuffle-check, test, hiertest,
simulate, pipeline.  A JSON config file (--config) may provide any flag
value under its long name with dashes replaced by underscores; explicit
command-line flags win.  Errors are reported with their stage name and a
non-zero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .assoc import permutation_test
from .collapse import collapse_exact
from .datamodel import (
    Labels,
    StateMatrix,
    read_labels,
    read_state_matrix,
    write_labels,
    write_state_matrix,
)
from .errors import CnclustError
from .hiertest import adjusted_pvalues, hierarchical_test, holm
from .partition import cluster
from .pipeline import (
    PipelineConfig,
    load_config,
    read_partition_json,
    run_pipeline,
    stage_seed,
    write_cluster_params,
    write_hierarchical_tsv,
)
from .qem import FitConfig
from .simulate import GlobalNull, RegionAssociation, make_scenario, sample_labels, sample_matrix
from .stability import coincidental_clustering_report, cross_validate_stability


def _add_common_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-cluster-size", type=int, default=None, help="default 9")
    p.add_argument("--q", type=float, default=None, help="distance decay exponent, default 1")
    p.add_argument("--distance-basis", choices=["bp", "probes"], default=None)
    p.add_argument("--ridge", type=float, default=None, help="ridge scale, default 1e-3")
    p.add_argument("--model-penalty", type=float, default=None,
                   help="per-parameter log(n) penalty multiplier, default 1.0")
    p.add_argument("--threads", type=int, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnclust",
        description="Spatial clustering and hierarchical permutation testing of "
                    "discretized copy-number regions",
    )
    parser.add_argument("--config", default=None, help="JSON file with flat flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collapse", help="merge consecutive identical probe rows into regions")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("cluster", help="optimal contiguous partition per chromosome")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    _add_common_fit_flags(p)

    p = sub.add_parser("stability", help="cross-validated adjusted Rand index")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--folds", type=int, default=None, help="default 10")
    p.add_argument("--seed", type=int, default=None)
    _add_common_fit_flags(p)

    p = sub.add_parser("shuffle-check", help="coincidental clustering risk via shuffling")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--shuffle-repeats", type=int, default=None, help="default 25")
    p.add_argument("--seed", type=int, default=None)
    _add_common_fit_flags(p)

    p = sub.add_parser("test", help="permutation p-values for regions and clusters")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--permutations", type=int, default=None, help="default 20000")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--clusters-json", default=None,
                   help="partition from a previous `cluster` run; refitted when omitted")
    p.add_argument("--external-cluster-matrix", default=None)
    _add_common_fit_flags(p)

    p = sub.add_parser("hiertest", help="hierarchical FWER procedure plus Holm baselines")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--alpha", type=float, default=None, help="default 0.05")
    p.add_argument("--permutations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--external-cluster-matrix", default=None)
    _add_common_fit_flags(p)

    p = sub.add_parser("simulate", help="draw data from a known scenario config")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--permutations", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--shuffle-repeats", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--external-cluster-matrix", default=None)
    p.add_argument("--skip-stability", action="store_true")
    p.add_argument("--skip-shuffle", action="store_true")
    _add_common_fit_flags(p)
    return parser


_DEFAULTS = {
    "alpha": 0.05,
    "permutations": 20_000,
    "max_cluster_size": 9,
    "q": 1.0,
    "distance_basis": "bp",
    "ridge": 1e-3,
    "model_penalty": 1.0,
    "folds": 10,
    "shuffle_repeats": 25,
    "seed": 0,
    "threads": 1,
}


def _resolve(args: argparse.Namespace, key: str):
    """Value priority: explicit flag, then config file, then default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if getattr(args, "_file_config", None) and key in args._file_config:
        return args._file_config[key]
    return _DEFAULTS.get(key)


def _fit_config(args) -> FitConfig:
    return FitConfig(
        max_cluster_size=_resolve(args, "max_cluster_size"),
        q=_resolve(args, "q"),
        distance_basis=_resolve(args, "distance_basis"),
        ridge=_resolve(args, "ridge"),
        model_penalty=_resolve(args, "model_penalty"),
    )


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(payload: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _cmd_collapse(args) -> int:
    out = _out_dir(args)
    x = read_state_matrix(args.input)
    collapsed, report = collapse_exact(x)
    write_state_matrix(collapsed, out / "regions.tsv")
    _dump_json(report.to_dict(), out / "collapse_report.json")
    print(f"collapse: {report.input_rows} rows -> {report.output_regions} regions")
    return 0


def _cluster_tsv(result, x, path: Path) -> None:
    from .pipeline import _write_clusters_tsv

    _write_clusters_tsv(result, x, path)


def _cmd_cluster(args) -> int:
    out = _out_dir(args)
    x = read_state_matrix(args.input)
    result = cluster(x, _fit_config(args), threads=_resolve(args, "threads"))
    _cluster_tsv(result, x, out / "clusters.tsv")
    write_cluster_params(result, out / "cluster_params.json")
    print(f"cluster: {x.m} regions -> {result.n_clusters} clusters "
          f"(total loglik {result.total_loglik:.3f})")
    return 0


def _cmd_stability(args) -> int:
    out = _out_dir(args)
    x = read_state_matrix(args.input)
    report = cross_validate_stability(
        x, _fit_config(args), folds=_resolve(args, "folds"),
        seed=stage_seed(_resolve(args, "seed"), "stability"),
        threads=_resolve(args, "threads"),
    )
    _dump_json(report.to_dict(), out / "stability.json")
    print(f"stability: aARI = {report.aari:.4f} over {len(report.fold_aris)} folds")
    return 0


def _cmd_shuffle_check(args) -> int:
    out = _out_dir(args)
    x = read_state_matrix(args.input)
    report = coincidental_clustering_report(
        x, _fit_config(args), repeats=_resolve(args, "shuffle_repeats"),
        seed=stage_seed(_resolve(args, "seed"), "shuffle"),
        threads=_resolve(args, "threads"),
    )
    _dump_json(report.to_dict(), out / "shuffle.json")
    print(f"shuffle-check: mean {report.mean_clusters:.1f} clusters "
          f"(range {report.min_clusters}-{report.max_clusters}) of {x.m} regions")
    return 0


def _load_partition_for_test(args, collapsed: StateMatrix, fit_config: FitConfig):
    external = getattr(args, "external_cluster_matrix", None)
    if external:
        ext, _ = collapse_exact(read_state_matrix(external))
        if ext.region_meta != collapsed.region_meta:
            raise CnclustError("external clustering matrix does not match the tested regions")
        result = cluster(ext, fit_config, threads=_resolve(args, "threads"))
        return result, None
    if getattr(args, "clusters_json", None):
        partition, fingerprint = read_partition_json(args.clusters_json)
        return partition, fingerprint or None
    result = cluster(collapsed, fit_config, threads=_resolve(args, "threads"))
    return result, result.source_fingerprint


def _cmd_test(args) -> int:
    out = _out_dir(args)
    x = read_state_matrix(args.input)
    labels = read_labels(args.labels, x.sample_ids)
    collapsed, _ = collapse_exact(x)
    fit_config = _fit_config(args)
    source, fingerprint = _load_partition_for_test(args, collapsed, fit_config)
    partition = source.partition if hasattr(source, "partition") else source
    test_seed = int(stage_seed(_resolve(args, "seed"), "test").generate_state(1)[0])
    result = permutation_test(collapsed, labels, partition,
                              n_permutations=_resolve(args, "permutations"),
                              seed=test_seed, expected_fingerprint=fingerprint)
    from .pipeline import _write_pvalues

    _write_pvalues(result, collapsed, out)
    print(f"test: {collapsed.m} regions, {partition.n_clusters} clusters, "
          f"B = {result.ensemble.n_permutations}")
    return 0


def _cmd_hiertest(args) -> int:
    out = _out_dir(args)
    alpha = _resolve(args, "alpha")
    config = PipelineConfig(
        input=args.input,
        labels=args.labels,
        out_dir=str(out),
        alpha=alpha,
        permutations=_resolve(args, "permutations"),
        max_cluster_size=_resolve(args, "max_cluster_size"),
        q=_resolve(args, "q"),
        distance_basis=_resolve(args, "distance_basis"),
        ridge=_resolve(args, "ridge"),
        model_penalty=_resolve(args, "model_penalty"),
        seed=_resolve(args, "seed"),
        threads=_resolve(args, "threads"),
        external_cluster_matrix=getattr(args, "external_cluster_matrix", None),
        run_stability=False,
        run_shuffle=False,
    )
    result = run_pipeline(config)
    rejected = sorted(result.rejection_clusters)
    print(f"hiertest: rejected clusters {[(k + 1) for k in rejected]} and "
          f"{len(result.rejection_regions)} regions at alpha = {alpha}")
    return 0


def _parse_label_model(payload: dict):
    model = payload.get("model", "global_null")
    if model == "global_null":
        return GlobalNull()
    if model == "region_association":
        return RegionAssociation(region=int(payload["region"]), effect=float(payload["effect"]))
    raise CnclustError(f"unknown label model {model!r}")


def _cmd_simulate(args) -> int:
    out = _out_dir(args)
    with open(args.scenario, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    label_model = _parse_label_model(spec.get("labels", {}))
    scenario = make_scenario(
        cluster_specs=[(c["chromosome"], c["beta"], c["gamma"]) for c in spec["clusters"]],
        n=int(spec["n"]),
        q=float(spec.get("q", 1.0)),
        basis=spec.get("distance_basis", "bp"),
        spacing_bp=int(spec.get("spacing_bp", 100_000)),
        label_model=label_model,
    )
    seed = _resolve(args, "seed")
    ss = stage_seed(seed, "simulate")
    matrix_seed, label_seed = ss.spawn(2)
    x = sample_matrix(scenario, matrix_seed)
    y = sample_labels(x, scenario.label_model, label_seed)
    write_state_matrix(x, out / "states.tsv")
    write_labels(y, x.sample_ids, out / "labels.tsv")
    _dump_json(
        {
            "breaks": list(scenario.partition.breaks),
            "chromosomes": list(scenario.partition.chromosomes),
            "gammas": list(scenario.gammas),
        },
        out / "truth.json",
    )
    print(f"simulate: wrote {x.m} x {x.n} states and labels to {out}")
    return 0


def _cmd_pipeline(args) -> int:
    config = PipelineConfig(
        input=args.input,
        labels=args.labels,
        out_dir=args.out_dir,
        alpha=_resolve(args, "alpha"),
        permutations=_resolve(args, "permutations"),
        max_cluster_size=_resolve(args, "max_cluster_size"),
        q=_resolve(args, "q"),
        distance_basis=_resolve(args, "distance_basis"),
        ridge=_resolve(args, "ridge"),
        model_penalty=_resolve(args, "model_penalty"),
        folds=_resolve(args, "folds"),
        shuffle_repeats=_resolve(args, "shuffle_repeats"),
        seed=_resolve(args, "seed"),
        threads=_resolve(args, "threads"),
        external_cluster_matrix=getattr(args, "external_cluster_matrix", None),
        run_stability=not args.skip_stability,
        run_shuffle=not args.skip_shuffle,
    )
    result = run_pipeline(config)
    print(f"pipeline: {result.collapsed.m} regions, "
          f"{result.clustering.n_clusters} clusters, "
          f"{len(result.rejection_clusters)} clusters and "
          f"{len(result.rejection_regions)} regions rejected; "
          f"artifacts in {config.out_dir}")
    return 0


_COMMANDS = {
    "collapse": _cmd_collapse,
    "cluster": _cmd_cluster,
    "stability": _cmd_stability,
    "shuffle-check": _cmd_shuffle_check,
    "test": _cmd_test,
    "hiertest": _cmd_hiertest,
    "simulate": _cmd_simulate,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.config:
        args._file_config = load_config(args.config)
    else:
        args._file_config = None
    try:
        return _COMMANDS[args.command](args)
    except CnclustError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
