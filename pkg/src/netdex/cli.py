"""Command-line interface: ``netdex <subcommand> ...``.

Subcommands: cluster, design, evaluate, compare, bias, pipeline, count.
Every stochastic command records its seed in the output metadata.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from netdex import __version__
from netdex.bias import average_bias, bias_vs_edge_proportion
from netdex.clustering import select_blocks
from netdex.graph import Network, is_regular, load_edge_list
from netdex.io import read_blocks, read_design, sidecar_path, write_blocks, write_csv, write_design, write_json
from netdex.models import BlockPartition, Model, ModelSpec
from netdex.optimality import CriterionEvaluator
from netdex.randomization import Sampler, count_balanced_designs
from netdex.search import find_optimal_design
from netdex.study import cross_model_table, randomization_efficiency_study

log = logging.getLogger("netdex")


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


def _model(args) -> ModelSpec:
    return ModelSpec(Model(args.model), args.gamma_constraint)


def _load_graph(args) -> Network:
    net = load_edge_list(args.graph)
    log.info("graph %s: n=%d l=%d", args.graph, net.n, net.n_edges)
    return net


def _cluster(net: Network, args) -> tuple[BlockPartition, object]:
    kmax = args.kmax if args.kmax is not None else net.n // 2
    kmax = min(kmax, net.n // 2)
    blocks, curve = select_blocks(net, args.kmin, kmax, seed=args.seed, restarts=args.kmeans_restarts)
    log.info("selected kappa=%d (Q=%.6f)", curve.argmax_kappa, max(q for _, q in curve.rows()))
    return blocks, curve


def _blocks_for(net: Network, args, parser, needed: bool) -> BlockPartition | None:
    if getattr(args, "blocks", None):
        return read_blocks(args.blocks, net)
    if getattr(args, "cluster", False):
        return _cluster(net, args)[0]
    if needed:
        parser.error(f"--model {args.model} needs --blocks or --cluster")
    return None


def _warn_regular(net: Network, spec: ModelSpec) -> None:
    if spec.kind.has_network and is_regular(net) and not spec.gamma_constraint:
        log.warning("graph is regular: network effects are not estimable without --gamma-constraint")


def _write_curve(path, curve, seed) -> None:
    write_csv(path, ["kappa", "Q"], curve.rows())
    write_json(sidecar_path(path), {"seed": seed, "argmax_kappa": curve.argmax_kappa})


def _design_payload(result, spec: ModelSpec, criterion: str, seed: int, net: Network, blocks) -> dict:
    d = result.best_design
    return {
        "model": spec.kind.value,
        "gamma_constraint": spec.gamma_constraint,
        "criterion": criterion,
        "best_value": result.best_value,
        "method": result.method,
        "seed": seed,
        "restarts_used": result.restarts_used,
        "passes": result.passes,
        "evaluations": result.evaluations,
        "replication": d.replication().tolist(),
        "replication_by_block": (
            [np.bincount(d.assignment[blocks.members(g)] - 1, minlength=d.m).tolist()
             for g in range(1, blocks.kappa + 1)]
            if blocks is not None else None
        ),
        "vertex_ids": list(net.vertex_ids),
        "per_restart": result.restarts,
    }


def cmd_cluster(args, parser) -> int:
    net = _load_graph(args)
    blocks, curve = _cluster(net, args)
    write_blocks(args.out, net, blocks)
    if args.curve:
        _write_curve(args.curve, curve, args.seed)
    print(f"seed={args.seed} kappa={blocks.kappa} blocks={args.out}")
    return 0


def cmd_design(args, parser) -> int:
    net = _load_graph(args)
    spec = _model(args)
    blocks = _blocks_for(net, args, parser, spec.kind.has_blocks)
    _warn_regular(net, spec)
    result = find_optimal_design(
        net, blocks, args.m, spec, args.criterion, method=args.method, restarts=args.restarts, seed=args.seed
    )
    write_design(args.out, result.best_design, **_design_payload(result, spec, args.criterion, args.seed, net, blocks))
    print(f"seed={args.seed} {args.criterion}*={result.best_value:.12g} design={args.out}")
    return 0


def cmd_evaluate(args, parser) -> int:
    net = _load_graph(args)
    spec = _model(args)
    blocks = _blocks_for(net, args, parser, spec.kind.has_blocks)
    design, _ = read_design(args.design)
    res = CriterionEvaluator(net, blocks, design.m, spec, args.criterion).evaluate(design)
    payload = {
        "model": spec.kind.value,
        "criterion": res.criterion,
        "value": res.value,
        "singular": res.singular,
        "replication": design.replication().tolist(),
    }
    if args.out:
        write_json(args.out, payload)
    value = "singular" if res.singular else f"{res.value:.12g}"
    print(f"{res.criterion}={value}")
    return 0


def cmd_compare(args, parser) -> int:
    net = _load_graph(args)
    blocks = _blocks_for(net, args, parser, True)
    sampler = Sampler(args.mode, args.samples, args.seed)
    table = cross_model_table(net, blocks, args.m, args.criterion, sampler, restarts=args.restarts, seed=args.seed)
    write_csv(args.out, ["model", *table.columns], table.as_rows())
    meta = {
        "seed": args.seed,
        "criterion": args.criterion,
        "sampling": table.sampling,
        "optimal": [[r.value, c] for (r, c), cell in table.cells.items() if cell.optimal],
        "cells": [
            {"model": r.value, "design": c, "value": cell.value, "evaluable": cell.evaluable,
             "optimal": cell.optimal, "designs": cell.designs, "singular": cell.singular,
             "std_error": cell.std_error}
            for (r, c), cell in table.cells.items()
        ],
        "optimal_designs": {k: {"assignment": v.best_design.assignment.tolist(), "value": v.best_value,
                                "method": v.method} for k, v in table.optimal_designs.items()},
    }
    write_json(sidecar_path(args.out), meta)
    if args.dist:
        rows, summaries = [], {}
        reference = table.optimal_designs["NBD"]
        for family in ("crd", "rbd"):
            dist = randomization_efficiency_study(
                net, blocks, args.m, "nbm", args.criterion, count=args.samples, seed=args.seed,
                family=family, reference=reference, sampler_mode=args.mode,
            )
            rows += [(family.upper(), i, e) for i, e in enumerate(dist.samples)]
            summaries[family.upper()] = dict(dist.summary, singular=dist.singular, mode=dist.mode,
                                             pen_missed_optimum=dist.pen_missed_optimum)
        write_csv(args.dist, ["family", "index", "efficiency"], rows)
        write_json(sidecar_path(args.dist), {"seed": args.seed, "model": "nbm", "criterion": args.criterion,
                                             "reference": reference.best_value, "summary": summaries})
    for row in table.as_rows():
        print(",".join([row[0]] + [f"{v:.6g}" if isinstance(v, float) and not math.isnan(v) else "" for v in row[1:]]))
    return 0


def cmd_bias(args, parser) -> int:
    net = _load_graph(args)
    true_model = ModelSpec(Model(args.true), args.gamma_constraint)
    assumed = ModelSpec(Model(args.assumed), args.gamma_constraint)
    needs_blocks = true_model.kind.has_blocks or assumed.kind.has_blocks
    blocks = _blocks_for(net, args, parser, needs_blocks)
    sampler = Sampler(args.mode, args.samples, args.seed)
    avg = average_bias(net, blocks, assumed, true_model, 2, sampler)
    study = bias_vs_edge_proportion(net, blocks, true_model, sampler, assumed=assumed)
    write_csv(
        args.out,
        ["proportion", "count", "mean_tau_bias", "q1", "median", "q3", "l12", "edges"],
        [(float(g.proportion), g.count, g.mean_tau_bias, g.q1, g.median, g.q3, g.l12, study.n_edges)
         for g in study.groups],
    )
    write_json(sidecar_path(args.out), {
        "seed": args.seed, "assumed": assumed.kind.value, "true": true_model.kind.value, "mode": study.mode,
        "designs": study.total, "singular": study.singular, "mean_tau_bias": study.mean_tau_bias,
        "average_bias": {"labels": list(avg.labels), "W": avg.W_mean},
        "tau1_bias_coefficients": dict(zip(avg.labels, avg.row("tau1"))),
    })
    coeffs = " ".join(f"{c:+.4f}*{lab}" for lab, c in zip(avg.labels, avg.row("tau1")) if abs(c) > 1e-12)
    print(f"seed={args.seed} E[tau1_hat]-tau1 = {coeffs or '0'}")
    return 0


def cmd_count(args, parser) -> int:
    blocks = None
    n = args.n
    if args.sizes:
        sizes = [int(s) for s in args.sizes.split(",")]
        blocks = BlockPartition(np.repeat(np.arange(1, len(sizes) + 1), sizes))
        n = blocks.n
    elif args.graph:
        net = _load_graph(args)
        n = net.n
        blocks = read_blocks(args.blocks, net) if args.blocks else None
    if n is None:
        parser.error("count needs --n, --sizes or --graph")
    print(count_balanced_designs(n, args.m, blocks))
    return 0


def cmd_pipeline(args, parser) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = _model(args)
    try:
        net = _load_graph(args)
    except Exception as exc:
        raise StageError("load", exc) from exc
    blocks = None
    if spec.kind.has_blocks:
        try:
            if args.blocks:
                blocks = read_blocks(args.blocks, net)
            else:
                blocks, curve = _cluster(net, args)
                _write_curve(outdir / "curve.csv", curve, args.seed)
            write_blocks(outdir / "blocks.txt", net, blocks)
        except Exception as exc:
            raise StageError("cluster", exc) from exc
    _warn_regular(net, spec)
    try:
        result = find_optimal_design(net, blocks, args.m, spec, args.criterion, method=args.method,
                                     restarts=args.restarts, seed=args.seed)
        write_design(outdir / "design.json", result.best_design,
                     **_design_payload(result, spec, args.criterion, args.seed, net, blocks))
    except Exception as exc:
        raise StageError("design", exc) from exc
    try:
        values = {}
        for crit in ("phi1", "phi2"):
            if crit == "phi2" and not spec.kind.has_network:
                continue
            ev = CriterionEvaluator(net, blocks, args.m, spec, crit)
            values[crit] = ev.evaluate(result.best_design).value
        summary = {
            "seed": args.seed,
            "model": spec.kind.value,
            "criterion": args.criterion,
            "n": net.n,
            "edges": net.n_edges,
            "kappa": blocks.kappa if blocks is not None else None,
            "block_sizes": blocks.sizes.tolist() if blocks is not None else None,
            "optimal_value": result.best_value,
            "criteria_at_design": values,
            "replication": result.best_design.replication().tolist(),
            "method": result.method,
        }
        write_json(outdir / "summary.json", summary)
    except Exception as exc:
        raise StageError("evaluate", exc) from exc
    print(f"seed={args.seed} {args.criterion}*={result.best_value:.12g} "
          f"replication={result.best_design.replication().tolist()} outdir={outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netdex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def graph_opts(p, blocks=True):
        p.add_argument("--graph", required=True, help="edge-list file")
        if blocks:
            p.add_argument("--blocks", help="block file: 'vertex_id block_label' per line")

    def model_opts(p, criterion=True):
        p.add_argument("--model", default="nbm", choices=[m.value for m in Model])
        p.add_argument("--gamma-constraint", action="store_true", help="also set the last network effect to zero")
        if criterion:
            p.add_argument("--criterion", default="phi1", choices=["phi1", "phi2"])
        p.add_argument("--m", type=int, default=2, help="number of treatments")

    def cluster_opts(p, flag=True):
        if flag:
            p.add_argument("--cluster", action="store_true", help="derive blocks by spectral clustering")
        p.add_argument("--kmin", type=int, default=2)
        p.add_argument("--kmax", type=int, default=None)
        p.add_argument("--kmeans-restarts", type=int, default=20)

    p = sub.add_parser("cluster", help="spectral clustering with modularity-selected kappa")
    graph_opts(p, blocks=False)
    cluster_opts(p, flag=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("design", help="search for an L-optimal design")
    graph_opts(p)
    model_opts(p)
    cluster_opts(p)
    p.add_argument("--method", default="auto", choices=["auto", "pen", "exhaustive"])
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("evaluate", help="evaluate a design JSON under a model")
    graph_opts(p)
    model_opts(p)
    cluster_opts(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--design", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="cross-model table and randomisation efficiencies")
    graph_opts(p)
    cluster_opts(p)
    p.add_argument("--criterion", default="phi1", choices=["phi1", "phi2"])
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--samples", type=int, default=50_000)
    p.add_argument("--mode", default="auto", choices=["auto", "enumerate", "mc"])
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dist")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bias", help="misspecification bias of balanced randomised designs")
    graph_opts(p)
    cluster_opts(p)
    p.add_argument("--assumed", default="rbm", choices=[m.value for m in Model])
    p.add_argument("--true", default="nbm", choices=[m.value for m in Model])
    p.add_argument("--gamma-constraint", action="store_true")
    p.add_argument("--mode", default="auto", choices=["auto", "enumerate", "mc"])
    p.add_argument("--samples", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("pipeline", help="cluster, then design, then evaluate")
    graph_opts(p)
    model_opts(p)
    cluster_opts(p, flag=False)
    p.add_argument("--method", default="auto", choices=["auto", "pen", "exhaustive"])
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("count", help="number of balanced designs")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--sizes", help="comma-separated block sizes")
    p.add_argument("--graph")
    p.add_argument("--blocks")
    p.set_defaults(func=cmd_count)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None:
        log.info("seed=%d", args.seed)
    try:
        return args.func(args, parser)
    except StageError as exc:
        print(f"netdex {args.command}: stage {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"netdex {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
