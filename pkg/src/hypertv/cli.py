"""Command-line pipelines tying the modules together.

Subcommands: build-graph, train-encoder, diffuse, run (full alternating
loop), bench (planted-partition suite) and oracle (brute-force ratio).
Configuration comes from a TOML file plus ``--set key=value`` overrides;
overrides win.  ``run`` and ``bench`` require an explicit --seed and write
byte-identical artifacts when repeated with the same config and seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from .config import (RunConfig, apply_overrides, load_config, save_snapshot)
from .dataio import (load_dataset, load_labels_csv, write_metrics_csv,
                     write_predictions_csv)
from .diffusion import (DiagnosticsLog, FlowParams, InnerParams,
                        run_multiclass)
from .embedding import AugmentPolicy, EncoderParams, train_encoder
from .hypergraph import (concat_hypergraphs, knn_modal_hypergraph,
                         load_hypergraph, phenotypic_hypergraph,
                         save_hypergraph)
from .labels import GIVEN, PSEUDO
from .synth import (PlantedSpec, brute_force_best_ratio, gen_planted, metrics)
from .uncertainty import (ClassifierParams, LoopParams, alternate,
                          entropy_weights)

log = logging.getLogger("hypertv")


def _setup_logging():
    level = os.environ.get("HYPERTV_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def flow_params_from_config(cfg: RunConfig) -> FlowParams:
    return FlowParams(
        dt=cfg.flow.dt,
        max_outer_iters=cfg.flow.max_outer_iters,
        ratio_tol=cfg.flow.ratio_tol,
        inner=InnerParams(max_iters=cfg.inner.max_iters,
                          gap_tol=cfg.inner.gap_tol),
        norm=cfg.flow.norm,
        init_smoothing=cfg.flow.init_smoothing,
        restarts=cfg.flow.restarts,
    )


def loop_params_from_config(cfg: RunConfig) -> LoopParams:
    return LoopParams(
        epochs=cfg.loop.epochs,
        promote_threshold=cfg.loop.promote_threshold,
        classifier=ClassifierParams(
            learning_rate=cfg.loop.learning_rate,
            weight_decay=cfg.loop.weight_decay,
            epochs=cfg.loop.classifier_epochs,
        ),
    )


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero feature row cannot be normalised")
    return X / norms


def embed_modality(table, cfg: RunConfig, seed: int):
    """Unit-norm embeddings of one imaging modality, trained or raw."""
    if not cfg.encoder.enabled:
        return _unit_rows(table.features)
    policy = AugmentPolicy(
        feature_noise_sigma=cfg.augment.feature_noise_sigma,
        feature_mask_prob=cfg.augment.feature_mask_prob,
        node_drop_prob=cfg.augment.node_drop_prob,
        edge_perturb_ratio=cfg.augment.edge_perturb_ratio,
        seed=seed,
    )
    params = EncoderParams.initialize(
        table.features.shape[1], cfg.encoder.dim_out,
        temperature=cfg.encoder.temperature,
        step_size=cfg.encoder.step_size,
        steps=cfg.encoder.steps, seed=seed)
    _, emb = train_encoder(table.features, policy, params)
    return emb


def build_graph(tables, cfg: RunConfig, seed: int):
    """Concatenation of per-modality hypergraphs."""
    parts = []
    for table in tables:
        if table.kind == "imaging":
            emb = embed_modality(table, cfg, seed)
            k = min(cfg.k, table.n - 1)
            parts.append(knn_modal_hypergraph(emb, k))
        else:
            parts.append(phenotypic_hypergraph(table, cfg.k))
        log.info("modality %s: %d hyperedges", table.name, parts[-1].m)
    return concat_hypergraphs(parts)


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    apply_overrides(cfg, args.set or [])
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _outdir(cfg: RunConfig) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def cmd_build_graph(args) -> int:
    cfg = _load(args)
    _, tables, _ = load_dataset(cfg)
    H = build_graph(tables, cfg, cfg.seed or 0)
    out = os.path.join(_outdir(cfg), "hypergraph.json")
    save_hypergraph(H, out)
    print(f"hypergraph: n={H.n} m={H.m} -> {out}")
    return 0


def cmd_train_encoder(args) -> int:
    cfg = _load(args)
    ids, tables, _ = load_dataset(cfg)
    outdir = _outdir(cfg)
    wrote = 0
    for table in tables:
        if table.kind != "imaging":
            continue
        cfg.encoder.enabled = True
        emb = embed_modality(table, cfg, cfg.seed or 0)
        path = os.path.join(outdir, f"embeddings_{table.name}.csv")
        with open(path, "w") as fh:
            cols = ",".join(f"z{j}" for j in range(emb.shape[1]))
            fh.write(f"node_id,{cols}\n")
            for node, row in zip(ids, emb):
                vals = ",".join(format(v, ".12g") for v in row)
                fh.write(f"{node},{vals}\n")
        wrote += 1
        print(f"embeddings: {table.name} -> {path}")
    if wrote == 0:
        raise ValueError("no imaging modality to train on")
    return 0


def _write_run_outputs(cfg, ids, y_hat, gamma, sources, history_records):
    outdir = _outdir(cfg)
    with DiagnosticsLog(os.path.join(outdir, "history.jsonl")) as dlog:
        for rec in history_records:
            dlog.write(rec)
    write_predictions_csv(os.path.join(outdir, "predictions.csv"),
                          ids, y_hat, gamma, sources)
    save_snapshot(cfg, os.path.join(outdir, "config_snapshot.toml"))


def _maybe_metrics(cfg, ids, y_hat):
    if not cfg.truth:
        return
    tids, y_true = load_labels_csv(cfg.truth)
    if tids != list(ids):
        order = {node: i for i, node in enumerate(tids)}
        try:
            y_true = y_true[[order[node] for node in ids]]
        except KeyError as e:
            raise ValueError(f"{cfg.truth}: unknown node_id {e}") from None
    rep = metrics(y_true, y_hat)
    rows = [["acc", rep.acc], ["error_rate", rep.error_rate]]
    for c in sorted(rep.sen):
        rows.append([f"sen_{c}", "" if rep.sen[c] is None else rep.sen[c]])
        rows.append([f"ppv_{c}", "" if rep.ppv[c] is None else rep.ppv[c]])
    write_metrics_csv(os.path.join(_outdir(cfg), "metrics.csv"),
                      rows, ["metric", "value"])


def cmd_diffuse(args) -> int:
    cfg = _load(args)
    ids, tables, labels = load_dataset(cfg)
    H = build_graph(tables, cfg, cfg.seed or 0)
    funcs, y_hat = run_multiclass(H, labels, flow_params_from_config(cfg))
    gamma = entropy_weights(funcs.U).gamma
    sources = ["given" if g else "diffused" for g in labels.given_mask]
    records = [{"class": l, "ratios": hist}
               for l, hist in enumerate(funcs.ratio_history)]
    _write_run_outputs(cfg, ids, y_hat, gamma, sources, records)
    _maybe_metrics(cfg, ids, y_hat)
    print(f"diffuse: predicted {len(ids)} nodes -> {cfg.output_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    if cfg.seed is None:
        raise ValueError("run requires --seed (or seed in the config)")
    ids, tables, labels = load_dataset(cfg)
    H = build_graph(tables, cfg, cfg.seed)
    imaging = [t for t in tables if t.kind == "imaging"]
    if not imaging:
        raise ValueError("the alternating loop needs an imaging modality "
                         "for its classifier features")
    X = np.hstack([t.features for t in imaging])
    y_hat, funcs, history = alternate(X, labels, H,
                                      flow_params_from_config(cfg),
                                      loop_params_from_config(cfg))
    final = history["final_labels"]
    sources = []
    for i in range(len(ids)):
        if final.source[i] == GIVEN:
            sources.append("given")
        elif final.source[i] == PSEUDO:
            sources.append("pseudo")
        else:
            sources.append("diffused")
    _write_run_outputs(cfg, ids, y_hat, history["gamma"], sources,
                       history["epochs"])
    _maybe_metrics(cfg, ids, y_hat)
    print(f"run: predicted {len(ids)} nodes over {cfg.loop.epochs} "
          f"epochs -> {cfg.output_dir}")
    return 0


def _spec_hash(spec: PlantedSpec) -> str:
    return hashlib.sha256(repr(spec).encode()).hexdigest()[:12]


def cmd_bench(args) -> int:
    cfg = _load(args)
    if cfg.seed is None:
        raise ValueError("bench requires --seed")
    rows = []
    for rep in range(args.reps):
        seed = cfg.seed + rep
        spec = PlantedSpec(blocks=args.blocks,
                           intra_edges=90 * max(1, args.blocks // 2),
                           seed=seed)
        H, tables, y_true = gen_planted(spec)
        rng = np.random.default_rng(seed)
        given = -np.ones(spec.n, dtype=int)
        n_lab = max(spec.blocks, int(round(args.label_fraction * spec.n)))
        lab = rng.choice(spec.n, n_lab, replace=False)
        given[lab] = y_true[lab]
        for c in range(spec.blocks):
            if not np.any(given == c):
                given[rng.choice(np.where(y_true == c)[0])] = c
        from .labels import LabelState
        labels = LabelState.from_given(given, spec.blocks)
        flow = flow_params_from_config(cfg)
        X = tables[0].features

        def row(method, y_hat):
            rep_metrics = metrics(y_true, y_hat)
            sen = [v for v in rep_metrics.sen.values() if v is not None]
            ppv = [v for v in rep_metrics.ppv.values() if v is not None]
            rows.append([_spec_hash(spec), seed, method, rep_metrics.acc,
                         float(np.mean(sen)) if sen else "",
                         float(np.mean(ppv)) if ppv else "",
                         rep_metrics.error_rate])

        _, y_diff = run_multiclass(H, labels, flow)
        row("diffusion", y_diff)
        y_loop, _, _ = alternate(X, labels, H, flow,
                                 loop_params_from_config(cfg))
        row("loop", y_loop)
    out = os.path.join(_outdir(cfg), "bench.csv")
    write_metrics_csv(out, rows, ["spec_hash", "seed", "method", "acc",
                                  "sen", "ppv", "error_rate"])
    print(f"bench: {len(rows)} rows -> {out}")
    return 0


def cmd_oracle(args) -> int:
    H = load_hypergraph(args.graph)
    subset, ratio = brute_force_best_ratio(H)
    print(json.dumps({"subset": [int(v) for v in subset],
                      "ratio": ratio}))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypertv",
        description="Semi-supervised labelling via hypergraph TV diffusion")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (flags win)")
        p.add_argument("--seed", type=int, required=seed_required)

    p = sub.add_parser("build-graph", help="construct and save the hypergraph")
    common(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train-encoder", help="train contrastive encoders")
    common(p)
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("diffuse", help="one diffusion pass, no loop")
    common(p)
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("run", help="full alternating pipeline")
    common(p, seed_required=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="planted-partition benchmark suite")
    common(p)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--label-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="brute-force best ratio of a saved graph")
    p.add_argument("--graph", required=True, help="hypergraph JSON path")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # fail fast, no partial prediction files
        print(f"error [{args.command}]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
