"""Command-line pipeline: each stage reads upstream artifacts, writes
its own artifact plus a manifest, and stays runnable in isolation.

Flags can also be supplied through a single run-config JSON file whose
top-level keys are command names; explicit flags win. The LLM credential
is only ever read from an environment variable, never from flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .embedding import (DEFAULT_N_COMPONENTS, MockEmbeddingBackend,
                        RemoteEmbeddingBackend, embed, fit_reducer,
                        read_embeddings, read_privileged, save_reducer,
                        transform, write_embeddings, write_privileged)
from .errors import DependencyError, DriveStyleError
from .evaluation import confusion, metrics, render_table, save_report
from .extraction import (CAR_FOLLOWING, LANE_CHANGING, CfExtractionParams,
                         LcThresholds, extract_car_following,
                         extract_lane_changes, read_segments, write_segments)
from .features import featurize, read_features, write_features
from .labeling import (DbscanParams, RuleConfig, read_labels, stage_labels,
                       write_labels)
from .manifest import write_manifest
from .semantics import (MockChatBackend, RemoteChatBackend, batch_describe,
                        write_semantic_results, read_semantic_results)
from .svmplus import (DEFAULT_HYPERPARAMS, CvDataset, SmoConfig, grid_search_cv,
                      load_model, predict_multiclass, resolve_kernel,
                      save_model, train_ovo)
from .trajectory import (SchemaConfig, load_trajectories, read_series_store,
                         write_series_store)

SCENARIO_FLAGS = {"cf": CAR_FOLLOWING, "lc": LANE_CHANGING}


def _require(path: str, producing_stage: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DependencyError(
            f"missing upstream artifact {p}; run the '{producing_stage}' stage first")
    return p


def _load_labeled_matrix(features_path, labels_path, privileged_path=None):
    fvs = {f.segment_id: f for f in read_features(_require(features_path, "featurize"))}
    labels = read_labels(_require(labels_path, "label"))
    privileged = None
    if privileged_path is not None:
        privileged = {p.segment_id: p for p in read_privileged(_require(privileged_path, "reduce"))}
    ids, X, y, Xs = [], [], [], []
    for lab in labels:
        if lab.segment_id not in fvs:
            continue
        if privileged is not None and lab.segment_id not in privileged:
            continue
        ids.append(lab.segment_id)
        X.append(fvs[lab.segment_id].values)
        y.append(lab.label)
        if privileged is not None:
            Xs.append(privileged[lab.segment_id].x_star)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    Xs = np.asarray(Xs, dtype=float) if privileged is not None else None
    return ids, X, y, Xs


def cmd_ingest(args) -> int:
    schema = SchemaConfig.from_file(_require(args.schema, "ingest (schema config)"))
    series = load_trajectories(_require(args.input, "ingest (raw csv)"), schema)
    write_series_store(args.out, series)
    write_manifest("ingest", [args.input, args.schema], [args.out],
                   {"schema": str(args.schema)})
    print(f"ingest: {len(series)} vehicles -> {args.out}")
    return 0


def cmd_extract(args) -> int:
    schema = SchemaConfig.from_file(_require(args.schema, "ingest (schema config)"))
    series = read_series_store(_require(args.series, "ingest"))
    scenario = SCENARIO_FLAGS[args.scenario]
    if scenario == CAR_FOLLOWING:
        params = CfExtractionParams(
            max_gap_m=args.max_gap, min_duration_s=args.min_duration,
            min_speed_ms=args.min_speed)
        segments = extract_car_following(series, params, source=schema.meta.recording_id)
        summary = {"retained": len(segments)}
    else:
        thresholds = LcThresholds(
            v_lat_start=args.v_lat_start, v_lat_end=args.v_lat_end,
            max_thw_s=args.max_thw)
        segments, lc_summary = extract_lane_changes(
            series, schema.meta, thresholds, source=schema.meta.recording_id)
        summary = lc_summary.__dict__
    write_segments(args.out, segments)
    write_manifest(f"extract-{args.scenario}", [args.series, args.schema], [args.out],
                   {"scenario": args.scenario, "summary": summary})
    print(f"extract {args.scenario}: {len(segments)} segments -> {args.out} ({summary})")
    return 0


def cmd_featurize(args) -> int:
    segments = read_segments(_require(args.segments, "extract"))
    fvs = [featurize(seg, ttc_cap=args.ttc_cap) for seg in segments]
    write_features(args.out, fvs)
    write_manifest("featurize", [args.segments], [args.out], {"ttc_cap": args.ttc_cap})
    print(f"featurize: {len(fvs)} vectors -> {args.out}")
    return 0


def cmd_label(args) -> int:
    fvs = read_features(_require(args.features, "featurize"))
    segments = read_segments(_require(args.segments, "extract"))
    rules = RuleConfig()
    dbscan_params = DbscanParams(eps=args.eps, min_pts=args.min_pts)
    if args.stage == "rules":
        from .labeling import rule_label
        by_id = {s.segment_id: s for s in segments}
        labeled = [lab for fv in fvs
                   if (lab := rule_label(fv, by_id.get(fv.segment_id), rules)) is not None]
        pending = [fv.segment_id for fv in fvs
                   if fv.segment_id not in {l.segment_id for l in labeled}]
    else:
        labeled, pending = stage_labels(fvs, segments, rules, dbscan_params)
    if args.manual:
        manual = read_labels(_require(args.manual, "annotation export"))
        manual_ids = {m.segment_id for m in manual}
        labeled = labeled + [m for m in manual if m.segment_id in set(pending)]
        pending = [sid for sid in pending if sid not in manual_ids]
    write_labels(args.out, labeled)
    pending_path = Path(args.out).with_name(Path(args.out).stem + ".pending.json")
    pending_path.write_text(json.dumps(sorted(pending)) + "\n", encoding="utf-8")
    inputs = [args.features, args.segments] + ([args.manual] if args.manual else [])
    write_manifest("label", inputs, [args.out, pending_path],
                   {"stage": args.stage, "eps": args.eps, "min_pts": args.min_pts,
                    "rules": rules.__dict__})
    print(f"label: {len(labeled)} labeled, {len(pending)} pending -> {args.out}")
    return 0


def _chat_backend(args):
    if args.backend == "mock":
        return MockChatBackend()
    if not args.endpoint:
        raise DependencyError("remote backend requires --endpoint")
    return RemoteChatBackend(
        endpoint_url=args.endpoint, model_id=args.model,
        api_key_env_var=args.api_key_env)


def cmd_describe(args) -> int:
    segments = read_segments(_require(args.segments, "extract"))
    backend = _chat_backend(args)
    batch = batch_describe(segments, backend,
                           concurrency_limit=args.concurrency, cache_dir=args.cache_dir)
    write_semantic_results(args.out, batch.results)
    write_manifest("describe", [args.segments], [args.out],
                   {"backend": args.backend, "model_id": backend.model_id,
                    "concurrency": args.concurrency})
    print(f"describe: {len(batch.results)} results "
          f"({batch.backend_calls} backend calls, {batch.cache_hits} cached, "
          f"{len(batch.failures)} failed) -> {args.out}")
    if batch.failures:
        for sid, err in batch.failures.items():
            print(f"  failed {sid}: {err}", file=sys.stderr)
        return 1
    return 0


def cmd_embed(args) -> int:
    results = read_semantic_results(_require(args.semantics, "describe"))
    if args.backend == "mock":
        backend = MockEmbeddingBackend()
    else:
        if not args.endpoint:
            raise DependencyError("remote backend requires --endpoint")
        backend = RemoteEmbeddingBackend(
            endpoint_url=args.endpoint, model_id=args.model, api_key="")
    embeddings = embed(results, backend)
    write_embeddings(args.out, embeddings)
    write_manifest("embed", [args.semantics], [args.out],
                   {"backend": args.backend, "model_id": backend.model_id})
    print(f"embed: {len(embeddings)} vectors (dim {len(embeddings[0].vector)}) -> {args.out}")
    return 0


def cmd_reduce(args) -> int:
    embeddings = read_embeddings(_require(args.embeddings, "embed"))
    reducer = fit_reducer(embeddings, n_components=args.n_components)
    vectors = transform(reducer, embeddings)
    write_privileged(args.out, vectors)
    save_reducer(args.reducer_out, reducer)
    write_manifest("reduce", [args.embeddings], [args.out, args.reducer_out],
                   {"n_components": args.n_components})
    print(f"reduce: {len(vectors)} privileged vectors (D*={args.n_components}) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    use_privileged = args.model_type == "svmplus"
    ids, X, y, Xs = _load_labeled_matrix(
        args.features, args.labels, args.privileged if use_privileged else None)
    scenario = SCENARIO_FLAGS[args.scenario]
    defaults = DEFAULT_HYPERPARAMS[scenario]
    C = args.C if args.C is not None else defaults["C"]
    gamma = args.gamma if args.gamma is not None else defaults["gamma"]
    kernel = resolve_kernel(args.lam, args.lam_star, X, Xs)
    smo = SmoConfig(tolerance=args.tolerance)
    model = train_ovo(X, Xs, y, C=C, gamma=gamma, kernel=kernel, smo=smo,
                      scenario=scenario,
                      provenance={"model_type": args.model_type, "C": C, "gamma": gamma,
                                  "lam": kernel.lam, "lam_star": kernel.lam_star,
                                  "seed": args.seed, "n_train": len(ids)})
    digest = save_model(args.out, model)
    inputs = [args.features, args.labels] + ([args.privileged] if use_privileged else [])
    write_manifest("train", inputs, [args.out],
                   {"model_type": args.model_type, "C": C, "gamma": gamma,
                    "scenario": args.scenario}, seed=args.seed)
    not_conv = [clf.class_pair for clf in model.classifiers if not clf.converged]
    if not_conv:
        print(f"warning: non-converged pairs {not_conv}", file=sys.stderr)
    print(f"train: {args.model_type} on {len(ids)} segments, "
          f"{len(model.classifiers)} pairwise classifiers -> {args.out} (sha256 {digest[:12]})")
    return 0


def cmd_predict(args) -> int:
    # inference consumes the model and decision features only; semantics,
    # embeddings and privileged artifacts are never read here
    model = load_model(_require(args.model, "train"))
    fvs = read_features(_require(args.features, "featurize"))
    X = np.asarray([fv.values for fv in fvs], dtype=float)
    y_hat = predict_multiclass(model, X)
    with open(args.out, "w", encoding="utf-8") as fh:
        for fv, z in zip(fvs, y_hat):
            fh.write(json.dumps({"segment_id": fv.segment_id, "label": int(z)},
                                sort_keys=True))
            fh.write("\n")
    write_manifest("predict", [args.model, args.features], [args.out], {})
    print(f"predict: {len(fvs)} segments -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(_require(args.model, "train"))
    ids, X, y, _ = _load_labeled_matrix(args.features, args.labels)
    y_hat = predict_multiclass(model, X)
    classes = tuple(sorted(set(int(v) for v in y)))
    report = metrics(confusion(y, y_hat, classes))
    save_report(args.out, report)
    table = render_table(report, title=f"scenario: {model.scenario}")
    Path(args.table).write_text(table, encoding="utf-8")
    write_manifest("evaluate", [args.model, args.features, args.labels],
                   [args.out, args.table], {})
    print(table)
    return 0


def cmd_gridsearch(args) -> int:
    use_privileged = args.model_type == "svmplus"
    ids, X, y, _ = _load_labeled_matrix(args.features, args.labels)
    embeddings = None
    if use_privileged:
        by_id = {e.segment_id: e for e in read_embeddings(_require(args.embeddings, "embed"))}
        keep = [i for i, sid in enumerate(ids) if sid in by_id]
        ids = [ids[i] for i in keep]
        X, y = X[keep], y[keep]
        embeddings = np.asarray([by_id[sid].vector for sid in ids])
    grid = json.loads(Path(args.grid).read_text()) if Path(args.grid).exists() \
        else json.loads(args.grid)
    dataset = CvDataset(segment_ids=ids, features=X, labels=y, embeddings=embeddings)
    result = grid_search_cv(
        dataset, grid, k=args.k, seed=args.seed, use_privileged=use_privileged,
        n_components=args.n_components, smo=SmoConfig(tolerance=args.tolerance),
        scenario=SCENARIO_FLAGS[args.scenario])
    Path(args.out).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    inputs = [args.features, args.labels] + ([args.embeddings] if use_privileged else [])
    write_manifest("gridsearch", inputs, [args.out],
                   {"grid": grid, "k": args.k, "model_type": args.model_type},
                   seed=args.seed)
    print(f"gridsearch: best {result.best} (macro-F1 {result.best_score:.4f}) -> {args.out}")
    for w in result.warnings:
        print(f"  warning: {w}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .server import load_store, make_server

    store = load_store(
        _require(args.segments, "extract"), args.store_dir,
        labels_path=args.labels, features_path=args.features,
        semantics_path=args.semantics)
    httpd = make_server(args.port, store, static_dir=args.static_dir)
    host, port = httpd.server_address
    print(f"annotation server listening on http://{host}:{port}", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivestyle",
        description="Driving-style recognition pipeline (extraction, semantics, "
                    "privileged-information training, annotation server)")
    parser.add_argument("--version", action="version", version=f"drivestyle {__version__}")
    parser.add_argument("--config", default=None,
                        help="run-config JSON; top-level keys are command names")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load raw CSV into the canonical series store")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="extract car-following or lane-changing segments")
    p.add_argument("--scenario", choices=["cf", "lc"], required=True)
    p.add_argument("--series", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-gap", type=float, default=120.0)
    p.add_argument("--min-duration", type=float, default=15.0)
    p.add_argument("--min-speed", type=float, default=5.0)
    p.add_argument("--v-lat-start", type=float, default=0.34)
    p.add_argument("--v-lat-end", type=float, default=0.2)
    p.add_argument("--max-thw", type=float, default=2.0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("featurize", help="segment-mean feature vectors")
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ttc-cap", type=float, default=99.0)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("label", help="three-stage style labeling")
    p.add_argument("--stage", choices=["rules", "cluster", "all"], default="all")
    p.add_argument("--features", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manual", default=None,
                   help="finalized manual labels (annotation export) merged into the output")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--min-pts", type=int, default=None)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("describe", help="semantic descriptions via chat backend")
    p.add_argument("--backend", choices=["remote", "mock"], default="mock")
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--api-key-env", default="DRIVESTYLE_API_KEY")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("embed", help="text embeddings of semantic descriptions")
    p.add_argument("--backend", choices=["remote", "mock"], default="mock")
    p.add_argument("--semantics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--model", default="all-mpnet-base-v2")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("reduce", help="fit reducer and emit privileged vectors")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--n-components", type=int, default=DEFAULT_N_COMPONENTS)
    p.add_argument("--out", required=True)
    p.add_argument("--reducer-out", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("train", help="train the one-vs-one classifier ensemble")
    p.add_argument("--scenario", choices=["cf", "lc"], required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--privileged", default=None)
    p.add_argument("--model-type", choices=["svmplus", "svm"], default="svmplus")
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--lam-star", type=float, default=None)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict styles from decision features only")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics report for a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", help="cross-validated hyperparameter search")
    p.add_argument("--scenario", choices=["cf", "lc"], required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--model-type", choices=["svmplus", "svm"], default="svmplus")
    p.add_argument("--grid", required=True, help="JSON file or inline JSON")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-components", type=int, default=DEFAULT_N_COMPONENTS)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("serve", help="run the annotation HTTP server")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--segments", required=True)
    p.add_argument("--store-dir", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--semantics", default=None)
    p.add_argument("--static-dir", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)

    parser = build_parser()
    if known.config:
        run_config = json.loads(Path(known.config).read_text(encoding="utf-8"))
        for action in parser._subparsers._group_actions:
            for name, subparser in action.choices.items():
                if name in run_config:
                    subparser.set_defaults(**{
                        k.replace("-", "_"): v for k, v in run_config[name].items()})

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DriveStyleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
