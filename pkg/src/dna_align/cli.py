"""Command-line pipeline: gen-synth | train | eval | pipeline, driven by a
flat key=value config file.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .estimator import DnaAligner
from .evaluate import (
    EvalReport,
    map_at_k,
    overlap_rate,
    precision_at_k,
    rank_candidates,
    write_candidates_csv,
    write_report,
)
from .graph import (
    AnchorSet,
    DataError,
    DynamicGraph,
    ParseError,
    ingest_edge_events,
    read_anchor_file,
    read_edge_event_file,
)
from .lstm import NumericalError, save_checkpoint
from .subspace import DivergenceError, export_matrix_csv, load_matrix_csv, write_trace_csv
from .synth import SynthConfig, generate_instance, write_instance


def _synth_config(cfg: RunConfig) -> SynthConfig:
    return SynthConfig(
        n_base=cfg.n_base,
        num_snapshots=cfg.snapshots,
        growth=cfg.growth,
        churn=cfg.churn,
        overlap=cfg.lambda_overlap[0],
        edge_noise=cfg.edge_noise,
        eta=cfg.eta[0],
        activity_decay=cfg.activity_decay,
        activity_sigma=cfg.activity_sigma,
        weight_noise=cfg.weight_noise,
        seed=cfg.seed,
    )


def cmd_gen_synth(cfg: RunConfig, out_dir: str | Path) -> Path:
    """Generate a planted instance and write event/anchor files + manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inst = generate_instance(_synth_config(cfg))
    files = write_instance(inst, out)
    manifest = {
        "config": cfg.as_flat_dict(),
        "config_hash": cfg.config_hash(),
        "files": files,
        "num_users_source": inst.g_s.num_users,
        "num_users_target": inst.g_t.num_users,
        "num_snapshots": inst.g_s.num_snapshots,
        "time_window": [0.0, float(inst.g_s.num_snapshots)],
        "num_truth_anchors": len(inst.truth),
        "num_train_anchors": len(inst.train_anchors),
        "num_test_anchors": len(inst.test_anchors),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def _load_manifest(data_dir: Path) -> dict:
    path = data_dir / "manifest.json"
    if not path.exists():
        raise DataError(f"missing manifest.json in {data_dir}")
    return json.loads(path.read_text())


def _ingest_side(cfg: RunConfig, data_dir: Path, manifest: dict, side: str) -> DynamicGraph:
    events, _ = read_edge_event_file(data_dir / manifest["files"][f"{side}_events"])
    window = tuple(manifest["time_window"])
    g = ingest_edge_events(
        events,
        manifest["num_snapshots"],
        window,
        directed=cfg.directed,
        num_users=manifest[f"num_users_{side}"],
        interval_scoped=cfg.interval_scoped,
    )
    if cfg.static_ablation:
        g = g.final_only()
    return g


def _aligner(cfg: RunConfig) -> DnaAligner:
    return DnaAligner(
        d_u=cfg.d_u, d_c=cfg.d_c, ego_width=cfg.ego_width,
        xi=cfg.xi, omega=cfg.omega,
        alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma,
        learning_rate=cfg.learning_rate, keep_prob=cfg.keep_prob, l2=cfg.l2,
        batch_size=cfg.batch_size, epochs_per_round=cfg.epochs_per_round,
        pretrain_epochs=cfg.pretrain_epochs, max_rounds=cfg.max_rounds,
        tol=cfg.tol, consistency=cfg.consistency, distance=cfg.distance,
        exclude_train_targets=cfg.exclude_train_targets,
        random_state=cfg.seed,
    )


def cmd_train(cfg: RunConfig, data_dir: str | Path, out_dir: str | Path) -> Path:
    """Ingest -> ego tensors -> pretrain -> alternating optimization;
    persists embeddings, projections, checkpoints and the trace CSV."""
    data_dir, out = Path(data_dir), Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest(data_dir)
    g_s = _ingest_side(cfg, data_dir, manifest, "source")
    g_t = _ingest_side(cfg, data_dir, manifest, "target")
    train_anchors = read_anchor_file(data_dir / manifest["files"]["train_anchors"])

    aligner = _aligner(cfg).fit(g_s, g_t, train_anchors)

    chash = cfg.config_hash()
    export_matrix_csv(aligner.identity_s_, out / "V_s.csv", config_hash=chash)
    export_matrix_csv(aligner.identity_t_, out / "V_t.csv", config_hash=chash)
    export_matrix_csv(aligner.result_.state.q_s, out / "Q_s.csv", config_hash=chash)
    export_matrix_csv(aligner.result_.state.q_t, out / "Q_t.csv", config_hash=chash)
    save_checkpoint(aligner.params_s_, out / "checkpoint_s.npz", config_hash=chash)
    save_checkpoint(aligner.params_t_, out / "checkpoint_t.npz", config_hash=chash)
    write_trace_csv(aligner.trace_, out / "trace.csv", config_hash=chash)
    model_manifest = {
        "config": cfg.as_flat_dict(),
        "config_hash": chash,
        "data_config_hash": manifest.get("config_hash", ""),
        "static_ablation": cfg.static_ablation,
        "rounds_run": len(aligner.trace_),
        "final_objective": aligner.trace_[-1]["J_total"] if aligner.trace_ else None,
    }
    (out / "manifest.json").write_text(json.dumps(model_manifest, indent=2, sort_keys=True) + "\n")
    return out


def cmd_eval(
    cfg: RunConfig,
    model_dir: str | Path,
    data_dir: str | Path,
    out_dir: str | Path | None = None,
    *,
    force: bool = False,
) -> dict:
    """Rank test anchors in the common subspace and report the metrics for
    every configured K."""
    model_dir, data_dir = Path(model_dir), Path(data_dir)
    out = Path(out_dir) if out_dir is not None else model_dir
    out.mkdir(parents=True, exist_ok=True)
    data_manifest = _load_manifest(data_dir)
    model_manifest = _load_manifest(model_dir)

    v_s, hash_s = load_matrix_csv(model_dir / "V_s.csv")
    v_t, hash_t = load_matrix_csv(model_dir / "V_t.csv")
    if not force:
        expected = model_manifest.get("data_config_hash", "")
        got = data_manifest.get("config_hash", "")
        if expected and got and expected != got:
            raise DataError(
                f"model was trained on data hash {expected} but this data has {got}"
                " (use --force to override)"
            )
        if hash_s != model_manifest["config_hash"] or hash_t != model_manifest["config_hash"]:
            raise DataError("embedding files do not match the model manifest hash")

    test_anchors = read_anchor_file(data_dir / data_manifest["files"]["test_anchors"])
    truth = test_anchors.as_dict()
    sources = sorted(truth)
    excluded: tuple[int, ...] = ()
    if cfg.exclude_train_targets:
        train_anchors = read_anchor_file(data_dir / data_manifest["files"]["train_anchors"])
        excluded = tuple(l for _, l in train_anchors.pairs)

    def direction_reports(vs, vt, truth_map, srcs, excl):
        reports = []
        for k in cfg.k_list:
            lists = rank_candidates(vs, vt, srcs, k, distance=cfg.distance,
                                    exclude_targets=excl)
            reports.append(EvalReport(
                k=k, n_test_anchors=len(srcs),
                precision_at_k=precision_at_k(lists, truth_map, k),
                map_at_k=map_at_k(lists, truth_map, k),
                distance=cfg.distance,
                exclude_train_targets=cfg.exclude_train_targets,
                symmetric=cfg.symmetric_eval,
            ))
        return reports

    reports = direction_reports(v_s, v_t, truth, sources, excluded)
    if cfg.symmetric_eval:
        rev_truth = {l: k for k, l in truth.items()}
        rev = direction_reports(v_t, v_s, rev_truth, sorted(rev_truth), ())
        reports = [
            replace(fwd, precision_at_k=(fwd.precision_at_k + bwd.precision_at_k) / 2,
                    map_at_k=(fwd.map_at_k + bwd.map_at_k) / 2)
            for fwd, bwd in zip(reports, rev)
        ]

    k_max = max(cfg.k_list)
    lists = rank_candidates(v_s, v_t, sources, k_max, distance=cfg.distance,
                            exclude_targets=excluded)
    write_candidates_csv(lists, out / "candidates.csv", config_hash=cfg.config_hash())
    extra = {
        "config_hash": cfg.config_hash(),
        "model_config_hash": model_manifest["config_hash"],
        "overlap_rate": overlap_rate(
            data_manifest["num_truth_anchors"],
            data_manifest["num_users_source"],
            data_manifest["num_users_target"],
        ),
        "static_ablation": model_manifest.get("static_ablation", False),
    }
    write_report(reports, out / "report.json", extra=extra)
    return json.loads((out / "report.json").read_text())


def cmd_pipeline(cfg: RunConfig, out_dir: str | Path, *, force: bool = False) -> list[dict]:
    """gen-synth -> train -> eval for every sweep point; per-point subdirs."""
    out = Path(out_dir)
    results = []
    points = cfg.sweep_points()
    for point in points:
        if len(points) == 1:
            sub = out
        else:
            sub = out / (f"lam{point.lambda_overlap[0]:g}_eta{point.eta[0]:g}"
                         f"_M{point.snapshots}")
        data_dir = cmd_gen_synth(point, sub / "data")
        model_dir = cmd_train(point, data_dir, sub / "model")
        results.append(cmd_eval(point, model_dir, data_dir, force=force))
    return results


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dna-align",
        description="Dynamic social network alignment pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, data: bool = False, model: bool = False):
        p.add_argument("--config", required=False, help="key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--static-ablation", action="store_true",
                       help="force M=1 on the final cumulative snapshot")
        p.add_argument("--force", action="store_true",
                       help="skip config-hash consistency checks")
        if data:
            p.add_argument("--data", required=True, help="instance data directory")
        if model:
            p.add_argument("--model", required=True, help="trained model directory")

    common(sub.add_parser("gen-synth", help="generate a planted-truth instance"))
    common(sub.add_parser("train", help="train on an ingested instance"), data=True)
    common(sub.add_parser("eval", help="evaluate a trained model"), data=True, model=True)
    common(sub.add_parser("pipeline", help="gen-synth + train + eval end to end"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        if args.static_ablation:
            overrides["static_ablation"] = "true"
        cfg = load_config(args.config, overrides)
        if args.command == "gen-synth":
            cmd_gen_synth(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.data, args.out)
        elif args.command == "eval":
            cmd_eval(cfg, args.model, args.data, args.out, force=args.force)
        elif args.command == "pipeline":
            cmd_pipeline(cfg, args.out, force=args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
