"""Command-line surface: generate, train, explain, evaluate, export-dot.

Every command resolves its configuration from (lowest to highest
precedence) a named per-dataset preset, a key=value config file, and
explicit flags, then writes its artifacts plus a manifest recording the
resolved configuration, seeds, input/output paths, wall-clock time, and
sha256 of every artifact.  Exit code 0 on success; any failure prints a
one-line diagnostic on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import datasets as ds_mod
from .datasets import (
    GENERATORS,
    GraphDataset,
    NodeDataset,
    read_ground_truth_json,
    write_ground_truth_json,
)
from .explain import (
    ExplainConfig,
    OBJECTIVES,
    dot_from_payload,
    explain,
    export_dot,
    export_explanation_json,
    load_explanation_json,
)
from .graphs import khop_subgraph, read_graph_json, write_graph_json
from .metrics import (
    aggregate_reports,
    mask_arrays_from_export,
    score_explanations,
    write_report_csv,
)
from .model import HIDDEN_DIMS, load_params, save_params
from .presets import TOPK_EDGES, TOPK_NODES, explain_preset, train_preset
from .training import TrainConfig, train, write_curve_csv


class CliError(RuntimeError):
    """User-facing failure; the message becomes the one-line diagnostic."""


# ---------------------------------------------------------------- manifests

@dataclass
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    config: dict
    seed: int | None
    inputs: list
    outputs: list
    wall_clock_s: float = 0.0
    artifact_hashes: dict = field(default_factory=dict)

    def write(self, path):
        self.artifact_hashes = {
            str(p): _sha256(p) for p in self.outputs if Path(p).is_file()
        }
        payload = asdict(self)
        payload["inputs"] = [str(p) for p in self.inputs]
        payload["outputs"] = [str(p) for p in self.outputs]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ------------------------------------------------------------ config files

def parse_config_file(path) -> dict:
    """key=value lines; # starts a comment; values coerced to int/float/bool."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise CliError(f"{path}:{lineno}: empty key")
            out[key] = _coerce(value)
    return out


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _build_config(cls, preset: dict, file_cfg: dict, overrides: dict):
    """Layer preset < config file < flags, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}
    merged = dict(preset)
    for source, name in ((file_cfg, "config file"), (overrides, "flag")):
        for key, value in source.items():
            if key not in known:
                raise CliError(f"unknown {name} key {key!r}; known: {sorted(known)}")
            merged[key] = value
    unknown = set(merged) - known
    if unknown:
        raise CliError(f"unknown preset keys {sorted(unknown)}; known: {sorted(known)}")
    return cls(**merged).validate()


def _flag_overrides(args, names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


# -------------------------------------------------------------- data loading

def _load_dataset(path):
    """A dataset file is either one node-task graph or a directory-free
    graph-task collection (a JSON list of graph payload file paths is out
    of scope; graph tasks load through the TU loader)."""
    graph, features, task, label = read_graph_json(path)
    name = Path(path).stem.removesuffix(".graph")
    if task == "node":
        labels = np.asarray(label, dtype=np.int64)
        return NodeDataset(
            name=name,
            graph=graph,
            features=features,
            labels=labels,
            num_classes=int(labels.max()) + 1,
        )
    return GraphDataset(
        name=name,
        graphs=[graph],
        features=[features],
        labels=np.asarray([label], dtype=np.int64),
        num_classes=int(label) + 1,
    )


def _dataset_from_args(args):
    path = Path(args.data)
    if path.is_dir():
        name = getattr(args, "tu_name", None) or path.name
        return ds_mod.load_tu_dataset(path, name)
    return _load_dataset(path)


# ----------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    if args.dataset not in GENERATORS:
        raise CliError(
            f"unknown dataset {args.dataset!r}; known: {sorted(GENERATORS)}"
        )
    t0 = time.time()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, gt = GENERATORS[args.dataset](seed=args.seed)
    graph_path = out_dir / f"{args.dataset}.graph.json"
    gt_path = out_dir / f"{args.dataset}.gt.json"
    write_graph_json(graph_path, dataset.graph, dataset.features, "node",
                     dataset.labels)
    write_ground_truth_json(gt_path, gt)
    manifest = RunManifest(
        command="generate",
        config={"dataset": args.dataset},
        seed=args.seed,
        inputs=[],
        outputs=[graph_path, gt_path],
        wall_clock_s=time.time() - t0,
    )
    manifest.write(out_dir / f"{args.dataset}.manifest.json")
    print(f"wrote {graph_path} and {gt_path}")
    return 0


def cmd_train(args) -> int:
    t0 = time.time()
    dataset = _dataset_from_args(args)
    preset = train_preset(args.preset) if args.preset else {}
    file_cfg = parse_config_file(args.config) if args.config else {}
    overrides = _flag_overrides(
        args, ("learning_rate", "epochs", "weight_decay", "dropout",
               "train_fraction", "seed"),
    )
    cfg = _build_config(TrainConfig, preset, file_cfg, overrides)
    params, result = train(dataset, cfg)
    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    save_params(out_model, params, meta={
        "dataset": dataset.name,
        "test_accuracy": result.test_accuracy,
        "train_accuracy": result.train_accuracy,
    })
    curve_path = out_model.with_suffix(".curve.csv")
    write_curve_csv(curve_path, result.curve)
    manifest = RunManifest(
        command="train",
        config=asdict(cfg),
        seed=cfg.seed,
        inputs=[args.data],
        outputs=[out_model, curve_path],
        wall_clock_s=time.time() - t0,
    )
    manifest.write(out_model.with_suffix(".manifest.json"))
    print(
        f"trained {dataset.name}: train acc {result.train_accuracy:.4f}, "
        f"test acc {result.test_accuracy:.4f}"
    )
    return 0


def _resolve_selector(args, dataset, gt):
    """Instance ids to explain: explicit node/graph lists or all motif nodes."""
    picked = [s for s in (args.nodes, args.graphs) if s] + (
        ["motif"] if args.all_motif_nodes else []
    )
    if len(picked) != 1:
        raise CliError("pick exactly one of --nodes, --graphs, --all-motif-nodes")
    if args.all_motif_nodes:
        if gt is None:
            raise CliError("--all-motif-nodes needs --gt")
        if not isinstance(dataset, NodeDataset):
            raise CliError("--all-motif-nodes applies to node-task datasets")
        return list(gt.nodes())
    raw = args.nodes if args.nodes else args.graphs
    if isinstance(dataset, NodeDataset) and args.graphs:
        raise CliError("node-task dataset: use --nodes, not --graphs")
    if isinstance(dataset, GraphDataset) and args.nodes:
        raise CliError("graph-task dataset: use --graphs, not --nodes")
    try:
        ids = [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise CliError(f"selector must be comma-separated ints, got {raw!r}")
    if not ids:
        raise CliError("empty instance selector")
    return ids


def _explain_one(model, dataset, cfg, instance_id, out_dir, k_hops):
    if isinstance(dataset, NodeDataset):
        inst = dataset.instance(model, instance_id)
        sub, node_ids = khop_subgraph(inst, k_hops)
        target, center = sub, instance_id
    else:
        target, node_ids, center = dataset.instance(model, instance_id), None, None
    expl = explain(model, target, cfg)
    stem = f"{'node' if center is not None else 'graph'}-{instance_id}"
    json_path = Path(out_dir) / f"{stem}.explanation.json"
    dot_path = Path(out_dir) / f"{stem}.dot"
    export_explanation_json(
        expl, path=json_path, instance_id=instance_id,
        node_ids=node_ids, center=center,
    )
    export_dot(expl, path=dot_path, node_ids=node_ids, center=center)
    return json_path, dot_path


def cmd_explain(args) -> int:
    t0 = time.time()
    dataset = _dataset_from_args(args)
    model = load_params(args.model)
    gt = read_ground_truth_json(args.gt) if args.gt else None
    preset = explain_preset(args.preset, args.objective) if args.preset else {}
    file_cfg = parse_config_file(args.config) if args.config else {}
    overrides = _flag_overrides(
        args, ("objective", "alpha_edge", "beta_edge", "alpha_feature",
               "beta_feature", "epochs", "step_size", "mc_samples",
               "sigma_edge", "sigma_feature", "extract_mode", "k_edges",
               "k_nodes", "threshold", "seed"),
    )
    preset = dict(preset)
    preset.setdefault("objective", args.objective)
    if args.preset:
        # extraction sizes ride along with the preset when known
        preset.setdefault("k_edges", TOPK_EDGES.get(args.preset))
        preset.setdefault("k_nodes", TOPK_NODES.get(args.preset))
    cfg = _build_config(ExplainConfig, preset, file_cfg, overrides)
    ids = _resolve_selector(args, dataset, gt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            futures = [
                pool.submit(_explain_one, model, dataset, cfg, i, out_dir,
                            args.k_hops)
                for i in ids
            ]
            for fut in futures:
                outputs.extend(fut.result())
    else:
        for i in ids:
            outputs.extend(_explain_one(model, dataset, cfg, i, out_dir,
                                        args.k_hops))
    manifest = RunManifest(
        command="explain",
        config=asdict(cfg) | {"instances": ids, "k_hops": args.k_hops},
        seed=cfg.seed,
        inputs=[args.data, args.model] + ([args.gt] if args.gt else []),
        outputs=outputs,
        wall_clock_s=time.time() - t0,
    )
    manifest.write(out_dir / "manifest.json")
    print(f"explained {len(ids)} instance(s) into {out_dir}")
    return 0


def _gt_local_edges(gt, payload):
    """Ground-truth edge indices in the explanation's local edge order."""
    center = payload.get("center")
    instance_id = payload["instance_id"]
    node = center if center is not None else instance_id
    want = set()
    for u, v in gt.edges_for(int(node)):
        want.add((int(u), int(v)))
        want.add((int(v), int(u)))
    return [
        i for i, (u, v) in enumerate(payload["edges"])
        if (int(u), int(v)) in want
    ]


def cmd_evaluate(args) -> int:
    t0 = time.time()
    dataset = _dataset_from_args(args)
    model = load_params(args.model)
    gt = read_ground_truth_json(args.gt) if args.gt else None
    expl_dir = Path(args.explanations)
    files = sorted(expl_dir.glob("*.explanation.json"))
    if not files:
        raise CliError(f"no *.explanation.json files under {expl_dir}")
    instances, masks, gt_sets = [], [], []
    for f in files:
        payload = load_explanation_json(f)
        if payload.get("task", "node") == "node":
            center = payload.get("center")
            target = center if center is not None else payload["instance_id"]
            inst = dataset.instance(model, int(target))
            sub, node_ids = khop_subgraph(inst, args.k_hops)
            order = {int(orig): i for i, orig in enumerate(node_ids)}
            # re-align the stored masks to this run's local edge order
            stored = {
                (int(u), int(v)): w
                for (u, v), w in zip(payload["edges"], payload["edge_mask"])
            }
            stored.update({(v, u): w for (u, v), w in stored.items()})
            try:
                edge_mask = [
                    stored[(int(node_ids[u]), int(node_ids[v]))]
                    for u, v in sub.graph.edges
                ]
            except KeyError as exc:
                raise CliError(
                    f"{f}: stored edges do not cover instance edge {exc}"
                )
            if len(stored) != 2 * sub.num_edges:
                raise CliError(
                    f"{f}: {len(stored) // 2} stored edges vs "
                    f"{sub.num_edges} instance edges"
                )
            payload = dict(payload)
            payload["edge_mask"] = edge_mask
            if payload.get("optimizes_nodes"):
                nm = dict(zip((int(n) for n in payload["nodes"]),
                              payload["node_mask"]))
                payload["node_mask"] = [nm[int(o)] for o in node_ids]
            instances.append(sub)
            masks.append(mask_arrays_from_export(payload, sub))
        else:
            inst = dataset.instance(model, int(payload["instance_id"]))
            instances.append(inst)
            masks.append(mask_arrays_from_export(payload, inst))
        if gt is not None:
            gt_sets.append(_gt_local_edges(gt, payload))
    k = args.k_edges or (gt.k_edges if gt is not None else None)
    report = score_explanations(
        model, instances, masks,
        ground_truth=gt_sets if gt is not None else None,
        k=k,
    )
    agg = aggregate_reports([report])
    out_csv = Path(args.out)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out_csv, args.dataset_name or dataset.name,
                     args.method or "nsexplain", agg, report.N)
    manifest = RunManifest(
        command="evaluate",
        config={"k_edges": k, "k_hops": args.k_hops,
                "explanations": str(expl_dir)},
        seed=None,
        inputs=[args.data, args.model] + ([args.gt] if args.gt else []),
        outputs=[out_csv],
        wall_clock_s=time.time() - t0,
    )
    manifest.write(out_csv.with_suffix(".manifest.json"))
    for name, (mean, _) in agg.items():
        if mean is not None:
            print(f"{name}: {mean:.4f}")
    return 0


def cmd_export_dot(args) -> int:
    payload = load_explanation_json(args.explanation)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dot_from_payload(payload, path=out)
    print(f"wrote {out}")
    return 0


# ------------------------------------------------------------------ parser

def _add_config_flags(p, names_types):
    for name, typ in names_types:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ,
                       default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsexplain",
        description="Necessity/sufficiency explanations for GCN predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic benchmark to disk")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the 3-layer GCN on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--tu-name", default=None,
                   help="dataset name when --data is a TU-format directory")
    p.add_argument("--preset", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out-model", required=True)
    _add_config_flags(p, [
        ("learning_rate", float), ("epochs", int), ("weight_decay", float),
        ("dropout", float), ("train_fraction", float), ("seed", int),
    ])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="optimize masks for chosen instances")
    p.add_argument("--data", required=True)
    p.add_argument("--tu-name", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--gt", default=None)
    p.add_argument("--objective", default="pns-e", choices=OBJECTIVES)
    p.add_argument("--preset", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--nodes", default=None)
    p.add_argument("--graphs", default=None)
    p.add_argument("--all-motif-nodes", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--k-hops", type=int, default=len(HIDDEN_DIMS))
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p, [
        ("alpha_edge", float), ("beta_edge", float), ("alpha_feature", float),
        ("beta_feature", float), ("epochs", int), ("step_size", float),
        ("mc_samples", int), ("sigma_edge", float), ("sigma_feature", float),
        ("extract_mode", str), ("k_edges", int), ("k_nodes", int),
        ("threshold", float), ("seed", int),
    ])
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="score a directory of explanations")
    p.add_argument("--explanations", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tu-name", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--gt", default=None)
    p.add_argument("--k-edges", type=int, default=None)
    p.add_argument("--k-hops", type=int, default=len(HIDDEN_DIMS))
    p.add_argument("--dataset-name", default=None)
    p.add_argument("--method", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-dot", help="re-render DOT from an explanation file")
    p.add_argument("--explanation", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_dot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, OSError, KeyError, ValueError) as exc:
        print(f"nsexplain {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
