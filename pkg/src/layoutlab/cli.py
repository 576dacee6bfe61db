"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible or
conflicted generation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import (
    Corpus,
    CorpusEntry,
    build_synthetic_corpus,
    build_triplets,
    load_corpus,
    save_corpus,
    split,
    write_manifest,
)
from .encoder import (
    EncoderParams,
    LossConfig,
    TrainConfig,
    grad_check,
    train,
    write_loss_trace,
)
from .errors import (
    BackendContractError,
    ConflictedMatrixError,
    InfeasibleLayoutError,
    LayoutLabError,
)
from .model import parse_layout, parse_rico_document, serialize_layout
from .relations import RelationMatrix, derive_relations, validate
from .synthesis import GenerationRequest, complete, insert_random_nodes, synthesize
from .tasks import TaskSpec, run_task

USAGE_ERROR, DATA_ERROR, INFEASIBLE = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _canvas(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="layoutlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse RICO semantic JSON files into a corpus")
    p.add_argument("--rico-dir", required=True)
    p.add_argument("--canvas", type=_canvas, default=(1440, 2560))
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth-corpus", help="generate a synthetic corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-min", type=int, default=6)
    p.add_argument("--n-max", type=int, default=14)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="assign 7:2:1 train/val/test splits in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("triplets", help="write a triplet index for contrastive training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-encoder", help="train the graph encoder on a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--switch-frac", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--decode-weight", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.07)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)

    p = sub.add_parser("generate", help="synthesize a layout from a relation matrix file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--canvas", type=_canvas, default=(1440, 2560))
    p.add_argument("--backend", default="solver")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--insert-random", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("complete", help="fill masked nodes of a partial layout")
    p.add_argument("--layout", required=True)
    p.add_argument("--free", required=True, help="comma-separated node ids to re-solve")
    p.add_argument("--matrix", default=None, help="target matrix JSON (defaults to the layout's)")
    p.add_argument("--backend", default="solver")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="run an evaluation task and emit a metric report")
    p.add_argument("--task", required=True, choices=("ui_gen", "completion", "graph_editing"))
    p.add_argument("--dataset", "--manifest", dest="manifest", required=True,
                   help="corpus manifest path")
    p.add_argument("--label", default=None, help="dataset name in the report")
    p.add_argument("--split", default="test")
    p.add_argument("--backend", default="solver")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", default=None, help="decode targets with this encoder")
    p.add_argument("--out", required=True, help="report path prefix (.csv and .json)")

    p = sub.add_parser("grad-check", help="verify tape gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--epsilon", type=float, default=1e-5)

    p = sub.add_parser("serve", help="start the editing service")
    p.add_argument("--config", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--snapshot-dir", default=None)

    return parser


def _cmd_ingest(args) -> int:
    corpus = Corpus()
    rico_dir = Path(args.rico_dir)
    files = sorted(rico_dir.glob("*.json"))
    if not files:
        print(f"no .json files under {rico_dir}", file=sys.stderr)
        return DATA_ERROR
    for path in files:
        graph = parse_rico_document(path.read_bytes(), args.canvas)
        corpus.add(CorpusEntry(path.stem, graph, derive_relations(graph)))
    save_corpus(corpus, args.out)
    print(f"ingested {len(corpus)} layouts into {args.out}")
    return 0


def _cmd_synth_corpus(args) -> int:
    corpus = build_synthetic_corpus(args.count, args.seed, n_range=(args.n_min, args.n_max))
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} synthetic layouts to {args.out}")
    return 0


def _cmd_split(args) -> int:
    corpus = load_corpus(args.manifest)
    corpus.apply_split(split(corpus.ids, args.seed))
    write_manifest(corpus, args.manifest)
    sizes = {name: len(corpus.members(name)) for name in ("train", "val", "test")}
    print(f"split sizes: {sizes}")
    return 0


def _cmd_triplets(args) -> int:
    corpus = load_corpus(args.manifest)
    ids = corpus.members(args.split) or corpus.ids
    triplets = build_triplets(corpus, ids, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(
                json.dumps(
                    {
                        "gt": t.gt_id,
                        "neg": t.neg_id,
                        "ratio": t.pos.ratio,
                        "mask_seed": t.pos.seed,
                        "masked_ids": list(t.pos.masked_ids),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"wrote {len(triplets)} triplets to {args.out}")
    return 0


def _cmd_train_encoder(args) -> int:
    corpus = load_corpus(args.manifest)
    ids = corpus.members("train") or corpus.ids
    triplets = build_triplets(corpus, ids, args.seed)
    cfg = TrainConfig(
        epochs=args.epochs,
        lr_initial=args.lr,
        lr_switch_frac=args.switch_frac,
        batch_size=args.batch_size,
        decode_weight=args.decode_weight,
        loss=LossConfig(tau=args.tau),
        seed=args.seed,
    )
    params, trace = train(triplets, cfg)
    params.save(args.out)
    if args.trace:
        write_loss_trace(trace, args.trace)
    print(f"trained {args.epochs} epochs; final total loss {trace[-1].total:.4f}")
    return 0


def _cmd_generate(args) -> int:
    matrix = RelationMatrix.from_dict(json.loads(Path(args.matrix).read_text(encoding="utf-8")))
    conflicts = validate(matrix)
    if conflicts:
        print(json.dumps({"conflicts": [c.to_dict() for c in conflicts]}, indent=2))
        return INFEASIBLE
    n = matrix.n
    request = GenerationRequest(
        matrix, {}, frozenset(range(1, n + 1)), args.canvas, backend=args.backend, seed=args.seed
    )
    result = synthesize(request)
    if args.insert_random:
        result = insert_random_nodes(result, args.insert_random, args.seed)
    Path(args.out).write_text(
        serialize_layout(result.layout, result.relations_out), encoding="utf-8"
    )
    print(f"wrote layout with {result.layout.n} nodes to {args.out}")
    return 0


def _cmd_complete(args) -> int:
    text = Path(args.layout).read_text(encoding="utf-8")
    graph, relations = parse_layout(text)
    free_ids = {int(x) for x in args.free.split(",") if x.strip()}
    if args.matrix:
        target = RelationMatrix.from_dict(json.loads(Path(args.matrix).read_text(encoding="utf-8")))
    else:
        target = relations
    from .model import MASK, NO_CONTENT, ComponentNode, LayoutGraph

    nodes = tuple(
        ComponentNode(nd.node_id, MASK, None, NO_CONTENT) if nd.node_id in free_ids else nd
        for nd in graph.nodes
    )
    result = complete(LayoutGraph(graph.canvas, nodes), target, backend=args.backend, seed=args.seed)
    Path(args.out).write_text(
        serialize_layout(result.layout, result.relations_out), encoding="utf-8"
    )
    print(f"completed {len(free_ids)} nodes; wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    corpus = load_corpus(args.manifest)
    ids = corpus.members(args.split) or corpus.ids
    params = EncoderParams.load(args.checkpoint) if args.checkpoint else None
    spec = TaskSpec(
        task=args.task,
        dataset=args.label or Path(args.manifest).parent.name,
        backend=args.backend,
        seed=args.seed,
    )
    report = run_task(spec, corpus, ids, params=params)
    out = Path(args.out)
    report.write_csv(out.with_suffix(".csv"))
    out.with_suffix(".json").write_text(json.dumps(report.to_json_dict(), indent=2), encoding="utf-8")
    print(
        f"{args.task}: RE={report.re:.4f} mIoU={report.miou:.4f} "
        f"OL={report.ol:.4f} FID={report.fid:.4f} over {report.count} layouts"
    )
    return 0


def _cmd_grad_check(args) -> int:
    from .dataset import build_synthetic_corpus, build_triplets

    corpus = build_synthetic_corpus(max(args.samples * 2, 10), args.seed, n_range=(4, 8))
    rng = np.random.default_rng(args.seed)
    params = EncoderParams.initialize(args.seed)
    triplets = build_triplets(corpus, corpus.ids[: args.samples], args.seed)
    worst = 0.0
    for k, triplet in enumerate(triplets):
        err = grad_check(params, triplet, epsilon=args.epsilon, seed=int(rng.integers(2**31)))
        worst = max(worst, err)
        print(f"sample {k}: max relative error {err:.3e}")
    print(f"worst over {len(triplets)} samples: {worst:.3e}")
    return 0 if worst < 1e-4 else DATA_ERROR


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    if args.config:
        config = ServiceConfig.from_file(args.config)
    else:
        config = ServiceConfig()
    for name in ("host", "port", "manifest", "checkpoint", "snapshot_dir"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    addr = os.environ.get("LAYOUTLAB_ADDR")
    if addr:
        host, _, port = addr.partition(":")
        config.host = host or config.host
        if port:
            config.port = int(port)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "synth-corpus": _cmd_synth_corpus,
    "split": _cmd_split,
    "triplets": _cmd_triplets,
    "train-encoder": _cmd_train_encoder,
    "generate": _cmd_generate,
    "complete": _cmd_complete,
    "eval": _cmd_eval,
    "grad-check": _cmd_grad_check,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0,) else 0
    try:
        return _COMMANDS[args.command](args)
    except (ConflictedMatrixError, InfeasibleLayoutError, BackendContractError) as exc:
        payload = {"error": str(exc)}
        if isinstance(exc, ConflictedMatrixError):
            payload["conflicts"] = [c.to_dict() for c in exc.conflicts]
        print(json.dumps(payload, indent=2))
        return INFEASIBLE
    except LayoutLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
