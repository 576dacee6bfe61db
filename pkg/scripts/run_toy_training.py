"""Desk-scale training experiment: corpus, split, contrastive training, then
held-out ranking accuracy, per-channel decoder F1 and the relation-matrix
ablation. Mirrors the acceptance configuration."""

import argparse
import time

from layoutlab.dataset import build_synthetic_corpus, build_triplets, split
from layoutlab.encoder import (
    LossConfig,
    TrainConfig,
    decoder_f1,
    ranking_accuracy,
    train,
    write_loss_trace,
)
from layoutlab.tasks import ablation_reports


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--count", type=int, default=500)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--seed", type=int, default=5)
    parser.add_argument("--lr", type=float, default=0.01)
    parser.add_argument("--decode-weight", type=float, default=30.0)
    parser.add_argument("--switch-frac", type=float, default=0.4)
    parser.add_argument("--tau", type=float, default=0.1)
    parser.add_argument("--checkpoint", default=None)
    parser.add_argument("--trace", default=None)
    args = parser.parse_args()

    corpus = build_synthetic_corpus(args.count, args.seed)
    parts = split(corpus.ids, 42)
    corpus.apply_split(parts)
    print(f"corpus: {len(corpus)} layouts, split {len(parts.train)}/{len(parts.val)}/{len(parts.test)}")

    train_triplets = build_triplets(corpus, list(parts.train), 7)
    test_triplets = build_triplets(corpus, list(parts.test), 9)

    cfg = TrainConfig(
        epochs=args.epochs,
        lr_initial=args.lr,
        lr_switch_frac=args.switch_frac,
        batch_size=4,
        decode_weight=args.decode_weight,
        loss=LossConfig(tau=args.tau),
        seed=0,
    )
    started = time.time()
    params, trace = train(train_triplets, cfg)
    print(f"trained {args.epochs} epochs in {time.time() - started:.0f}s; "
          f"loss {trace[0].total:.3f} -> {trace[-1].total:.3f}")
    if args.checkpoint:
        params.save(args.checkpoint)
    if args.trace:
        write_loss_trace(trace, args.trace)

    rank = ranking_accuracy(test_triplets, params)
    pairs = [(corpus[i].graph, corpus[i].relations) for i in parts.test]
    f1 = decoder_f1(pairs, params)
    print(f"held-out ranking accuracy: {rank:.3f}")
    print("decoder F1:", ", ".join(f"{ch.value}={v:.3f}" for ch, v in f1.items()))

    with_rm, without_rm = ablation_reports(corpus, list(parts.test), params, seed=3)
    print(f"ablation  RE: {with_rm.re:.4f} (with matrix) vs {without_rm.re:.4f} (zeros)")
    print(f"ablation mIoU: {with_rm.miou:.4f} (with matrix) vs {without_rm.miou:.4f} (zeros)")


if __name__ == "__main__":
    main()
