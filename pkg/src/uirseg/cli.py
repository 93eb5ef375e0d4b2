"""Batch entry points for every pipeline stage.

Every subcommand is fully determined by its flags plus --rng-seed. Exit codes:
0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import fusion as fusion_mod
from . import metrics as metrics_mod
from .imagecore import BinaryMask, load_image, load_mask, save_image, save_mask
from .interaction import (
    DEFAULT_D1,
    DEFAULT_D2,
    DEFAULT_LEVELS,
    DEFAULT_N_SEEDS,
    NEGATIVE,
    POSITIVE,
    EmptyRingError,
    InfeasibleSamplingError,
    Seed,
    SeedConstraints,
    TrainingPair,
    build_training_pair,
    compute_voronoi,
    gen_shapes_dataset,
    load_pairs,
    mcd_negative_seeds,
    pair_record,
    sample_positive_seeds,
    save_pairs_manifest,
)
from .metrics import dataset_report, report, save_report
from .network import (
    COARSE,
    FINE,
    NetworkConfig,
    TrainConfig,
    build_input,
    init_network,
    load_checkpoint,
    predict_mask,
    save_checkpoint,
    train,
)


class UsageError(ValueError):
    pass


def parse_clicks(tokens: list[str]) -> list[Seed]:
    """Parse "+x,y" (positive) / "-x,y" or "−x,y" (negative) click specs."""
    seeds = []
    for tok in tokens:
        tok = tok.strip()
        if not tok:
            continue
        if tok[0] == "+":
            polarity = POSITIVE
        elif tok[0] in ("-", "−"):
            polarity = NEGATIVE
        else:
            raise UsageError(f"click {tok!r} must start with '+' or '-'")
        try:
            x_s, y_s = tok[1:].split(",")
            seeds.append(Seed(int(x_s), int(y_s), polarity))
        except ValueError as exc:
            raise UsageError(f"bad click {tok!r}: {exc}") from exc
    return seeds


def _parse_levels(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def cmd_gen_shapes(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    data = gen_shapes_dataset(args.count, args.width, args.height, args.rng_seed)
    manifest = []
    for i, (img, mask) in enumerate(data):
        img_name, mask_name = f"img_{i:04d}.png", f"mask_{i:04d}.png"
        save_image(img, os.path.join(args.out, img_name))
        save_mask(mask, os.path.join(args.out, mask_name))
        manifest.append({"image": img_name, "mask": mask_name})
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {len(manifest)} image/mask pairs to {args.out}")
    return 0


def _load_corpus(corpus_dir):
    path = os.path.join(corpus_dir, "manifest.json")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if not manifest:
        raise UsageError(f"corpus {corpus_dir} is empty")
    return manifest


def cmd_gen_pairs(args) -> int:
    manifest = _load_corpus(args.corpus)
    os.makedirs(args.out, exist_ok=True)
    n_pos_list = [int(t) for t in str(args.n_pos).split(",") if t]
    constraints = SeedConstraints(args.d1, args.d2)
    levels = _parse_levels(args.levels)
    records = []
    skipped = 0
    for i, entry in enumerate(manifest):
        img = load_image(os.path.join(args.corpus, entry["image"]))
        mask = load_mask(os.path.join(args.corpus, entry["mask"]))
        for v, n_pos in enumerate(n_pos_list):
            rng_seed = args.rng_seed + 1000 * i + v
            try:
                pair = build_training_pair(img, mask, n_pos, args.n_neg,
                                           levels, constraints, rng_seed)
            except (InfeasibleSamplingError, EmptyRingError) as exc:
                print(f"warning: skipping {entry['image']} (n_pos={n_pos}): {exc}",
                      file=sys.stderr)
                skipped += 1
                continue
            rel_img = os.path.relpath(os.path.join(args.corpus, entry["image"]), args.out)
            rel_mask = os.path.relpath(os.path.join(args.corpus, entry["mask"]), args.out)
            records.append(pair_record(rel_img, rel_mask, pair, levels, rng_seed))
    save_pairs_manifest(records, args.out)
    print(f"wrote {len(records)} training pairs ({skipped} skipped) to {args.out}")
    return 0


def cmd_train(args) -> int:
    pairs = load_pairs(os.path.join(args.pairs, "pairs.json"))
    config = NetworkConfig(granularity=args.granularity)
    if args.from_coarse:
        coarse = load_checkpoint(args.from_coarse)
        net = init_network(config, args.rng_seed, from_coarse=coarse)
    else:
        net = init_network(config, args.rng_seed)
    tc = TrainConfig(base_lr=args.lr, head_lr_multiplier=args.head_lr_mult,
                     weight_decay=args.weight_decay, iterations=args.iterations,
                     rng_seed=args.rng_seed)
    trained, history = train(pairs, net, tc)
    save_checkpoint(trained, args.out)
    print(f"trained {args.iterations} iterations on {len(pairs)} pairs; "
          f"final loss {history[-1]:.4f}; checkpoint at {args.out}")
    return 0


def _segment(net, image, clicks):
    pos = [s for s in clicks if s.polarity == POSITIVE]
    neg = [s for s in clicks if s.polarity == NEGATIVE]
    pair = TrainingPair(
        image,
        compute_voronoi(pos, image.width, image.height),
        compute_voronoi(neg, image.width, image.height),
        # placeholder label; only the input channels matter here
        BinaryMask(np.zeros((image.height, image.width), bool)),
    )
    return net.forward(build_input(pair))


def cmd_segment(args) -> int:
    net = load_checkpoint(args.checkpoint)
    image = load_image(args.image)
    clicks = parse_clicks(args.clicks.split())
    prob = _segment(net, image, clicks)
    mask = predict_mask(prob, args.threshold)
    save_mask(mask, args.out_mask)
    if args.out_prob:
        from PIL import Image

        Image.fromarray(np.round(prob * 255).astype(np.uint8), mode="L") \
            .save(args.out_prob, format="PNG")
    print(f"wrote mask ({mask.count()} fg pixels) to {args.out_mask}")
    return 0


def _eval_corpus(net, corpus_dir, n_pos, levels, n_neg, constraints, rng_seed,
                 threshold=0.5):
    manifest = _load_corpus(corpus_dir)
    rows = []
    for i, entry in enumerate(manifest):
        img = load_image(os.path.join(corpus_dir, entry["image"]))
        mask = load_mask(os.path.join(corpus_dir, entry["mask"]))
        try:
            pos = sample_positive_seeds(mask, n_pos, constraints, rng_seed + i)
            neg = mcd_negative_seeds(mask, n_neg, levels, rng_seed + i + 50000)
        except (InfeasibleSamplingError, EmptyRingError) as exc:
            print(f"warning: skipping {entry['image']}: {exc}", file=sys.stderr)
            continue
        prob = _segment(net, img, pos + neg)
        pred = predict_mask(prob, threshold)
        rows.append((entry["image"], report(pred, mask)))
    return dataset_report(rows)


def cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    rep = _eval_corpus(net, args.corpus, args.n_pos, _parse_levels(args.levels),
                       args.n_neg, SeedConstraints(args.d1, args.d2),
                       args.rng_seed, args.threshold)
    save_report(rep, args.out)
    m = rep["means"]
    print(f"{len(rep['images'])} images: pixel_acc {m['pixel_acc']:.4f} "
          f"mean_acc {m['mean_acc']:.4f} mean_iou {m['mean_iou']:.4f} "
          f"fg_iou {m['fg_iou']:.4f}")
    return 0


def cmd_fuse(args) -> int:
    mask = load_mask(args.mask)
    proposals = fusion_mod.load_proposals(args.proposals)
    result = fusion_mod.best_match(mask, proposals, top_k=args.top_k,
                                   criterion=args.criterion)
    if args.image and args.out_overlay:
        image = load_image(args.image)
        overlay, sidecar = fusion_mod.annotate(image, mask, result)
        save_image(overlay, args.out_overlay)
    else:
        b = result.chosen.box
        sidecar = {"caption": result.caption, "iou": result.iou,
                   "mask_box": [result.mask_box.x, result.mask_box.y,
                                result.mask_box.w, result.mask_box.h],
                   "chosen_box": [b.x, b.y, b.w, b.h]}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
    print(f"best match: {result.caption!r} (iou {result.iou:.4f})")
    return 0


def cmd_sensitivity(args) -> int:
    net = load_checkpoint(args.checkpoint)
    levels = _parse_levels(args.levels)
    constraints = SeedConstraints(args.d1, args.d2)
    rows = []
    for n_clicks in range(1, args.max_clicks + 1):
        rep = _eval_corpus(net, args.corpus, n_clicks, levels, args.n_neg,
                           constraints, args.rng_seed)
        rows.append({"clicks": n_clicks, "mean_fg_iou": rep["means"]["fg_iou"],
                     "images": len(rep["images"])})
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
    print(f"{'clicks':>6}  {'mean fg_iou':>11}  {'images':>6}")
    for r in rows:
        print(f"{r['clicks']:>6}  {r['mean_fg_iou']:>11.4f}  {r['images']:>6}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_path=args.checkpoint,
                     session_cap=args.session_cap,
                     static_dir=args.static if args.static else None)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uirseg",
                                description="click-driven segmentation workbench")
    sub = p.add_subparsers(dest="command", required=True)

    def add_rng(sp):
        sp.add_argument("--rng-seed", type=int, default=0)

    sp = sub.add_parser("gen-shapes", help="generate a synthetic shape corpus")
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--width", type=int, default=64)
    sp.add_argument("--height", type=int, default=64)
    sp.add_argument("--out", required=True)
    add_rng(sp)
    sp.set_defaults(func=cmd_gen_shapes)

    sp = sub.add_parser("gen-pairs", help="sample clicks into a training-pair archive")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-pos", default=str(DEFAULT_N_SEEDS),
                    help="positive clicks per pair; comma list makes variants")
    sp.add_argument("--n-neg", type=int, default=DEFAULT_N_SEEDS)
    sp.add_argument("--levels", default=",".join(map(str, DEFAULT_LEVELS)))
    sp.add_argument("--d1", type=float, default=DEFAULT_D1)
    sp.add_argument("--d2", type=float, default=DEFAULT_D2)
    add_rng(sp)
    sp.set_defaults(func=cmd_gen_pairs)

    sp = sub.add_parser("train", help="train a network on a pair archive")
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--granularity", choices=[COARSE, FINE], default=FINE)
    sp.add_argument("--from-coarse", default=None,
                    help="checkpoint to initialize shared parameters from")
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--head-lr-mult", type=float, default=100.0)
    sp.add_argument("--weight-decay", type=float, default=5e-3)
    sp.add_argument("--iterations", type=int, default=2000)
    add_rng(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("segment", help="segment one image from explicit clicks")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--clicks", required=True,
                    help='space-separated "+x,y" / "-x,y" clicks')
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--out-mask", required=True)
    sp.add_argument("--out-prob", default=None)
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-pos", type=int, default=1)
    sp.add_argument("--n-neg", type=int, default=DEFAULT_N_SEEDS)
    sp.add_argument("--levels", default=",".join(map(str, DEFAULT_LEVELS)))
    sp.add_argument("--d1", type=float, default=DEFAULT_D1)
    sp.add_argument("--d2", type=float, default=DEFAULT_D2)
    sp.add_argument("--threshold", type=float, default=0.5)
    add_rng(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("fuse", help="match a mask against caption proposals")
    sp.add_argument("--mask", required=True)
    sp.add_argument("--proposals", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--top-k", type=int, default=fusion_mod.DEFAULT_TOP_K)
    sp.add_argument("--criterion",
                    choices=[fusion_mod.CRITERION_BOX, fusion_mod.CRITERION_MASK],
                    default=fusion_mod.CRITERION_BOX)
    sp.add_argument("--image", default=None)
    sp.add_argument("--out-overlay", default=None)
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("sensitivity", help="mean fg IoU against click count")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-clicks", type=int, default=5)
    sp.add_argument("--n-neg", type=int, default=DEFAULT_N_SEEDS)
    sp.add_argument("--levels", default=",".join(map(str, DEFAULT_LEVELS)))
    sp.add_argument("--d1", type=float, default=DEFAULT_D1)
    sp.add_argument("--d2", type=float, default=DEFAULT_D2)
    add_rng(sp)
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("serve", help="run the HTTP session service")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8737)
    sp.add_argument("--session-cap", type=int, default=64)
    sp.add_argument("--static", default=None, help="directory with the UI bundle")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
