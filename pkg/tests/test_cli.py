"""End-to-end command-line tests: each subcommand run through main(argv).

A module-scoped temp workspace flows a tiny corpus through gen-shapes →
gen-pairs → train → segment/eval/fuse/sensitivity so the commands are tested
against each other's real outputs, plus determinism checks (same seed gives
byte-identical files).
"""

import json
import os

import numpy as np
import pytest

from uirseg.cli import UsageError, main, parse_clicks
from uirseg.imagecore import load_mask, save_mask, BinaryMask
from uirseg.interaction import NEGATIVE, POSITIVE


# ---------------------------------------------------------------- click specs

def test_parse_clicks_positive_and_negative():
    seeds = parse_clicks(["+3,5", "-7,2", "−1,9"])
    assert [(s.x, s.y, s.polarity) for s in seeds] == [
        (3, 5, POSITIVE), (7, 2, NEGATIVE), (1, 9, NEGATIVE)]


def test_parse_clicks_skips_empty_tokens():
    assert parse_clicks(["", "  ", "+1,1"])[0].x == 1


@pytest.mark.parametrize("bad", ["3,5", "+3;5", "+a,b", "+3", "+3,4,5"])
def test_parse_clicks_rejects_malformed(bad):
    with pytest.raises(UsageError):
        parse_clicks([bad])


# ------------------------------------------------------------------- pipeline

@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Corpus, pair archive and checkpoint shared across subcommand tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = str(root / "corpus")
    pairs = str(root / "pairs")
    ckpt = str(root / "model.ckpt")
    assert main(["gen-shapes", "--count", "4", "--width", "32",
                 "--height", "32", "--out", corpus, "--rng-seed", "7"]) == 0
    assert main(["gen-pairs", "--corpus", corpus, "--out", pairs,
                 "--n-pos", "1,3", "--rng-seed", "11"]) == 0
    assert main(["train", "--pairs", pairs, "--out", ckpt,
                 "--iterations", "8", "--rng-seed", "3"]) == 0
    return {"root": root, "corpus": corpus, "pairs": pairs, "ckpt": ckpt}


def test_gen_shapes_writes_manifest_and_files(work):
    with open(os.path.join(work["corpus"], "manifest.json")) as fh:
        manifest = json.load(fh)
    assert len(manifest) == 4
    for entry in manifest:
        assert os.path.exists(os.path.join(work["corpus"], entry["image"]))
        mask = load_mask(os.path.join(work["corpus"], entry["mask"]))
        assert (mask.height, mask.width) == (32, 32)
        assert not mask.is_empty()


def test_gen_shapes_is_seed_deterministic(work, tmp_path):
    again = str(tmp_path / "again")
    assert main(["gen-shapes", "--count", "4", "--width", "32",
                 "--height", "32", "--out", again, "--rng-seed", "7"]) == 0
    for name in ("img_0000.png", "mask_0000.png"):
        with open(os.path.join(work["corpus"], name), "rb") as a, \
                open(os.path.join(again, name), "rb") as b:
            assert a.read() == b.read()


def test_gen_pairs_writes_variant_records(work):
    with open(os.path.join(work["pairs"], "pairs.json")) as fh:
        records = json.load(fh)
    assert 0 < len(records) <= 8  # 4 images x 2 click-count variants, minus skips
    rec = records[0]
    assert {"image", "label", "pos_seeds", "neg_seeds"} <= set(rec)


def test_train_writes_loadable_checkpoint(work):
    from uirseg.network import load_checkpoint

    net = load_checkpoint(work["ckpt"])
    assert net.config.granularity == "fine"


def test_segment_writes_mask_and_prob(work, tmp_path):
    with open(os.path.join(work["corpus"], "manifest.json")) as fh:
        entry = json.load(fh)[0]
    out_mask = str(tmp_path / "pred.png")
    out_prob = str(tmp_path / "prob.png")
    assert main(["segment", "--checkpoint", work["ckpt"],
                 "--image", os.path.join(work["corpus"], entry["image"]),
                 "--clicks", "+16,16 -2,2", "--out-mask", out_mask,
                 "--out-prob", out_prob]) == 0
    pred = load_mask(out_mask)
    assert (pred.height, pred.width) == (32, 32)
    assert os.path.getsize(out_prob) > 0


def test_segment_bad_click_syntax_is_exit_2(work, tmp_path):
    with open(os.path.join(work["corpus"], "manifest.json")) as fh:
        entry = json.load(fh)[0]
    assert main(["segment", "--checkpoint", work["ckpt"],
                 "--image", os.path.join(work["corpus"], entry["image"]),
                 "--clicks", "16,16", "--out-mask",
                 str(tmp_path / "x.png")]) == 2


def test_eval_writes_report(work, tmp_path):
    out = str(tmp_path / "report.json")
    assert main(["eval", "--checkpoint", work["ckpt"], "--corpus",
                 work["corpus"], "--out", out, "--n-pos", "1",
                 "--rng-seed", "5"]) == 0
    with open(out) as fh:
        rep = json.load(fh)
    assert rep["images"] and set(rep["means"]) == {
        "pixel_acc", "mean_acc", "mean_iou", "fg_iou"}
    for m in rep["means"].values():
        assert 0.0 <= m <= 1.0


def test_sensitivity_writes_per_click_rows(work, tmp_path):
    out = str(tmp_path / "sens.json")
    assert main(["sensitivity", "--checkpoint", work["ckpt"], "--corpus",
                 work["corpus"], "--out", out, "--max-clicks", "2",
                 "--rng-seed", "5"]) == 0
    with open(out) as fh:
        rows = json.load(fh)
    assert [r["clicks"] for r in rows] == [1, 2]


def test_fuse_outputs_best_caption(work, tmp_path):
    bits = np.zeros((32, 32), bool)
    bits[8:20, 8:20] = True
    mask_path = str(tmp_path / "mask.png")
    save_mask(BinaryMask(bits), mask_path)
    props_path = str(tmp_path / "props.json")
    with open(props_path, "w") as fh:
        json.dump([{"box": [8, 8, 12, 12], "score": 0.9, "caption": "a box"},
                   {"box": [0, 0, 32, 32], "score": 1.0, "caption": "all"}], fh)
    out = str(tmp_path / "fused.json")
    assert main(["fuse", "--mask", mask_path, "--proposals", props_path,
                 "--out", out]) == 0
    with open(out) as fh:
        sidecar = json.load(fh)
    assert sidecar["caption"] == "a box"
    assert sidecar["iou"] == 1.0


def test_fuse_with_overlay(work, tmp_path):
    bits = np.zeros((32, 32), bool)
    bits[4:12, 4:12] = True
    mask_path = str(tmp_path / "mask.png")
    save_mask(BinaryMask(bits), mask_path)
    props_path = str(tmp_path / "props.json")
    with open(props_path, "w") as fh:
        json.dump([{"box": [4, 4, 8, 8], "score": 1.0, "caption": "thing"}], fh)
    with open(os.path.join(work["corpus"], "manifest.json")) as fh:
        entry = json.load(fh)[0]
    overlay = str(tmp_path / "overlay.png")
    assert main(["fuse", "--mask", mask_path, "--proposals", props_path,
                 "--out", str(tmp_path / "s.json"),
                 "--image", os.path.join(work["corpus"], entry["image"]),
                 "--out-overlay", overlay]) == 0
    assert os.path.getsize(overlay) > 0


# ----------------------------------------------------------------- exit codes

def test_missing_file_is_exit_1(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"),
                 "--corpus", str(tmp_path), "--out",
                 str(tmp_path / "r.json")]) == 1


def test_bad_count_is_exit_2(tmp_path):
    assert main(["gen-shapes", "--count", "0",
                 "--out", str(tmp_path / "c")]) == 2


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
