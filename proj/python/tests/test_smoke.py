# Copyright 2026 The sigverify Authors
# SPDX-License-Identifier: Apache-2.0

import itertools
import math
import os
import shutil
import subprocess

import numpy as np
import pytest

import sigverify as sv


def brute_force_eer(sim, match):
    """Independent EER: scan midpoints and infinities, lowest threshold on ties."""
    s = sorted(set(sim))
    cands = [-math.inf] + [(a + b) / 2 for a, b in zip(s, s[1:])] + [math.inf]
    pos = [x for x, m in zip(sim, match) if m]
    neg = [x for x, m in zip(sim, match) if not m]
    best = None
    for t in cands:
        far = sum(x >= t for x in neg) / len(neg)
        frr = sum(x < t for x in pos) / len(pos)
        gap = abs(far - frr)
        if best is None or gap < best[0]:
            best = (gap, (far + frr) / 2, t)
    return best[1], best[2]


def test_cosine_similarity():
    assert sv.cosine_similarity([1.0, 0.0], [0.0, 2.0]) == pytest.approx(0.0)
    assert sv.cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
    assert sv.cosine_similarity([1.0, 2.0], [-1.0, -2.0]) == pytest.approx(-1.0)
    with pytest.raises(sv.SigverifyError):
        sv.cosine_similarity([0.0, 0.0], [1.0, 1.0])


def test_eer_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(4, 60))
        sim = list(np.round(rng.uniform(-1, 1, n), 2))
        match = [bool(b) for b in rng.integers(0, 2, n)]
        match[0], match[1] = True, False
        r = sv.compute_eer(sim, match)
        eer, t = brute_force_eer(sim, match)
        assert r["eer"] == pytest.approx(eer)
        assert r["threshold"] == t


def test_separable_scores_have_zero_eer_and_unit_auc():
    sim = [0.9, 0.8, 0.7, 0.1, 0.0, -0.2]
    match = [True, True, True, False, False, False]
    assert sv.compute_eer(sim, match)["eer"] == 0.0
    roc = sv.compute_roc(sim, match)
    assert roc[0][1:] == (0.0, 0.0) and roc[-1][1:] == (1.0, 1.0)
    assert sv.roc_auc(sim, match) == pytest.approx(1.0)
    with pytest.raises(sv.ValidationError):
        sv.compute_eer([0.1], [True, False])


def test_majority_vote_truth_table():
    for votes in itertools.product(["same", "different"], repeat=3):
        expected = "same" if votes.count("same") >= 2 else "different"
        assert sv.majority_vote(list(votes)) == expected
    with pytest.raises(sv.SigverifyError):
        sv.majority_vote(["same", "different"])
    assert sv.default_raters(3) == sorted(sv.default_raters(3))
    assert len(set(sv.default_raters(5))) == 5


def test_psnr_of_identical_and_shifted_images():
    # Pixels snap to a fixed dyadic grid; quarters are exact on it.
    a = np.full((8, 8), 0.25)
    b = np.full((8, 8), 0.5)
    assert sv.psnr(a, b) == pytest.approx(10 * math.log10(16.0), abs=1e-12)
    assert math.isinf(sv.psnr(a, a))


CLI = shutil.which("sigverify") or os.environ.get("SIGVERIFY_CLI")


@pytest.mark.skipif(CLI is None, reason="sigverify CLI not available")
def test_corpus_manifest_pairs_and_models(tmp_path):
    root = tmp_path / "corpus"
    subprocess.run([CLI, "synth", "--out", str(root), "--users", "4", "--references", "2",
                    "--unstamped", "2", "--stamped", "2", "--size", "32", "--seed", "1"],
                   check=True, capture_output=True)
    n = sv.build_manifest(str(root), "user_dirs", str(tmp_path / "manifest.csv"))
    assert n == 4 * 6
    users = sv.manifest_users(str(tmp_path / "manifest.csv"))
    assert len(users) == 4
    train, test = sv.split_verification_users(str(tmp_path / "manifest.csv"), 2, 0)
    assert not set(train) & set(test) and len(train) == 2

    pairs = sv.generate_pairs(str(tmp_path / "manifest.csv"), test, 0)
    pos = [p for p in pairs if p["label"] == "match"]
    assert len(pos) == 2 * 15 and len(pairs) == 2 * len(pos)

    img = sv.load_signature(pairs[0]["ref_path"])
    assert img.shape == (32, 32) and img.dtype == np.float64
    assert 0.0 <= img.min() and img.max() <= 1.0

    # Tiny models trained through the CLI, then loaded through the bindings.
    (tmp_path / "config.json").write_text(
        '{"backbone": {"arch": "tiny", "input": {"height": 32, "width": 32},'
        ' "tiny": {"channels": [4], "embedding": 8}},'
        ' "train": {"max_epochs": 1, "batch_size": 4, "lr_init": 0.01},'
        ' "cleaner": {"epochs": 1, "height": 32, "width": 32, "batch_size": 2,'
        ' "gen_width": 4, "gen_blocks": 1, "disc_width": 4, "disc_layers": 2}}')
    subprocess.run([CLI, "make-splits", "--manifest", str(tmp_path / "manifest.csv"),
                    "--kind", "verification", "--train-users", "2", "--seed", "0",
                    "--out", str(tmp_path / "split.json")], check=True, capture_output=True)
    subprocess.run([CLI, "train-backbone", "--manifest", str(tmp_path / "manifest.csv"),
                    "--split", str(tmp_path / "split.json"), "--config", str(tmp_path / "config.json"),
                    "--out", str(tmp_path / "backbone")], check=True, capture_output=True)
    bb = sv.Backbone.load(str(tmp_path / "backbone"))
    f1 = bb.features(img)
    assert f1.shape == (bb.feature_dim,)
    assert np.array_equal(f1, bb.features_of(pairs[0]["ref_path"]))
    assert sv.cosine_similarity(list(f1), list(f1)) == pytest.approx(1.0)

    stamped = [p for p in root.rglob("target_stamped/*.png")]
    clean = [p for p in root.rglob("reference/*.png")]
    (tmp_path / "s").mkdir()
    (tmp_path / "c").mkdir()
    for i, p in enumerate(stamped):
        shutil.copy(p, tmp_path / "s" / f"{i}.png")
    for i, p in enumerate(clean):
        shutil.copy(p, tmp_path / "c" / f"{i}.png")
    subprocess.run([CLI, "train-cleaner", "--stamped", str(tmp_path / "s"), "--clean", str(tmp_path / "c"),
                    "--config", str(tmp_path / "config.json"), "--out", str(tmp_path / "cleaner")],
                   check=True, capture_output=True)
    cl = sv.Cleaner.load(str(tmp_path / "cleaner"))
    assert cl.epoch == 1
    out = cl.clean(sv.load_signature(str(stamped[0])))
    assert out.shape == (32, 32)
    assert 0.0 <= out.min() and out.max() <= 1.0

    with pytest.raises(sv.LoadError):
        sv.Backbone.load(str(tmp_path / "missing"))
