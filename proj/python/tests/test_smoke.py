"""Smoke tests for the compiled _capmatch module."""

import math

import _capmatch as cm


def test_divergences_match_closed_forms():
    nats, infinite = cm.kl_divergence([0.5, 0.5], [0.75, 0.25])
    assert not infinite
    assert abs(nats - (0.5 * math.log(2 / 3) + 0.5 * math.log(2))) < 1e-12

    _, infinite = cm.kl_divergence([0.5, 0.5], [1.0, 0.0])
    assert infinite

    assert abs(cm.jsd([1.0, 0.0], [0.0, 1.0]) - math.log(2)) < 1e-12
    assert abs(cm.jsd([0.3, 0.7], [0.6, 0.4]) - cm.jsd([0.6, 0.4], [0.3, 0.7])) < 1e-12


def test_theory_verification_passes():
    ok, report = cm.verify_theory(trials=10, support=8, seed=7)
    assert ok, report
    assert "lemma1" in report and "theorem1" in report


def test_bleu_identity_and_brevity():
    ref = [2, 16, 9, 4]
    exact = cm.bleu(ref, [ref])
    assert exact["bleu4"] == 1.0
    short = cm.bleu([2, 9, 4], [ref])
    assert abs(short["brevity_penalty"] - math.exp(1 - 4 / 3)) < 1e-12


def test_dataset_dump_has_header_and_records():
    dump = cm.make_dataset(total=200, paired_fraction=0.05, seed=3)
    lines = dump.strip().split("\n")
    assert lines[0].startswith("vocab ")
    assert len(lines) == 1 + 200
    assert sum(1 for l in lines if l.endswith(" paired")) == 10


def test_tiny_run_produces_metric_rows(tmp_path):
    rows = cm.run_experiment(
        {
            "variant": "paired-only",
            "total": "150",
            "paired_fraction": "0.2",
            "epochs": "1",
            "batch_size": "25",
            "eval_size": "20",
            "retrieval_pool": "20",
            "pretrain_steps": "0",
            "seed": "5",
        },
        str(tmp_path / "run"),
    )
    assert len(rows) == 1
    row = rows[0]
    assert row["epoch"] == 1
    assert 0.0 <= row["bleu4"] <= 1.0
    assert (tmp_path / "run" / "metrics.csv").exists()
    assert (tmp_path / "run" / "checkpoint.bin").exists()
