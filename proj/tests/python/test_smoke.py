import glob
import os

import pytest

import citecheck

FIXTURES = os.environ["CITECHECK_FIXTURES"]
CORPUS = os.path.join(FIXTURES, "corpus")


def test_parse_returns_edges():
    doc = citecheck.parse(os.path.join(CORPUS, "papers", "p1.md"))
    assert doc["edges"]
    assert all("target_keys" in e for e in doc["edges"])


def test_verify_corpus_summary(tmp_path):
    papers = sorted(glob.glob(os.path.join(CORPUS, "papers", "*.md")))
    summary = citecheck.verify(papers, os.path.join(CORPUS, "config.json"), tmp_path)
    assert summary["citations"] == 9
    assert summary["verdicts"]["Supported"] == 3
    assert (tmp_path / "summary.json").exists()


def test_decide_and_consensus():
    out = citecheck.decide([0.5, 0.5], [1, 1], [1.0, 1.0], 8)
    assert out["verdict"] in ("Supported", "Undecidable")
    assert citecheck.aggregate_consensus([0.25, 0.75], [1, -1]) == pytest.approx(-0.5)
    with pytest.raises(citecheck.ContractError):
        citecheck.aggregate_consensus([1.0], [1, 1])


def test_metrics():
    assert citecheck.acc_pass_at_3([[False, False, True], [False, False, False]]) == pytest.approx(0.5)
    full = [{"instance": "a", "tokens": 10000, "verdict": "Supported"}]
    agent = [{"instance": "a", "tokens": 2000, "verdict": "Supported"}]
    assert citecheck.token_economy(full, agent) == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(citecheck.UndefinedResultError):
        citecheck.token_economy(full, [{"instance": "z", "tokens": 1, "verdict": "Supported"}])


def test_ablation_rows():
    rows = citecheck.ablation(sources=6, sizes=[1, 8], trials=12)
    assert [r["n_voter"] for r in rows] == [1, 8]
    assert rows[0]["non_abstention_rate"] == 0.0
