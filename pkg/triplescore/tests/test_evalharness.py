"""
Unit and regression test for the metrics and the synthetic world generator.
"""

import filecmp
import json
import logging
import math
import os

import numpy as np
import pytest

from triplescore.corpus import (
    GoldTriple,
    KbAssertion,
    ScoredTriple,
    TargetRelation,
    load_descriptions,
    load_gold,
    load_kb,
    load_kg_triples,
    load_sentences,
)
from triplescore.errors import ValidationError
from triplescore.evalharness import (
    MetricsReport,
    WorldConfig,
    comparable_subset,
    evaluate,
    generate_world,
    gold_scores,
    kendall_tau_distance,
    metric_acc,
    metric_asd,
    metric_tau,
    mixture_weights,
    predictions_from_scores,
)
from triplescore.trigger import PersonDescription, detect, load_lexicon_assets

PROF = TargetRelation.PROFESSION
NAT = TargetRelation.NATIONALITY


def test_metric_acc():
    assert metric_acc([(3, 3), (7, 7)]) == 1.0
    assert metric_acc([(5, 7), (0, 7)]) == 0.5
    assert metric_acc([(0, 3)]) == 0.0
    assert metric_acc([(0, 3)], tolerance=3) == 1.0
    with pytest.raises(ValidationError):
        metric_acc([])


def test_metric_asd():
    assert metric_asd([(3, 3), (7, 7)]) == 0.0
    assert metric_asd([(7, 0)]) == 7.0
    assert metric_asd([(5, 7), (1, 0)]) == 1.5
    with pytest.raises(ValidationError):
        metric_asd([])


def test_metrics_ignore_pair_order():
    rng = np.random.default_rng(0)
    pairs = [tuple(int(v) for v in rng.integers(0, 8, 2)) for _ in range(50)]
    shuffled = [pairs[i] for i in rng.permutation(len(pairs))]
    assert metric_acc(pairs) == metric_acc(shuffled)
    assert metric_asd(pairs) == pytest.approx(metric_asd(shuffled))


def test_metric_tau_examples():
    assert metric_tau({("e1", PROF): [(7, 7), (4, 5), (1, 3)]}) == 0.0
    assert metric_tau({("e1", PROF): [(1, 7), (4, 5), (6, 3)]}) == 1.0
    assert metric_tau({("e1", PROF): [(4, 7), (4, 5), (2, 3)]}) == pytest.approx(0.5 / 3)


def test_metric_tau_groups():
    grouped = {
        ("e1", PROF): [(7, 7), (4, 5)],
        ("e2", PROF): [(1, 7), (4, 5)],
        ("e3", PROF): [(3, 3), (6, 3)],
        ("e4", PROF): [(5, 5)],
    }
    # e3 is tied in gold and e4 is below the group minimum
    assert metric_tau(grouped) == 0.5
    with pytest.raises(ValidationError):
        metric_tau({("e4", PROF): [(5, 5)]})
    with pytest.raises(ValidationError):
        metric_tau(grouped, min_group=3)


def _tau_oracle(pairs):
    numerator, denominator = 0.0, 0
    for (p1, g1), (p2, g2) in ((pairs[i], pairs[j]) for i in range(len(pairs)) for j in range(len(pairs)) if i < j):
        if g1 == g2:
            continue
        denominator += 1
        if p1 == p2:
            numerator += 0.5
        elif (p1 - p2) * (g1 - g2) < 0:
            numerator += 1
    return None if denominator == 0 else numerator / denominator


def test_metric_tau_matches_pair_scan():
    rng = np.random.default_rng(3)
    for _ in range(200):
        grouped = {}
        for g in range(int(rng.integers(1, 6))):
            size = int(rng.integers(1, 7))
            grouped[(f"e{g}", PROF)] = [tuple(int(v) for v in rng.integers(0, 8, 2)) for _ in range(size)]
        distances = [
            _tau_oracle(pairs) for pairs in grouped.values() if len(pairs) >= 2 and _tau_oracle(pairs) is not None
        ]
        if not distances:
            with pytest.raises(ValidationError):
                metric_tau(grouped)
            continue
        assert metric_tau(grouped) == pytest.approx(sum(distances) / len(distances), abs=1e-12)


def test_kendall_tau_distance_all_tied():
    assert kendall_tau_distance([(1, 4), (2, 4)]) is None


def test_metrics_report():
    report = MetricsReport(acc=0.5, asd=1.25, tau=0.1, n_triples=4, n_rank_groups=2)
    assert json.loads(report.to_json()) == {
        "acc": 0.5, "asd": 1.25, "tau": 0.1, "n_triples": 4, "n_rank_groups": 2,
    }
    assert "ACC" in report.format_table("profession")
    with pytest.raises(ValidationError):
        MetricsReport(acc=1.5, asd=0.0, tau=0.0, n_triples=1, n_rank_groups=0)
    with pytest.raises(ValidationError):
        MetricsReport(acc=0.5, asd=float("nan"), tau=0.0, n_triples=1, n_rank_groups=0)


def _gold(entries, relation=PROF):
    return [GoldTriple(KbAssertion(p, relation, t), s) for p, t, s in entries]


def _predictions(entries, relation=PROF):
    return [ScoredTriple(p, relation, t, s) for p, t, s in entries]


def test_evaluate_examples():
    entries = [("e1", "Actor", 7), ("e1", "Singer", 3), ("e2", "Actor", 5)]
    report = evaluate(_predictions(entries), _gold(entries))
    assert (report.acc, report.asd, report.tau) == (1.0, 0.0, 0.0)
    assert report.n_triples == 3 and report.n_rank_groups == 1

    sevens = [("e1", "Actor", 7), ("e2", "Actor", 7)]
    zeros = [("e1", "Actor", 0), ("e2", "Actor", 0)]
    report = evaluate(_predictions(zeros), _gold(sevens))
    assert (report.acc, report.asd) == (0.0, 7.0)


def test_evaluate_missing_predictions(caplog):
    gold = _gold([("e1", "Actor", 7), ("e1", "Singer", 1), ("e2", "Actor", 2)])
    predictions = _predictions([("e1", "Actor", 7), ("e1", "Singer", None)])
    with pytest.raises(ValidationError):
        evaluate(predictions, gold)
    with caplog.at_level(logging.WARNING):
        report = evaluate(predictions, gold, allow_missing=True)
    assert report.n_triples == 3
    assert report.asd == pytest.approx(3 / 3)
    assert "no prediction" in caplog.text


def test_evaluate_without_rank_groups(caplog):
    gold = _gold([("e1", "Actor", 7), ("e2", "Actor", 2)])
    with caplog.at_level(logging.WARNING):
        report = evaluate(_predictions([("e1", "Actor", 6), ("e2", "Actor", 2)]), gold)
    assert report.tau == 0.0 and report.n_rank_groups == 0
    assert "TAU" in caplog.text


def test_evaluate_comparable_subset():
    rng = np.random.default_rng(8)
    entries = [(f"e{i // 3}", f"T{i % 3}", int(rng.integers(0, 8))) for i in range(515)]
    gold = _gold(entries)
    full = _predictions(entries)
    dropped = set(rng.choice(515, size=30, replace=False).tolist())
    partial = _predictions([(p, t, None if i in dropped else s) for i, (p, t, s) in enumerate(entries)])
    subset = comparable_subset(full, partial)
    assert len(subset) == 485
    assert evaluate(full, gold, subset=subset).n_triples == 485
    assert evaluate(full, gold).n_triples == 515


def test_predictions_from_scores():
    triples = predictions_from_scores({("e2", "Actor"): 3, ("e1", "Actor"): None}, "profession")
    assert [(t.person, t.score) for t in triples] == [("e1", None), ("e2", 3)]


def test_mixture_weights_and_gold_scores():
    assert np.allclose(mixture_weights(3, math.inf), [1, 0, 0])
    assert np.allclose(mixture_weights(2, 0.0), [0.5, 0.5])
    assert gold_scores(mixture_weights(3, 1.0)) == [5, 2, 1]
    assert gold_scores([1.0]) == [7]


def test_world_config_validation():
    with pytest.raises(ValidationError):
        WorldConfig(n_persons=0)
    with pytest.raises(ValidationError):
        WorldConfig(plant_probability=1.5)


def _world_files(files):
    paths = [files.sentences, files.kg, files.descriptions]
    for group in (files.kb, files.gold, files.dev_gold, files.test_gold):
        paths += [group[r] for r in sorted(group)]
    return paths


def test_generate_world_is_deterministic(tmp_path):
    cfg = WorldConfig(n_persons=15, seed=4)
    first = generate_world(cfg, str(tmp_path / "a"))
    second = generate_world(cfg, str(tmp_path / "b"))
    for a, b in zip(_world_files(first), _world_files(second)):
        assert os.path.basename(a) == os.path.basename(b)
        assert filecmp.cmp(a, b, shallow=False)
    other = generate_world(WorldConfig(n_persons=15, seed=5), str(tmp_path / "c"))
    assert not filecmp.cmp(first.kb["profession"], other.kb["profession"], shallow=False)


def test_generated_world_parses(tmp_path):
    files = generate_world(WorldConfig(n_persons=20, seed=1), str(tmp_path))
    corpus, texts, popularity = load_sentences(files.sentences, set())
    assert len(corpus.sentences) == 20 * 12
    assert all(p.count == 12 for p in popularity.values())
    assert all("this" not in t.token_counts for t in texts.values())
    kb = load_kb(files.kb["profession"], "profession")
    gold = load_gold(files.gold["profession"], "profession")
    assert {g.key for g in gold} == {(a.person, a.type) for a in kb}
    dev = load_gold(files.dev_gold["profession"], "profession")
    test = load_gold(files.test_gold["profession"], "profession")
    assert len(dev) + len(test) == len(gold)
    assert load_kg_triples(files.kg)
    assert len(load_descriptions(files.descriptions)) == 20


def test_single_type_world_has_gold_seven(tmp_path):
    files = generate_world(WorldConfig(n_persons=10, max_types=1, sharpness=math.inf), str(tmp_path))
    for relation in TargetRelation:
        gold = load_gold(files.gold[relation.value], relation)
        assert {g.score for g in gold} == {7}


def test_planted_triggers_hit_primary_types(tmp_path):
    files = generate_world(WorldConfig(n_persons=30, plant_probability=1.0, seed=2), str(tmp_path))
    descriptions = load_descriptions(files.descriptions)
    for relation in TargetRelation:
        gold = load_gold(files.gold[relation.value], relation)
        by_person = {}
        for g in gold:
            assert 0 <= g.score <= 7
            by_person.setdefault(g.assertion.person, []).append(g)
        lexicon = load_lexicon_assets(relation, {g.assertion.type for g in gold})
        for person, triples in by_person.items():
            best = max(triples, key=lambda g: g.score)
            assert sum(1 for g in triples if g.score == best.score) == 1
            first = PersonDescription.from_text(person, descriptions[person]).first_sentence
            assert detect(lexicon, best.assertion.type, first)


def test_kg_evidence_only_for_weighted_types(tmp_path):
    files = generate_world(WorldConfig(n_persons=30, sharpness=math.inf, seed=3), str(tmp_path))
    triples = load_kg_triples(files.kg)
    hubs = {"member_of": "Org_", "born_in": "City_"}
    primary = set()
    for relation in TargetRelation:
        gold = load_gold(files.gold[relation.value], relation)
        keys = {g.key for g in gold if g.score == 7}
        assert len(gold) > len(keys)
        direct = {(h, t) for h, r, t in triples if r == relation.value}
        assert direct and direct <= keys
        primary |= keys
    patterns = {(h, t[len(hubs[r]):]) for h, r, t in triples if r in hubs}
    assert patterns and patterns <= primary
