import math
import random

import numpy as np
import pytest

from clozeprobe.analysis import (
    CorpusReport,
    FeatureProviders,
    build_reports,
    cardinality_rollup,
    feature_correlations,
    feature_extract,
    pearson,
    pk_curve,
    rank_distribution,
)
from clozeprobe.corpus import Cardinality, Fact, RelationTemplate
from clozeprobe.errors import DegenerateVariance, EmptyReport
from clozeprobe.ranking import RankResult


def result(relation, rank, fact_id="f", top1_log_prob=None):
    return RankResult(
        fact_id=fact_id, relation_id=relation, rank=rank, gold_score=0.0,
        top1_token="t", top1_log_prob=top1_log_prob, topk_tokens=("t",),
        filtered_out=0,
    )


def direct_pearson(x, y):
    """Independent reference: the raw-moment formula with exact summation."""
    n = len(x)
    sx, sy = math.fsum(x), math.fsum(y)
    sxx = math.fsum(v * v for v in x)
    syy = math.fsum(v * v for v in y)
    sxy = math.fsum(a * b for a, b in zip(x, y))
    num = n * sxy - sx * sy
    den = math.sqrt(n * sxx - sx * sx) * math.sqrt(n * syy - sy * sy)
    return num / den


class TestBuildReports:
    def test_relation_means_and_macro(self):
        results = [
            result("r1", 1), result("r1", 5),   # P@1 = [1, 0] -> 0.5
            result("r2", 1), result("r2", 1),   # P@1 = [1, 1] -> 1.0
        ]
        report = build_reports(results, ks=[1])
        per_rel = {r.relation_id: r.p_at[1] for r in report.per_relation}
        assert per_rel == {"r1": 0.5, "r2": 1.0}
        assert report.macro_p_at[1] == 0.75
        assert report.micro_p_at[1] == 0.75  # equal sizes: micro == macro here

    def test_macro_is_unweighted_across_relations(self):
        results = [result("big", 1, f"b{i}") for i in range(9)] + \
            [result("big", 100, "b9")] + [result("small", 100, "s0")]
        report = build_reports(results, ks=[1])
        assert report.macro_p_at[1] == pytest.approx((0.9 + 0.0) / 2)
        assert report.micro_p_at[1] == pytest.approx(9 / 11)

    def test_single_relation_macro_equals_its_mean(self):
        report = build_reports([result("only", 2), result("only", 1)], ks=[1, 2])
        assert report.macro_p_at == report.per_relation[0].p_at

    def test_mean_rank(self):
        report = build_reports([result("r", 1), result("r", 7)], ks=[1])
        assert report.per_relation[0].mean_rank == 4.0

    def test_empty_results_error(self):
        with pytest.raises(EmptyReport):
            build_reports([], ks=[1])

    def test_permutation_invariance(self):
        rng = random.Random(5)
        results = [result(f"r{i % 4}", rng.randint(1, 30), f"f{i}")
                   for i in range(60)]
        shuffled = results[:]
        rng.shuffle(shuffled)
        a = build_reports(results, ks=[1, 5, 10])
        b = build_reports(shuffled, ks=[1, 5, 10])
        assert a.macro_p_at == b.macro_p_at
        assert [(r.relation_id, r.p_at) for r in a.per_relation] == \
            [(r.relation_id, r.p_at) for r in b.per_relation]


class TestCardinalityRollup:
    def make_templates(self, classes):
        return {
            rel: RelationTemplate(rel, "[S] x [O]", Cardinality(label))
            for rel, label in classes.items()
        }

    def test_class_macro_means(self):
        results = (
            [result("r1", 1, "a"), result("r1", 1, "b"),
             result("r1", 1, "c"), result("r1", 1, "d"), result("r1", 9, "e")]
            + [result("r2", 9, "f"), result("r2", 9, "g"), result("r2", 9, "h"),
               result("r2", 9, "i"), result("r2", 1, "j")]
            + [result("r3", 1, "k"), result("r3", 1, "l"), result("r3", 9, "m"),
               result("r3", 9, "n"), result("r3", 9, "o")]
        )  # per-relation P@1: r1=0.8, r2=0.2, r3=0.4
        report = build_reports(results, ks=[1])
        templates = self.make_templates({"r1": "1-1", "r2": "N-M", "r3": "N-M"})
        rollup = cardinality_rollup(report, templates)
        assert rollup["1-1"][1] == pytest.approx(0.8)
        assert rollup["N-M"][1] == pytest.approx(0.3)

    def test_single_class_rollup_equals_macro(self):
        results = [result("r1", 1), result("r2", 3, "g")]
        report = build_reports(results, ks=[1])
        templates = self.make_templates({"r1": "N-1", "r2": "N-1"})
        rollup = cardinality_rollup(report, templates)
        assert rollup == {"N-1": report.macro_p_at}

    def test_unclassified_grouped_without_failing(self):
        report = build_reports([result("mystery", 1)], ks=[1])
        rollup = cardinality_rollup(report, {})
        assert rollup == {"?": {1: 1.0}}


class TestPkCurve:
    def test_single_relation_fractions(self):
        results = [result("r", rank, str(rank)) for rank in (1, 3, 7)]
        curve = pk_curve(results, [1, 5, 10])
        assert curve == [(1, pytest.approx(1 / 3)), (5, pytest.approx(2 / 3)),
                         (10, pytest.approx(1.0))]

    def test_exhaustive_k_reaches_one(self):
        vocab_size = 40
        rng = random.Random(2)
        results = [result("r", rng.randint(1, vocab_size), str(i))
                   for i in range(25)]
        curve = pk_curve(results, [1, vocab_size])
        assert curve[-1] == (vocab_size, 1.0)

    def test_monotone_and_matches_bruteforce(self):
        rng = random.Random(3)
        results = [result(f"r{i % 3}", rng.randint(1, 50), str(i))
                   for i in range(90)]
        ks = [1, 2, 5, 10, 20, 50]
        curve = pk_curve(results, ks)
        values = [v for _, v in curve]
        assert values == sorted(values)
        # brute force recount per point
        by_rel = {}
        for r in results:
            by_rel.setdefault(r.relation_id, []).append(r.rank)
        for k, value in curve:
            expected = sum(
                sum(1 for rank in ranks if rank <= k) / len(ranks)
                for ranks in by_rel.values()
            ) / len(by_rel)
            assert value == pytest.approx(expected)

    def test_unsorted_grid_rejected(self):
        with pytest.raises(ValueError):
            pk_curve([result("r", 1)], [5, 1])


class TestRankDistribution:
    def test_constant_ranks_have_zero_spread(self):
        dist = rank_distribution({"f1": [1, 1, 1], "f2": [1, 1, 1]})
        assert dist.summary["mean"] == 1.0
        assert dist.summary["min"] == dist.summary["max"] == 1.0

    def test_quantiles_use_linear_interpolation(self):
        dist = rank_distribution({"f": list(range(1, 11))})
        assert dist.summary["median"] == 5.5
        assert dist.summary["q1"] == 3.25
        assert dist.summary["q3"] == 7.75

    def test_dispersed_model_has_larger_iqr(self):
        constant = rank_distribution({"f": [5] * 10})
        dispersed = rank_distribution({"f": [1, 2, 3, 4, 5, 6, 7, 8, 9, 100]})
        iqr = lambda d: d.summary["q3"] - d.summary["q1"]
        assert iqr(dispersed) > iqr(constant)

    def test_summary_recomputable_from_raw(self):
        dist = rank_distribution({"a": [1, 4, 9], "b": [2, 2, 30]})
        pooled = np.array(dist.pooled, dtype=float)
        assert dist.summary["mean"] == pooled.mean()
        assert dist.summary["median"] == np.percentile(pooled, 50)

    def test_uneven_groups_rejected(self):
        with pytest.raises(ValueError):
            rank_distribution({"a": [1, 2], "b": [1]})


class TestPearson:
    def test_identical_inputs_give_exactly_one(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = rng.random(rng.integers(2, 40))
            if np.ptp(x) == 0:
                continue
            assert pearson(x, x) == 1.0
            assert pearson(x, -x) == -1.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            n = int(rng.integers(3, 60))
            x = rng.random(n)
            y = rng.random(n)
            assert abs(pearson(x, y) - direct_pearson(list(x), list(y))) < 1e-12

    def test_documented_example_two_paths(self):
        x = [1.0, 2.0, 3.0, 4.0]
        y = [1.0, 2.0, 3.0, 10.0]
        assert pearson(x, y) == pytest.approx(direct_pearson(x, y), abs=1e-12)

    def test_affine_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            x = rng.random(20)
            y = rng.random(20)
            a, b = float(rng.random() * 5 + 0.1), float(rng.random() * 10 - 5)
            assert abs(pearson(a * x + b, y) - pearson(x, y)) < 1e-9

    def test_zero_variance_is_an_error_not_nan(self):
        with pytest.raises(DegenerateVariance):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_input_validation(self):
        with pytest.raises(ValueError):
            pearson([1.0], [2.0])
        with pytest.raises(ValueError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])


class TestFeatures:
    def make_fact(self, subject="Dante", obj="Florence"):
        return Fact("f1", subject, obj, "r")

    def test_subject_token_count_always_present(self):
        fv = feature_extract(self.make_fact("Francesco Bartolomeo Conti"),
                             result("r", 1))
        assert fv.subject_tokens == 3

    def test_mention_counts_via_provider(self):
        corpus_text = "Dante wrote . Dante lived . Florence hosted Dante ."
        counts = lambda surface: corpus_text.split().count(surface)
        fv = feature_extract(
            self.make_fact(), result("r", 1),
            FeatureProviders(mention_count=counts),
        )
        assert fv.subject_mentions == 3
        assert fv.object_mentions == 1

    def test_cosine_of_identical_vectors_is_one(self):
        embed = lambda surface: np.array([1.0, 2.0, 3.0])
        fv = feature_extract(self.make_fact(), result("r", 1),
                             FeatureProviders(embedding=embed))
        assert fv.subject_object_cosine == 1.0

    def test_log_prob_feature_comes_from_result(self):
        fv = feature_extract(self.make_fact(), result("r", 1, top1_log_prob=-1.5))
        assert fv.top1_log_prob == -1.5

    def test_missing_providers_leave_features_absent(self):
        fv = feature_extract(self.make_fact(), result("r", 1))
        assert fv.subject_mentions is None
        assert fv.subject_object_cosine is None
        assert fv.subject_wordpieces is None

    def test_correlation_table_reports_status(self):
        rng = random.Random(17)
        features, p1 = [], []
        for i in range(30):
            hit = rng.random() < 0.5
            fv = feature_extract(
                self.make_fact(subject="a b" if hit else "c"),
                result("r", 1 if hit else 5, top1_log_prob=None),
            )
            features.append(fv)
            p1.append(1 if hit else 0)
        table = feature_correlations(features, p1)
        assert table["subject_tokens"]["status"] == "ok"
        assert table["subject_tokens"]["r"] == pytest.approx(1.0)
        assert table["top1_log_prob"]["status"] == "absent"
        assert table["subject_mentions"]["status"] == "absent"
