import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from loopclose import (
    GroundTruth,
    Match,
    PrCurve,
    average_precision,
    load_ground_truth_csv,
    pr_curve,
)
from loopclose.errors import (
    EmptyCurveError,
    EmptyGroundTruthError,
    InvalidParamsError,
    UnknownQueryError,
)
from loopclose.evaluation import write_ground_truth_csv


def make_gt(pairs, queries, refs):
    return GroundTruth(
        pairs=frozenset(pairs), query_ids=tuple(queries), reference_ids=tuple(refs)
    )


def matches_from(distances, matched, queries=None):
    queries = queries or [f"q{i}" for i in range(len(distances))]
    return [
        Match(query_id=q, matched_id=m, distance=float(d))
        for q, m, d in zip(queries, matched, distances)
    ]


class TestPrCurve:
    def test_perfect_detector(self):
        queries = [f"q{i}" for i in range(5)]
        refs = [f"r{i}" for i in range(5)]
        gt = make_gt({(q, r) for q, r in zip(queries, refs)}, queries, refs)
        matches = matches_from([0.1, 0.2, 0.3, 0.4, 0.5], refs, queries)
        curve = pr_curve(matches, gt)
        assert curve.points[-1][1] == 1.0  # precision 1 at the last threshold
        assert curve.points[-1][2] == 1.0  # recall reaches 1
        assert curve.ap == 1.0

    def test_adversarial_detector(self):
        queries = ["q0", "q1", "q2"]
        refs = ["r0", "r1", "r2"]
        gt = make_gt({("q0", "r0"), ("q1", "r1"), ("q2", "r2")}, queries, refs)
        matches = matches_from([0.1, 0.2, 0.3], ["r1", "r2", "r0"], queries)
        curve = pr_curve(matches, gt)
        assert all(p == 0.0 for _, p, _ in curve.points)
        assert curve.ap == 0.0

    def test_four_query_hand_enumeration(self):
        # distances (0.1, 0.2, 0.3, 0.4), correctness (T, F, T, F);
        # only the two correct queries own true pairs -> recall denom 2
        queries = ["a", "b", "c", "d"]
        refs = ["ra", "rb", "rc", "rd"]
        gt = make_gt({("a", "ra"), ("c", "rc")}, queries, refs)
        matches = matches_from([0.1, 0.2, 0.3, 0.4], ["ra", "rc", "rc", "ra"], queries)
        # hand sweep: t=0.1: TP1 FP0 -> p=1, r=1/2 ; t=0.2: p=1/2, r=1/2
        # t=0.3: TP2 FP1 -> p=2/3, r=1 ; t=0.4: p=2/4, r=1
        curve = pr_curve(matches, gt)
        expected_points = [
            (0.1, 1.0, 0.5),
            (0.2, 0.5, 0.5),
            (0.3, 2 / 3, 1.0),
            (0.4, 0.5, 1.0),
        ]
        assert [tuple(p) for p in curve.points] == expected_points
        # levels: 0.5 -> max p 1.0 ; 1.0 -> max p 2/3
        assert curve.ap == pytest.approx((1.0 + 2 / 3) / 2)

    def test_matches_exhaustive_oracle_randomized(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 15))
            queries = [f"q{i}" for i in range(n)]
            refs = [f"r{i}" for i in range(n)]
            correct = rng.random(n) < 0.5
            matched = [refs[i] if correct[i] else refs[(i + 1) % n] for i in range(n)]
            pair_set = {(queries[i], refs[i]) for i in range(n) if correct[i]}
            # some extra positive queries whose matches missed
            extra = rng.random(n) < 0.2
            pair_set |= {
                (queries[i], refs[(i + 2) % n])
                for i in range(n)
                if extra[i] and not correct[i]
            }
            if not pair_set:
                continue
            distances = np.round(rng.random(n), 2)  # force duplicate thresholds
            gt = make_gt(pair_set, queries, refs)
            matches = matches_from(distances, matched, queries)
            curve = pr_curve(matches, gt)
            is_correct = [(q, m) in pair_set for q, m in zip(queries, matched)]
            expected = oracles.pr_sweep(distances, is_correct, len({q for q, _ in pair_set}))
            assert [tuple(p) for p in curve.points] == [tuple(p) for p in expected]
            assert curve.ap == oracles.ap_of_points(expected)

    def test_recall_monotone(self, rng):
        queries = [f"q{i}" for i in range(20)]
        refs = [f"r{i}" for i in range(20)]
        gt = make_gt({(q, r) for q, r in zip(queries[:12], refs[:12])}, queries, refs)
        matched = [refs[int(rng.integers(0, 20))] for _ in range(20)]
        matches = matches_from(rng.random(20), matched, queries)
        curve = pr_curve(matches, gt)
        recalls = [r for _, _, r in curve.points]
        assert (np.diff(recalls) >= 0).all()

    def test_order_independence(self, rng):
        queries = [f"q{i}" for i in range(10)]
        refs = [f"r{i}" for i in range(10)]
        gt = make_gt({(q, r) for q, r in zip(queries[:6], refs[:6])}, queries, refs)
        matches = matches_from(rng.random(10), refs, queries)
        curve_a = pr_curve(matches, gt)
        shuffled = list(matches)
        rng.shuffle(shuffled)
        curve_b = pr_curve(shuffled, gt)
        assert curve_a == curve_b

    def test_ranking_only_dependence(self, rng):
        # any strictly monotone distance transform leaves AP unchanged
        queries = [f"q{i}" for i in range(8)]
        refs = [f"r{i}" for i in range(8)]
        gt = make_gt({(q, r) for q, r in zip(queries[:5], refs[:5])}, queries, refs)
        matched = [refs[int(rng.integers(0, 8))] for _ in range(8)]
        d = rng.random(8)
        ap1 = pr_curve(matches_from(d, matched, queries), gt).ap
        ap2 = pr_curve(matches_from(np.exp(3 * d), matched, queries), gt).ap
        assert ap1 == ap2

    def test_smallest_correct_threshold_has_precision_one(self, rng):
        queries = ["q0", "q1", "q2"]
        refs = ["r0", "r1", "r2"]
        gt = make_gt({("q0", "r0")}, queries, refs)
        matches = matches_from([0.05, 0.5, 0.9], ["r0", "r0", "r2"], queries)
        curve = pr_curve(matches, gt)
        assert curve.points[0][1] == 1.0

    def test_unknown_query(self):
        gt = make_gt({("q0", "r0")}, ["q0"], ["r0"])
        with pytest.raises(UnknownQueryError):
            pr_curve(matches_from([0.1], ["r0"], ["mystery"]), gt)

    def test_empty_ground_truth(self):
        gt = make_gt(set(), ["q0"], ["r0"])
        with pytest.raises(EmptyGroundTruthError):
            pr_curve(matches_from([0.1], ["r0"], ["q0"]), gt)

    @given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=30), st.data())
    @settings(max_examples=60, deadline=None)
    def test_recall_monotone_property(self, distances, data):
        n = len(distances)
        queries = [f"q{i}" for i in range(n)]
        refs = [f"r{i}" for i in range(n)]
        hits = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
        owns_pair = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
        pairs = {
            (queries[i], refs[i]) for i in range(n) if hits[i] or owns_pair[i]
        }
        if not pairs:
            return
        matched = [refs[(i + (0 if hits[i] else 1)) % n] for i in range(n)]
        gt = make_gt(pairs, queries, refs)
        curve = pr_curve(matches_from(distances, matched, queries), gt)
        recalls = [r for _, _, r in curve.points]
        assert all(b >= a for a, b in zip(recalls, recalls[1:]))


class TestAveragePrecision:
    def test_single_perfect_point(self):
        curve = PrCurve(points=((0.3, 1.0, 1.0),), ap=1.0)
        assert average_precision(curve) == 1.0

    def test_two_level_mean(self):
        curve = PrCurve(points=((0.1, 1.0, 0.5), (0.2, 0.5, 1.0)), ap=0.75)
        assert average_precision(curve) == 0.75

    def test_recomputes_curve_ap(self, rng):
        queries = [f"q{i}" for i in range(12)]
        refs = [f"r{i}" for i in range(12)]
        gt = make_gt({(q, r) for q, r in zip(queries[:7], refs[:7])}, queries, refs)
        matched = [refs[int(rng.integers(0, 12))] for _ in range(12)]
        curve = pr_curve(matches_from(rng.random(12), matched, queries), gt)
        assert average_precision(curve) == curve.ap

    def test_empty_curve(self):
        with pytest.raises(EmptyCurveError):
            average_precision(PrCurve(points=(), ap=0.0))


class TestGroundTruthCsv:
    def test_round_trip(self, tmp_path):
        pairs = {("a", "x"), ("b", "y"), ("a", "y")}
        path = tmp_path / "gt.csv"
        write_ground_truth_csv(path, pairs)
        gt = load_ground_truth_csv(path, ["a", "b"], ["x", "y"])
        assert gt.pairs == frozenset(pairs)

    def test_header_required(self, tmp_path):
        path = tmp_path / "gt.csv"
        path.write_text("a,x\n")
        with pytest.raises(InvalidParamsError):
            load_ground_truth_csv(path, ["a"], ["x"])

    def test_pair_ids_validated(self, tmp_path):
        path = tmp_path / "gt.csv"
        write_ground_truth_csv(path, {("ghost", "x")})
        with pytest.raises(InvalidParamsError):
            load_ground_truth_csv(path, ["a"], ["x"])
