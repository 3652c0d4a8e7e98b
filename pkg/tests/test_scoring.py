import numpy as np
import pytest

from roomscout.scoring import (
    Embedding,
    RepresentativeSet,
    ScoreDistribution,
    classification_metrics,
    cosine_similarity,
    kmeans_representatives,
    label_scores,
    room_scores,
    spherical_kmeans,
    top1_label,
)


def emb(*values):
    return Embedding(np.array(values, dtype=float))


def random_unit_rows(rng, n, dim):
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


class TestEmbedding:
    def test_normalized_on_ingest(self):
        e = emb(3.0, 4.0)
        assert np.allclose(e.values, [0.6, 0.8])

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            emb(0.0, 0.0)

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            emb(1.0, float("nan"))


class TestCosine:
    def test_identity(self):
        assert cosine_similarity(emb(1, 0), emb(1, 0)) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity(emb(1, 0), emb(0, 1)) == 0.0

    def test_diagonal(self):
        assert cosine_similarity(emb(1, 1), emb(1, 0)) == pytest.approx(np.sqrt(0.5), abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            cosine_similarity(emb(1, 0), emb(1, 0, 0))


class TestKMeans:
    def test_k1_is_normalized_mean(self):
        views = [emb(1, 0.1), emb(1, -0.1), emb(0.9, 0.05)]
        reps = kmeans_representatives(views, 1, seed=0)
        mean = np.mean([v.values for v in views], axis=0)
        mean /= np.linalg.norm(mean)
        assert np.allclose(reps.representatives[0], mean)

    def test_k_at_least_nviews_returns_views(self):
        views = [emb(1, 0), emb(0, 1)]
        reps = kmeans_representatives(views, 5, seed=3)
        assert reps.K == 2
        assert np.allclose(reps.representatives, [v.values for v in views])

    def test_two_antipodal_bundles(self):
        rng = np.random.default_rng(7)
        base = np.array([1.0, 0.0, 0.0])
        bundle_a = [Embedding(base + 0.02 * rng.standard_normal(3)) for _ in range(10)]
        bundle_b = [Embedding(-base + 0.02 * rng.standard_normal(3)) for _ in range(10)]
        reps = kmeans_representatives(bundle_a + bundle_b, 2, seed=5)
        mean_a = np.mean([v.values for v in bundle_a], axis=0)
        mean_a /= np.linalg.norm(mean_a)
        mean_b = np.mean([v.values for v in bundle_b], axis=0)
        mean_b /= np.linalg.norm(mean_b)
        # each bundle mean is matched by exactly one centroid, found by
        # brute-force assignment
        cos = reps.representatives @ np.stack([mean_a, mean_b]).T
        assert sorted(np.argmax(cos, axis=1).tolist()) == [0, 1]
        assert np.max(cos, axis=1).min() > 0.99

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            matrix = random_unit_rows(rng, 30, 8)
            _, history = spherical_kmeans(matrix, 4, seed=trial)
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_seeded_determinism(self):
        rng = np.random.default_rng(13)
        matrix = random_unit_rows(rng, 25, 6)
        c1, _ = spherical_kmeans(matrix.copy(), 3, seed=42)
        c2, _ = spherical_kmeans(matrix.copy(), 3, seed=42)
        assert np.array_equal(c1, c2)

    def test_unit_norm_representatives(self):
        rng = np.random.default_rng(17)
        views = [Embedding(rng.standard_normal(5)) for _ in range(12)]
        reps = kmeans_representatives(views, 3, seed=1)
        assert np.allclose(np.linalg.norm(reps.representatives, axis=1), 1.0)


class TestRoomScores:
    def _rooms(self, *vectors):
        return [
            RepresentativeSet(f"r{i}", np.atleast_2d(np.asarray(v, dtype=float)))
            for i, v in enumerate(vectors)
        ]

    def test_equal_similarity_splits_evenly(self):
        rooms = self._rooms([1, 0], [1, 0])
        dist = room_scores(emb(1, 0), rooms, temperature=10)
        assert np.allclose(dist.f, [0.5, 0.5])

    def test_closed_form_softmax(self):
        # raw 0.9 vs 0.8 at temperature 1
        rooms = self._rooms([0.9, np.sqrt(1 - 0.81)], [0.8, np.sqrt(1 - 0.64)])
        dist = room_scores(emb(1, 0), rooms, temperature=1.0)
        assert dist.f[0] == pytest.approx(0.52498, abs=1e-5)
        assert dist.f[1] == pytest.approx(0.47502, abs=1e-5)

    def test_large_temperature_saturates(self):
        rooms = self._rooms([1, 0], [0.8, 0.6])
        dist = room_scores(emb(1, 0), rooms, temperature=1e4)
        assert dist.f[0] == pytest.approx(1.0, abs=1e-12)

    def test_sum_to_one_and_shift_invariance(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            n = int(rng.integers(1, 7))
            raw = rng.uniform(-1, 1, n)
            from roomscout.scoring import softmax

            f = softmax(100 * raw)
            g = softmax(100 * (raw + 0.37))
            assert abs(f.sum() - 1.0) < 1e-9
            assert np.allclose(f, g, atol=1e-12)
            assert np.argmax(f) == np.argmax(g)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(29)
        vecs = random_unit_rows(rng, 4, 6)
        rooms = [RepresentativeSet(f"r{i}", vecs[i : i + 1]) for i in range(4)]
        text = Embedding(rng.standard_normal(6))
        forward = room_scores(text, rooms, temperature=50)
        reverse = room_scores(text, rooms[::-1], temperature=50)
        assert forward.room_ids == reverse.room_ids[::-1]
        assert np.allclose(forward.f, reverse.f[::-1])

    def test_adding_representative_never_lowers_raw(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            reps = random_unit_rows(rng, 3, 5)
            extra = random_unit_rows(rng, 1, 5)
            text = Embedding(rng.standard_normal(5))
            small = RepresentativeSet("r", reps)
            large = RepresentativeSet("r", np.vstack([reps, extra]))
            dist_small = room_scores(text, [small], temperature=1)
            dist_large = room_scores(text, [large], temperature=1)
            assert dist_large.raw_similarities[0] >= dist_small.raw_similarities[0] - 1e-12

    def test_mean_aggregation_switch(self):
        reps = RepresentativeSet("r", np.array([[1.0, 0.0], [0.0, 1.0]]))
        dist = room_scores(emb(1, 0), [reps], temperature=1, aggregation="mean")
        assert dist.raw_similarities[0] == pytest.approx(0.5)

    def test_bad_inputs(self):
        rooms = self._rooms([1, 0])
        with pytest.raises(ValueError, match="temperature"):
            room_scores(emb(1, 0), rooms, temperature=0)
        with pytest.raises(ValueError, match="at least one room"):
            room_scores(emb(1, 0), [], temperature=1)
        with pytest.raises(ValueError, match="dimension"):
            room_scores(emb(1, 0, 0), rooms, temperature=1)


class TestTop1Label:
    def test_argmax(self):
        dist = ScoreDistribution("q", ["a", "b"], np.array([0.7, 0.3]))
        assert top1_label(dist, {"a": "kitchen", "b": "bedroom"}) == "kitchen"

    def test_tie_breaks_by_room_id(self):
        dist = ScoreDistribution("q", ["b", "a"], np.array([0.5, 0.5]))
        assert top1_label(dist, {"a": "first", "b": "second"}) == "first"

    def test_monotone_transform_keeps_argmax(self):
        from roomscout.scoring import softmax

        rng = np.random.default_rng(37)
        for _ in range(30):
            raw = rng.uniform(-1, 1, 5)
            f1 = softmax(10 * raw)
            f2 = softmax(200 * raw)
            d1 = ScoreDistribution("q", list("abcde"), f1)
            d2 = ScoreDistribution("q", list("abcde"), f2)
            labels = {c: c for c in "abcde"}
            assert top1_label(d1, labels) == top1_label(d2, labels)


class TestLabelScores:
    def test_room_over_labels(self):
        room = RepresentativeSet("room_x", np.array([[1.0, 0.0]]))
        labels = {"kitchen": emb(1, 0), "bedroom": emb(0, 1)}
        dist = label_scores(room, labels, temperature=10)
        assert dist.instruction_id == "room_x"
        assert dist.room_ids == ["bedroom", "kitchen"]
        assert dist.f[dist.room_ids.index("kitchen")] > 0.5


class TestClassificationMetrics:
    def test_perfect(self):
        report = classification_metrics(["a", "b", "a"], ["a", "b", "a"], ["a", "b"])
        assert report.precision == 1.0
        assert report.recall == 1.0
        assert report.f1_weighted == 1.0
        assert report.map == 1.0

    def test_all_wrong_two_classes(self):
        report = classification_metrics(["a", "b"], ["b", "a"], ["a", "b"])
        assert report.precision == 0.0
        assert report.recall == 0.0

    def test_hand_confusion_matrix(self):
        # gt [a, a, b], predicted [a, b, b]:
        #   class a: tp=1 fp=0 support=2 -> P=1, R=1/2, F1=2/3
        #   class b: tp=1 fp=1 support=1 -> P=1/2, R=1, F1=2/3
        report = classification_metrics(["a", "b", "b"], ["a", "a", "b"], ["a", "b"])
        assert report.precision == pytest.approx(0.75)
        assert report.recall == pytest.approx(0.75)
        assert report.f1_weighted == pytest.approx(2 / 3)
        # one-hot ranking: AP(a) walks recall 1/2 then 1 at precision 1 -> 1.0
        # AP(b): positives discovered at rank 2 of [s1, s2, s0] -> 0.5
        assert report.map == pytest.approx(0.75)

    def test_explicit_scores_drive_map(self):
        gt = ["a", "a", "b"]
        predicted = ["a", "a", "b"]
        scores = [
            {"a": 0.9, "b": 0.1},
            {"a": 0.2, "b": 0.8},  # mis-ranked for class a
            {"a": 0.6, "b": 0.4},
        ]
        report = classification_metrics(predicted, gt, ["a", "b"], scores=scores)
        # class a ranking: s0 (pos), s2 (neg), s1 (pos): P at recalls .5, 1 -> 1, 2/3
        ap_a = 0.5 * 1.0 + 0.5 * (2 / 3)
        # class b ranking: s1 (neg), s2 (pos), s0 (neg) -> AP = 0.5
        ap_b = 0.5
        assert report.map == pytest.approx((ap_a + ap_b) / 2)
        assert report.precision == 1.0  # labels perfect even if scores noisy

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            classification_metrics(["a"], ["a", "b"], ["a", "b"])
