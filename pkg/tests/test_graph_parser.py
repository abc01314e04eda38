import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parselab.features import FeatureConfig, edge_features
from parselab.graph_parser import (ArcScores, GraphParser, MarginConfig, assign_labels, cle_decode,
                                   eisner_decode, score_arcs, train_margin)
from parselab.linear import LinearModel, ModelFormatError
from parselab.treebank import Corpus, is_projective, is_tree, sentence_from_heads

from oracles import all_projective_trees, all_trees, tree_score

_TREES = {n: np.array(all_trees(n)) for n in range(1, 6)}
_PROJ = {n: np.array(all_projective_trees(n)) for n in range(1, 7)}


def _brute_max(S, table):
    n = table.shape[1]
    cols = np.arange(1, n + 1)
    return S[table, cols].sum(axis=1).max()


def _matrix(n, entries):
    S = np.full((n + 1, n + 1), -1e9)
    for (h, d), v in entries.items():
        S[h, d] = v
    return S


class TestCLE:
    def test_simple_example(self):
        S = _matrix(2, {(0, 1): 10, (0, 2): 5, (1, 2): 8, (2, 1): 7})
        t = cle_decode(S)
        assert t.heads == [0, 1] and tree_score(S, t.heads) == 18

    def test_cycle_contraction_example(self):
        S = _matrix(2, {(0, 1): 1, (0, 2): 1, (1, 2): 10, (2, 1): 10})
        t = cle_decode(S)
        assert tree_score(S, t.heads) == 11
        assert t.heads == [0, 1]  # tie between [0,1] and [2,0] goes to the lower head index

    def test_single_token(self):
        assert cle_decode(np.zeros((2, 2))).heads == [0]

    def test_matches_brute_force_on_random_integer_scores(self):
        rng = np.random.default_rng(7)
        for i in range(1000):
            n = 1 + i % 5
            S = rng.integers(-20, 21, size=(n + 1, n + 1)).astype(float)
            t = cle_decode(S)
            assert is_tree(t.heads)
            assert tree_score(S, t.heads) == _brute_max(S, _TREES[n])

    def test_six_token_instances(self):
        rng = np.random.default_rng(8)
        table = np.array(all_trees(6))
        for _ in range(30):
            S = rng.integers(-20, 21, size=(7, 7)).astype(float)
            assert tree_score(S, cle_decode(S).heads) == _brute_max(S, table)

    def test_accepts_arc_scores(self):
        S = _matrix(2, {(0, 1): 10, (0, 2): 5, (1, 2): 8, (2, 1): 7})
        assert cle_decode(ArcScores(S)).heads == [0, 1]


class TestEisner:
    def test_single_token(self):
        assert eisner_decode(np.zeros((2, 2))).heads == [0]

    def test_matches_projective_brute_force(self):
        rng = np.random.default_rng(9)
        for i in range(600):
            n = 1 + i % 6
            S = rng.integers(-20, 21, size=(n + 1, n + 1)).astype(float)
            t = eisner_decode(S)
            assert is_projective(t.heads) and is_tree(t.heads)
            assert tree_score(S, t.heads) == _brute_max(S, _PROJ[n])

    def test_agrees_with_cle_when_optimum_projective(self):
        rng = np.random.default_rng(10)
        agreed = 0
        for i in range(400):
            n = 2 + i % 5
            S = rng.integers(-20, 21, size=(n + 1, n + 1)).astype(float)
            c = cle_decode(S)
            if is_projective(c.heads):
                agreed += 1
                assert tree_score(S, eisner_decode(S).heads) == tree_score(S, c.heads)
        assert agreed > 50

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2 ** 31))
    def test_always_projective(self, n, seed):
        S = np.random.default_rng(seed).normal(size=(n + 1, n + 1))
        assert is_projective(eisner_decode(S).heads)


class TestLabels:
    def _scores(self, labels, rows):
        L = np.zeros((3, 3, len(labels)))
        for (h, d), v in rows.items():
            L[h, d] = v
        return ArcScores(np.zeros((3, 3)), L, labels)

    def test_single_label(self):
        assert assign_labels(ArcScores(np.zeros((3, 3)), np.zeros((3, 3, 1)), ["dep"]), [0, 1]) == ["dep", "dep"]

    def test_strict_max(self):
        sc = self._scores(["a", "b", "c"], {(0, 1): [0, 3, 1], (1, 2): [5, 0, 1]})
        assert assign_labels(sc, [0, 1]) == ["b", "a"]

    def test_tie_is_lexicographic(self):
        sc = self._scores(["karta", "karma"], {(0, 1): [2, 2], (1, 2): [2, 2]})
        assert assign_labels(sc, [0, 1]) == ["karma", "karma"]


def _sentence():
    return sentence_from_heads([2, 0, 4, 2, 2], ["karta", "root", "visesana", "karma", "kriyavisesana"],
                               ["ramah", "gacchati", "sundaram", "vanam", "sighram"],
                               ["N.nom", "V", "A.acc", "N.acc", "ADV"])


class TestScoring:
    def test_zero_model(self):
        sc = score_arcs(LinearModel(16), _sentence(), ["karta"], FeatureConfig(hash_bits=16))
        assert not sc.scores.any() and not sc.label_scores.any()

    def test_linearity(self):
        cfg = FeatureConfig(hash_bits=16)
        m = LinearModel(16)
        s = _sentence()
        before = score_arcs(m, s, feature_cfg=cfg).scores
        idx = edge_features(s, 2, 4, cfg).indices[0]
        m.weights[idx] += 2.5
        after = score_arcs(m, s, feature_cfg=cfg).scores
        count = int(np.sum(edge_features(s, 2, 4, cfg).values[edge_features(s, 2, 4, cfg).indices == idx]))
        assert after[2, 4] - before[2, 4] == pytest.approx(2.5 * count)

    def test_deterministic(self):
        m = LinearModel(16)
        m.weights[:] = np.random.default_rng(0).normal(size=m.size)
        cfg = FeatureConfig(hash_bits=16)
        a = score_arcs(m, _sentence(), feature_cfg=cfg).scores
        assert np.array_equal(a, score_arcs(m, _sentence(), feature_cfg=cfg).scores)

    def test_zero_costs_equal_plain_decoding(self):
        S = np.random.default_rng(3).normal(size=(6, 6))
        assert cle_decode(S + np.zeros_like(S)).heads == cle_decode(S).heads


class TestTraining:
    CFG = MarginConfig(feature=FeatureConfig(hash_bits=18))

    @pytest.mark.parametrize("decoder", ["cle", "eisner"])
    def test_single_sentence_recovered(self, decoder):
        s = _sentence()
        cfg = MarginConfig(feature=FeatureConfig(hash_bits=18), decoder=decoder)
        p = train_margin(Corpus([s]), 10, cfg)
        t = p.parse(s)
        assert t.heads == s.gold_tree().heads and t.labels == s.gold_tree().labels

    def test_no_update_when_margin_satisfied(self):
        s = _sentence()
        p = train_margin(Corpus([s]), 10, self.CFG)
        S = p.features(s).score_matrix(p.model.weights)
        cost = np.ones_like(S)
        for d, h in enumerate(s.gold_tree().heads, start=1):
            cost[h, d] = 0
        cost[:, 0] = 0
        assert cle_decode(S + cost).heads == s.gold_tree().heads

    def test_deterministic(self):
        c = Corpus([_sentence(), sentence_from_heads([0, 1, 1])])
        a = train_margin(c, 3, self.CFG)
        b = train_margin(c, 3, self.CFG)
        assert np.array_equal(a.model.weights, b.model.weights)
        assert a.to_bytes() == b.to_bytes()

    def test_serialisation_round_trip(self):
        p = train_margin(Corpus([_sentence()]), 2, self.CFG)
        q = GraphParser.from_model(LinearModel.from_bytes(p.to_bytes()))
        assert q.parse(_sentence()).heads == p.parse(_sentence()).heads
        assert q.labels == p.labels and q.decoder == p.decoder

    def test_corrupt_model_rejected(self):
        data = train_margin(Corpus([_sentence()]), 1, self.CFG).to_bytes()
        with pytest.raises(ModelFormatError):
            LinearModel.from_bytes(b"XXXX" + data[4:])
        with pytest.raises(ModelFormatError):
            LinearModel.from_bytes(data[:-3])


class TestAveraging:
    def test_average_equals_mean_of_snapshots(self):
        rng = np.random.default_rng(0)
        m = LinearModel(4)
        snaps = []
        for _ in range(25):
            for _ in range(int(rng.integers(0, 3))):
                m.update(rng.integers(0, 16, size=3), float(rng.normal()))
            m.tick()
            snaps.append(m.weights.copy())
        m.finalize()
        assert np.allclose(m.averaged_weights, np.mean(snaps, axis=0))

    def test_unticked_average_is_weights(self):
        m = LinearModel(4)
        m.update(np.array([1, 2]), 1.0)
        m.finalize()
        assert np.array_equal(m.averaged_weights, m.weights)
