import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_trees, degree, depth, head_arrays, projective_by_dominance, reaches_root
from parselab.treebank import (Arc, Corpus, DependencyTree, Sentence, Token, TreebankError, TreeValidationError,
                               arc_degrees, corpus_checksum, dependency_length, erase_gold, is_projective,
                               is_tree, nonprojectivity_degree, permute_tree, permute_words, permutation,
                               projectivize, read_conll, root_distance, root_distances, sentence_from_heads,
                               unpermute_tree, validate_tree, write_conll)
from strategies import projective_trees, trees

TWO = "1\tramah\t_\t_\tN.m.sg.nom\t_\t2\tkarta\t_\t_\n2\tgacchati\t_\t_\tV.sg.3\t_\t0\troot\t_\t_\n\n"


class TestReadWrite:
    def test_two_token_sentence(self):
        c = read_conll(io.BytesIO(TWO.encode()))
        assert len(c.sentences) == 1
        s = c.sentences[0]
        assert len(s) == 2
        assert s.gold_tree().heads == [2, 0]
        assert s.forms == ["ramah", "gacchati"]
        assert s.morphs == ["N.m.sg.nom", "V.sg.3"]
        assert s.gold_tree().labels == ["karta", "root"]

    def test_empty_stream(self):
        assert read_conll(io.BytesIO(b"")).sentences == []

    def test_head_out_of_range(self):
        bad = TWO.replace("\t2\tkarta", "\t3\tkarta")
        with pytest.raises(TreeValidationError):
            read_conll(bad.encode())

    def test_malformed_line_reports_line_number(self):
        bad = TWO + "1\tonly\tthree\n"
        with pytest.raises(TreebankError) as e:
            read_conll(bad)
        assert e.value.line == 4

    def test_cycle_rejected(self):
        bad = TWO.replace("\t0\troot", "\t1\troot")
        with pytest.raises(TreeValidationError):
            read_conll(bad)

    def test_feats_fallback_for_morph(self):
        text = "1\tx\t_\t_\t_\tCase=Nom\t0\troot\t_\t_\n\n"
        assert read_conll(text).sentences[0].morphs == ["Case=Nom"]
        assert read_conll(text.replace("\t_\tCase", "\tN\tCase"), morph_column="feats").sentences[0].morphs \
            == ["Case=Nom"]

    def test_round_trip_bytes(self):
        c = read_conll(TWO)
        assert write_conll(c) == TWO.encode()
        again = read_conll(write_conll(c))
        assert again.sentences[0].gold_tree() == c.sentences[0].gold_tree()

    def test_empty_corpus_writes_nothing(self):
        assert write_conll(Corpus([])) == b""

    def test_predicted_columns(self):
        c = read_conll(TWO)
        pred = Corpus(c.sentences, [DependencyTree([0, 1], ["root", "karma"])])
        out = read_conll(write_conll(pred, which="predicted"))
        assert out.sentences[0].gold_tree().heads == [0, 1]
        assert out.sentences[0].gold_tree().labels == ["root", "karma"]

    def test_predicted_requested_but_absent(self):
        with pytest.raises(TreebankError):
            write_conll(read_conll(TWO), which="predicted")

    def test_unannotated_text(self):
        c = read_conll("1\ta\t_\t_\tN\t_\t_\t_\t_\t_\n\n")
        assert not c.sentences[0].has_gold

    @settings(max_examples=60, deadline=None)
    @given(st.lists(trees(max_n=7), min_size=0, max_size=4),
           st.lists(st.sampled_from(["a", "bb", "ā", "x y"]), min_size=7, max_size=7))
    def test_round_trip_property(self, heads_list, forms):
        sents = []
        for heads in heads_list:
            n = len(heads)
            sents.append(sentence_from_heads(heads, [f"l{i % 3}" for i in range(n)],
                                             [forms[i].replace(" ", "_") for i in range(n)],
                                             [f"M{i % 2}" for i in range(n)]))
        c = Corpus(sents)
        data = write_conll(c)
        back = read_conll(data)
        assert [s.gold_tree() for s in back.sentences] == [s.gold_tree() for s in c.sentences]
        assert [s.forms for s in back.sentences] == [s.forms for s in c.sentences]
        assert [s.morphs for s in back.sentences] == [s.morphs for s in c.sentences]
        assert write_conll(back) == data


class TestValidate:
    def test_examples(self):
        assert validate_tree([2, 0]) == []
        assert any("cycle" in p for p in validate_tree([2, 1]))
        assert validate_tree([0, 1, 2, 1]) == []

    def test_violation_kinds(self):
        assert any("range" in p for p in validate_tree([3, 0]))
        assert any("self" in p for p in validate_tree([1, 0]))

    def test_single_root_flag(self):
        assert validate_tree([0, 0]) == []
        assert validate_tree([0, 0], single_root=True)

    @pytest.mark.parametrize("n", range(1, 6))
    def test_matches_reachability_oracle(self, n):
        for heads in head_arrays(n):
            assert is_tree(list(heads)) == reaches_root(heads), heads

    def test_matches_oracle_n6_sample(self):
        rng = np.random.default_rng(0)
        for _ in range(3000):
            heads = [int(x) for x in rng.integers(0, 7, 6)]
            assert is_tree(heads) == reaches_root(heads)


class TestStructure:
    def test_projectivity_examples(self):
        assert is_projective([2, 0, 2])
        assert not is_projective([0, 4, 1, 1])
        assert is_projective([0])

    def test_degree_examples(self):
        for d, h in enumerate([2, 0, 2], start=1):
            assert nonprojectivity_degree([2, 0, 2], (h, d)) == 0
        t = DependencyTree([0, 4, 1, 1])
        assert nonprojectivity_degree(t, Arc(4, 2)) == 1
        assert nonprojectivity_degree(t, (1, 3)) == 0

    def test_degree_arc_not_in_tree(self):
        with pytest.raises(ValueError):
            nonprojectivity_degree([2, 0, 2], (1, 3))

    def test_dependency_length(self):
        assert dependency_length((2, 1)) == 1
        assert dependency_length(Arc(1, 4)) == 3
        assert dependency_length((0, 3)) is None

    def test_root_distance(self):
        assert root_distance([0], 1) == 1
        assert root_distance([2, 0, 2], 1) == 2
        assert root_distance([0, 1, 2, 3], 4) == 4

    @pytest.mark.parametrize("n", range(1, 6))
    def test_projective_iff_all_degrees_zero(self, n):
        for heads in all_trees(n):
            assert is_projective(heads) == all(v == 0 for v in arc_degrees(heads))
            assert is_projective(heads) == projective_by_dominance(heads)

    @settings(max_examples=200, deadline=None)
    @given(trees())
    def test_degree_matches_definition(self, heads):
        assert arc_degrees(heads) == [degree(heads, h, d) for d, h in enumerate(heads, start=1)]

    @settings(max_examples=200, deadline=None)
    @given(trees())
    def test_root_distances_match_oracle(self, heads):
        assert root_distances(heads) == [depth(heads, d) for d in range(1, len(heads) + 1)]

    @settings(max_examples=200, deadline=None)
    @given(trees())
    def test_projectivize(self, heads):
        t = projectivize(DependencyTree(heads))
        assert is_tree(t.heads) and is_projective(t)
        if is_projective(heads):
            assert t.heads == heads
        # lifting only ever moves a word to one of its original ancestors
        for d, h in enumerate(t.heads, start=1):
            assert h == heads[d - 1] or h in _ancestors(heads, d)

    @settings(max_examples=100, deadline=None)
    @given(projective_trees())
    def test_generated_projective(self, heads):
        assert is_tree(heads) and is_projective(heads)


def _ancestors(heads, node):
    out = []
    while node:
        node = heads[node - 1]
        out.append(node)
    return out


class TestPermutation:
    def _sentence(self):
        return sentence_from_heads([2, 0, 2, 3, 2], ["a", "root", "b", "c", "d"], ["w1", "w2", "w3", "w4", "w5"])

    def test_identity(self):
        s = self._sentence()
        assert permute_words(s, "identity") == s

    def test_same_seed_same_output(self):
        s = self._sentence()
        assert permute_words(s, seed=7) == permute_words(s, seed=7)

    @settings(max_examples=100, deadline=None)
    @given(trees(), st.integers(0, 10 ** 6))
    def test_isomorphism(self, heads, seed):
        s = sentence_from_heads(heads, [f"l{i}" for i in range(len(heads))],
                                [f"w{i}" for i in range(1, len(heads) + 1)])
        p = permute_words(s, seed=seed)
        order = permutation(len(s), seed=seed)
        assert is_tree(p.gold_tree().heads)
        # arcs as (head form, dependent form, label) are preserved
        def arcs(x):
            f = ["ROOT"] + x.forms
            return sorted((f[t.head], t.form, t.label) for t in x.tokens)
        assert arcs(p) == arcs(s)
        assert permute_tree(s.gold_tree(), order) == p.gold_tree()
        assert unpermute_tree(p.gold_tree(), order) == s.gold_tree()

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            permutation(3, "reverse")


class TestGoldErasure:
    def test_erase_and_checksum(self):
        c = read_conll(TWO)
        e = erase_gold(c)
        assert all(t.head is None and t.label is None for s in e.sentences for t in s.tokens)
        assert corpus_checksum(e) != corpus_checksum(c)
        assert corpus_checksum(e) == corpus_checksum(erase_gold(e))
        assert c.sentences[0].tokens[0].head == 2  # original untouched

    def test_token_invariants(self):
        with pytest.raises(ValueError):
            Token(0, "x")
        with pytest.raises(ValueError):
            Token(1, "x", head=1)
        with pytest.raises(TreebankError):
            Sentence([Token(1, "a"), Token(3, "b")])
