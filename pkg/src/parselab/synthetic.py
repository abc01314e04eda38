"""Synthetic verb-final treebanks with strong positional regularities.

Sentences follow a prose-like order: noun phrases (optional genitive and
adjective before the noun) precede an optional adverb and the final verb.
``hyperbaton`` moves an adjective away from its noun across another phrase,
which creates non-projective arcs.
"""

from __future__ import annotations


import numpy as np

from .treebank import Corpus, Sentence, Token

_NOUNS = ["rama", "sita", "vana", "nagara", "gaja", "asva", "deva", "muni", "jala", "phala",
          "ratha", "nadi", "guru", "sisya", "raja", "kanya", "grha", "mitra", "pustaka", "vrksa"]
_VERBS = ["gaccha", "pasya", "vada", "likha", "patha", "dada", "khada", "raksa", "nama", "bhaja"]
_ADJS = ["sundara", "mahat", "navina", "prachina", "sveta", "krsna", "dirgha", "laghu"]
_ADVS = ["sighram", "sanaih", "adya", "punah", "atra"]
_CASES = {"nom": ("h", "karta"), "acc": ("m", "karma"), "ins": ("ena", "karana"),
          "dat": ("aya", "sampradana"), "loc": ("e", "adhikarana"), "gen": ("asya", "sambandha")}
_NUMS = {"sg": "", "pl": "ah"}
_GENDERS = ["m", "f", "n"]


def _noun(rng, case, num=None):
    stem = _NOUNS[rng.integers(len(_NOUNS))]
    num = num or ("sg" if rng.random() < 0.75 else "pl")
    gender = _GENDERS[_NOUNS.index(stem) % 3]
    form = stem + _CASES[case][0] + _NUMS[num]
    return form, f"N.{gender}.{num}.{case}", gender, num


def _phrase(rng, case, allow_gen=True):
    """Tokens (form, morph, relative head index or None, label) for one noun phrase; head last."""
    form, morph, gender, num = _noun(rng, case)
    toks = []
    if allow_gen and rng.random() < 0.25:
        gf, gm, _, _ = _noun(rng, "gen")
        toks.append([gf, gm, "NOUN", "sambandha"])
    if rng.random() < 0.4:
        stem = _ADJS[rng.integers(len(_ADJS))]
        toks.append([stem + _CASES[case][0] + _NUMS[num], f"A.{gender}.{num}.{case}", "NOUN", "visesana"])
    toks.append([form, morph, "VERB", _CASES[case][1]])
    return toks


def generate_sentence(rng, hyperbaton: float = 0.0, max_args: int = 5) -> Sentence:
    cases = ["nom"]
    extra = ["acc", "ins", "dat", "loc"]
    rng.shuffle(extra)
    cases += extra[: int(rng.integers(0, max_args))]
    # nominative first, accusative right before the verb, others in between
    middle = [c for c in cases[1:] if c != "acc"]
    ordered = ["nom"] + middle + (["acc"] if "acc" in cases else [])
    phrases = [_phrase(rng, c) for c in ordered]
    items = []  # (form, morph, head_ref, label) with head_ref ("verb",), ("root",) or ("head", k)
    for k, ph in enumerate(phrases):
        for form, morph, kind, label in ph:
            items.append([form, morph, ("verb",) if kind == "VERB" else ("head", k), label])
    if rng.random() < 0.3:
        items.append([_ADVS[rng.integers(len(_ADVS))], "I", ("verb",), "kriyavisesana"])
    num = "sg" if rng.random() < 0.7 else "pl"
    verb = _VERBS[rng.integers(len(_VERBS))] + ("ti" if num == "sg" else "nti")
    items.append([verb, f"V.{num}.3", ("root",), "root"])
    # hyperbaton: move one adjective to the very front, across another phrase
    if hyperbaton > 0 and rng.random() < hyperbaton and len(phrases) > 1:
        cand = [i for i, it in enumerate(items) if it[1].startswith("A.") and it[2][1] > 0]
        if cand:
            i = cand[int(rng.integers(len(cand)))]
            items.insert(0, items.pop(i))
    # phrase heads are the verb-attached tokens other than the adverb, in phrase order
    phrase_head = {}
    k = 0
    for i, it in enumerate(items, start=1):
        if it[2] == ("verb",) and it[3] != "kriyavisesana":
            phrase_head[k] = i
            k += 1
    verb_pos = len(items)
    toks = []
    for i, (form, morph, ref, label) in enumerate(items, start=1):
        if ref == ("root",):
            head = 0
        elif ref == ("verb",):
            head = verb_pos
        else:
            head = phrase_head[ref[1]]
        toks.append(Token(i, form, morph, head, label))
    return Sentence(toks)


def generate_corpus(n: int, seed: int = 0, hyperbaton: float = 0.0, max_args: int = 5) -> Corpus:
    rng = np.random.default_rng(seed)
    return Corpus([generate_sentence(rng, hyperbaton, max_args) for _ in range(n)])
