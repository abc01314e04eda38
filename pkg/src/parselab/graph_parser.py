"""Arc-factored graph-based parsing: scoring, MST/projective decoding, labelling, training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .features import FeatureConfig, SentenceEdgeFeatures, conjoin, label_salts
from .linear import LinearModel
from .treebank import Corpus, DependencyTree, Sentence

log = logging.getLogger(__name__)


@dataclass
class ArcScores:
    """``scores[h, d]`` is the score of the arc h -> d; column 0 and the diagonal are unused."""

    scores: np.ndarray
    label_scores: Optional[np.ndarray] = None  # (n+1, n+1, L)
    labels: List[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.scores.shape[0] - 1


def tree_score(scores, heads: Sequence[int]) -> float:
    s = scores.scores if isinstance(scores, ArcScores) else scores
    return float(sum(s[h, d] for d, h in enumerate(heads, start=1)))


# ---------------------------------------------------------------------------
# Decoding

def _find_cycle(heads: np.ndarray) -> Optional[List[int]]:
    n1 = len(heads)
    color = np.zeros(n1, dtype=int)
    color[0] = 2
    for start in range(1, n1):
        path, node = [], start
        while color[node] == 0:
            color[node] = 1
            path.append(node)
            node = heads[node]
        if color[node] == 1:
            return path[path.index(node):]
        for p in path:
            color[p] = 2
    return None


def _cle(S: np.ndarray) -> np.ndarray:
    n1 = S.shape[0]
    heads = np.argmax(S, axis=0)
    heads[0] = -1
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads
    in_cycle = np.zeros(n1, dtype=bool)
    in_cycle[cycle] = True
    cyc = np.array(sorted(cycle))
    rest = np.array([i for i in range(n1) if not in_cycle[i]])
    m = len(rest)
    S2 = np.full((m + 1, m + 1), -np.inf)
    S2[:m, :m] = S[np.ix_(rest, rest)]
    # arcs entering the cycle: gain relative to the cycle arc they replace
    cyc_in = S[np.ix_(rest, cyc)] - S[heads[cyc], cyc][None, :]
    enter = np.argmax(cyc_in, axis=1)
    S2[:m, m] = cyc_in[np.arange(m), enter]
    # arcs leaving the cycle
    cyc_out = S[np.ix_(cyc, rest)]
    leave = np.argmax(cyc_out, axis=0)
    S2[m, :m] = cyc_out[leave, np.arange(m)]
    S2[:, 0] = -np.inf
    np.fill_diagonal(S2, -np.inf)
    sub = _cle(S2)
    out = heads.copy()
    for j in range(1, m):
        h = sub[j]
        out[rest[j]] = cyc[leave[j]] if h == m else rest[h]
    h = sub[m]
    v = cyc[enter[h]]
    out[v] = rest[h]
    return out


def cle_decode(scores) -> DependencyTree:
    """Maximum spanning arborescence rooted at 0 (Chu-Liu-Edmonds).

    Ties among incoming arcs go to the lowest head index.
    """
    S = np.array(scores.scores if isinstance(scores, ArcScores) else scores, dtype=np.float64)
    n1 = S.shape[0]
    if n1 == 2:
        return DependencyTree([0])
    S[:, 0] = -np.inf
    np.fill_diagonal(S, -np.inf)
    heads = _cle(S)
    return DependencyTree([int(h) for h in heads[1:]])


def eisner_decode(scores) -> DependencyTree:
    """Highest-scoring projective tree by first-order span dynamic programming."""
    S = np.asarray(scores.scores if isinstance(scores, ArcScores) else scores, dtype=np.float64)
    N = S.shape[0]
    if N == 2:
        return DependencyTree([0])
    # complete/incomplete spans, direction 0 = head on the right, 1 = head on the left
    comp = np.zeros((N, N, 2))
    inc = np.full((N, N, 2), -np.inf)
    comp_bp = np.zeros((N, N, 2), dtype=int)
    inc_bp = np.zeros((N, N, 2), dtype=int)
    for i in range(N):
        comp[i, i, :] = 0.0
    for width in range(1, N):
        for s in range(N - width):
            t = s + width
            vals = comp[s, s:t, 1] + comp[s + 1:t + 1, t, 0]
            r = int(np.argmax(vals))
            best = vals[r]
            # left arc t -> s (root may not be a dependent)
            if s > 0:
                inc[s, t, 0] = best + S[t, s]
                inc_bp[s, t, 0] = s + r
            inc[s, t, 1] = best + S[s, t]
            inc_bp[s, t, 1] = s + r
            vals = comp[s, s:t, 0] + inc[s:t, t, 0]
            r = int(np.argmax(vals))
            comp[s, t, 0] = vals[r]
            comp_bp[s, t, 0] = s + r
            vals = inc[s, s + 1:t + 1, 1] + comp[s + 1:t + 1, t, 1]
            r = int(np.argmax(vals))
            comp[s, t, 1] = vals[r]
            comp_bp[s, t, 1] = s + 1 + r
    heads = [0] * N
    stack = [(0, N - 1, 1, True)]
    while stack:
        s, t, d, complete = stack.pop()
        if s == t:
            continue
        if complete:
            r = comp_bp[s, t, d]
            if d == 0:
                stack += [(s, r, 0, True), (r, t, 0, False)]
            else:
                stack += [(s, r, 1, False), (r, t, 1, True)]
        else:
            r = inc_bp[s, t, d]
            if d == 0:
                heads[s] = t
            else:
                heads[t] = s
            stack += [(s, r, 1, True), (r + 1, t, 0, True)]
    return DependencyTree(heads[1:])


def assign_labels(scores: ArcScores, heads: Sequence[int]) -> List[str]:
    """Per-arc argmax label; the label inventory is sorted, so ties go to the lexicographically first."""
    labels = scores.labels
    if scores.label_scores is None:
        return [labels[0] if labels else "_"] * len(heads)
    order = np.argsort(np.array(labels), kind="stable")
    out = []
    for d, h in enumerate(heads, start=1):
        row = scores.label_scores[h, d][order]
        out.append(labels[order[int(np.argmax(row))]])
    return out


# ---------------------------------------------------------------------------
# Scoring

class GraphParser:
    """Arc-factored linear parser.  ``decoder`` is ``"cle"`` (non-projective) or ``"eisner"``."""

    def __init__(self, labels: Sequence[str], feature_cfg: FeatureConfig = FeatureConfig(),
                 decoder: str = "cle", model: Optional[LinearModel] = None):
        if decoder not in ("cle", "eisner"):
            raise ValueError(f"unknown decoder {decoder!r}")
        self.labels = sorted(labels)
        self.cfg = feature_cfg
        self.decoder = decoder
        self.model = model or LinearModel(feature_cfg.hash_bits)
        self._salts = label_salts(self.labels)
        self.model.header.update(self._header())

    def _header(self):
        return {"parser": "graph", "labels": self.labels, "decoder": self.decoder,
                "feature": {"hash_bits": self.cfg.hash_bits, "use_morph": self.cfg.use_morph,
                            "free_word_order": self.cfg.free_word_order,
                            "position_templates": self.cfg.position_templates}}

    def features(self, sentence: Sentence) -> SentenceEdgeFeatures:
        return SentenceEdgeFeatures(sentence, self.cfg)

    def label_indices(self, feats: SentenceEdgeFeatures, h: int, d: int) -> np.ndarray:
        return conjoin(feats.label_base[h, d], self._salts, self.cfg.mask)

    def score(self, sentence: Sentence, weights: Optional[np.ndarray] = None,
              feats: Optional[SentenceEdgeFeatures] = None, with_labels: bool = True) -> ArcScores:
        w = self.model.active() if weights is None else weights
        feats = feats or self.features(sentence)
        S = feats.score_matrix(w)
        S[:, 0] = 0.0
        np.fill_diagonal(S, 0.0)
        L = None
        if with_labels and self.labels:
            n = feats.n
            L = np.zeros((n + 1, n + 1, len(self.labels)))
            for (h, d) in feats.label_base:
                L[h, d] = w[self.label_indices(feats, h, d)].sum(axis=1)
        return ArcScores(S, L, self.labels)

    def decode(self, scores) -> DependencyTree:
        return cle_decode(scores) if self.decoder == "cle" else eisner_decode(scores)

    def parse(self, sentence: Sentence) -> DependencyTree:
        feats = self.features(sentence)
        sc = self.score(sentence, feats=feats, with_labels=False)
        tree = self.decode(sc)
        w = self.model.active()
        labels = []
        for d, h in enumerate(tree.heads, start=1):
            row = w[self.label_indices(feats, h, d)].sum(axis=1)
            labels.append(self.labels[int(np.argmax(row))] if self.labels else "_")
        return DependencyTree(tree.heads, labels)

    def to_bytes(self) -> bytes:
        self.model.header.update(self._header())
        return self.model.to_bytes()

    @classmethod
    def from_model(cls, model: LinearModel) -> "GraphParser":
        h = model.header
        cfg = FeatureConfig(**h["feature"])
        return cls(h["labels"], cfg, h["decoder"], model)


def score_arcs(model: LinearModel, sentence: Sentence, labels: Sequence[str] = (),
               feature_cfg: Optional[FeatureConfig] = None) -> ArcScores:
    cfg = feature_cfg or FeatureConfig(hash_bits=model.hash_bits)
    return GraphParser(labels, cfg, model=model).score(sentence)


# ---------------------------------------------------------------------------
# Training

@dataclass
class MarginConfig:
    epochs: int = 10
    loss: str = "margin"   # or "perceptron"
    decoder: str = "cle"
    shuffle: bool = True
    seed: int = 0
    feature: FeatureConfig = field(default_factory=FeatureConfig)


def train_margin(corpus: Corpus, epochs: Optional[int] = None, config: Optional[MarginConfig] = None,
                 on_epoch: Optional[Callable[[int, GraphParser], None]] = None) -> GraphParser:
    """Online structured training with cost-augmented decoding and averaged weights.

    Each sentence is decoded under the current weights with a unit cost added
    to every wrong head (plain decoding when ``loss="perceptron"``); the
    weights then move by gold-tree features minus predicted-tree features.
    Labels are trained as a per-arc multiclass perceptron on gold arcs.
    """
    config = config or MarginConfig()
    epochs = config.epochs if epochs is None else epochs
    parser = GraphParser(corpus.labels(), config.feature, config.decoder)
    model = parser.model
    cache = [parser.features(s) for s in corpus.sentences]
    golds = [s.gold_tree() for s in corpus.sentences]
    rng = np.random.default_rng(config.seed)
    label_pos = {l: i for i, l in enumerate(parser.labels)}
    for epoch in range(epochs):
        order = rng.permutation(len(corpus)) if config.shuffle else np.arange(len(corpus))
        mistakes = 0
        for k in order:
            feats, gold = cache[k], golds[k]
            S = feats.score_matrix(model.weights)
            if config.loss == "margin":
                cost = np.ones_like(S)
                for d, h in enumerate(gold.heads, start=1):
                    cost[h, d] = 0.0
                cost[:, 0] = 0.0
                S = S + cost
            pred = parser.decode(S)
            if pred.heads != gold.heads:
                mistakes += 1
                for d, (gh, ph) in enumerate(zip(gold.heads, pred.heads), start=1):
                    if gh != ph:
                        model.update(feats.arc(gh, d), 1.0)
                        model.update(feats.arc(ph, d), -1.0)
            for d, (gh, gl) in enumerate(zip(gold.heads, gold.labels), start=1):
                idx = parser.label_indices(feats, gh, d)
                row = model.weights[idx].sum(axis=1)
                best = int(np.argmax(row))
                g = label_pos[gl]
                if best != g:
                    model.update(idx[g], 1.0)
                    model.update(idx[best], -1.0)
            model.tick()
        log.info("graph epoch %d: %d/%d sentences updated", epoch + 1, mistakes, len(corpus))
        if on_epoch is not None:
            model.finalize()
            on_epoch(epoch + 1, parser)
            model.averaged_weights = None
    model.finalize()
    return parser
