"""Transition-based parsing: arc-standard, arc-eager and arc-hybrid systems.

The stack starts as ``[0]`` (the root never leaves its bottom) and the buffer
holds tokens ``1..n``.  Action kinds are ordered SHIFT > LEFT-ARC > RIGHT-ARC >
REDUCE; that order, then the label string, breaks every tie.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .features import FeatureConfig, config_hashes, conjoin, hash64, sentence_view
from .linear import LinearModel
from .treebank import ROOT_LABEL, Corpus, DependencyTree, Sentence, is_projective, projectivize

log = logging.getLogger(__name__)

SHIFT, LEFT, RIGHT, REDUCE = "SHIFT", "LEFT-ARC", "RIGHT-ARC", "REDUCE"
KIND_ORDER = {SHIFT: 0, LEFT: 1, RIGHT: 2, REDUCE: 3}
SYSTEMS = ("arc-standard", "arc-eager", "arc-hybrid")


class IllegalAction(ValueError):
    pass


class NotDerivable(ValueError):
    """The gold tree cannot be produced by the transition system."""


@dataclass(frozen=True, order=True)
class Action:
    kind: str
    label: Optional[str] = None

    def sort_key(self):
        return KIND_ORDER[self.kind], self.label or ""

    def __str__(self):
        return self.kind if self.label is None else f"{self.kind}({self.label})"


@dataclass(frozen=True)
class ParserConfiguration:
    stack: Tuple[int, ...]
    buffer: Tuple[int, ...]
    heads: Dict[int, int] = field(default_factory=dict)
    labels: Dict[int, str] = field(default_factory=dict)
    dependents: Dict[int, Tuple[int, ...]] = field(default_factory=dict)
    history: Tuple[Action, ...] = ()

    @classmethod
    def initial(cls, n: int) -> "ParserConfiguration":
        return cls((0,), tuple(range(1, n + 1)))

    def key(self):
        return self.stack, self.buffer, tuple(sorted(self.heads.items()))

    def _with_arc(self, head: int, dep: int, label, stack, buffer, action) -> "ParserConfiguration":
        heads = dict(self.heads)
        heads[dep] = head
        labels = dict(self.labels)
        labels[dep] = label
        deps = dict(self.dependents)
        deps[head] = tuple(sorted(deps.get(head, ()) + (dep,)))
        return ParserConfiguration(stack, buffer, heads, labels, deps, self.history + (action,))

    def arcs(self):
        return {(h, d) for d, h in self.heads.items()}


class TransitionSystem:
    def __init__(self, name: str):
        if name not in SYSTEMS:
            raise ValueError(f"unknown transition system {name!r}")
        self.name = name

    def __repr__(self):
        return f"TransitionSystem({self.name!r})"

    def is_terminal(self, c: ParserConfiguration) -> bool:
        if self.name == "arc-eager":
            return not c.buffer
        return not c.buffer and len(c.stack) == 1

    def legal_kinds(self, c: ParserConfiguration) -> List[str]:
        if self.is_terminal(c):
            return []
        out = []
        st, buf = c.stack, c.buffer
        if self.name == "arc-standard":
            if buf:
                out.append(SHIFT)
            if len(st) >= 3:
                out.append(LEFT)
            if len(st) >= 2:
                out.append(RIGHT)
        elif self.name == "arc-hybrid":
            if buf:
                out.append(SHIFT)
            if len(st) >= 2 and buf:
                out.append(LEFT)
            if len(st) >= 2:
                out.append(RIGHT)
        else:
            s0 = st[-1]
            if buf:
                out.append(SHIFT)
            if buf and s0 != 0 and s0 not in c.heads:
                out.append(LEFT)
            if buf:
                out.append(RIGHT)
            if s0 != 0 and s0 in c.heads:
                out.append(REDUCE)
        return out

    def arc_of(self, c: ParserConfiguration, kind: str) -> Optional[Tuple[int, int]]:
        """(head, dependent) created by an arc action, else None."""
        st, buf = c.stack, c.buffer
        if self.name == "arc-standard":
            if kind == LEFT:
                return st[-1], st[-2]
            if kind == RIGHT:
                return st[-2], st[-1]
        elif self.name == "arc-hybrid":
            if kind == LEFT:
                return buf[0], st[-1]
            if kind == RIGHT:
                return st[-2], st[-1]
        else:
            if kind == LEFT:
                return buf[0], st[-1]
            if kind == RIGHT:
                return st[-1], buf[0]
        return None

    def apply(self, c: ParserConfiguration, action: Action) -> ParserConfiguration:
        kind = action.kind
        if kind not in self.legal_kinds(c):
            raise IllegalAction(f"{action} is not legal in {self.name} configuration {c.stack}|{c.buffer}")
        if (kind in (LEFT, RIGHT)) != (action.label is not None):
            raise IllegalAction("labels are required on arc actions only")
        st, buf = c.stack, c.buffer
        if kind == SHIFT:
            return ParserConfiguration(st + (buf[0],), buf[1:], c.heads, c.labels, c.dependents,
                                       c.history + (action,))
        if kind == REDUCE:
            return ParserConfiguration(st[:-1], buf, c.heads, c.labels, c.dependents, c.history + (action,))
        h, d = self.arc_of(c, kind)
        if self.name == "arc-standard":
            stack = st[:-2] + (st[-1],) if kind == LEFT else st[:-1]
            return c._with_arc(h, d, action.label, stack, buf, action)
        if self.name == "arc-hybrid":
            return c._with_arc(h, d, action.label, st[:-1], buf, action)
        if kind == LEFT:
            return c._with_arc(h, d, action.label, st[:-1], buf, action)
        return c._with_arc(h, d, action.label, st + (buf[0],), buf[1:], action)


def get_system(system) -> TransitionSystem:
    return system if isinstance(system, TransitionSystem) else TransitionSystem(system)


def legal_actions(system, config: ParserConfiguration, labels: Sequence[str] = ("dep",)) -> List[Action]:
    system = get_system(system)
    out = []
    for k in system.legal_kinds(config):
        if k in (LEFT, RIGHT):
            out.extend(Action(k, l) for l in sorted(labels))
        else:
            out.append(Action(k))
    return out


def apply_action(system, config: ParserConfiguration, action: Action) -> ParserConfiguration:
    return get_system(system).apply(config, action)


def config_tree(config: ParserConfiguration, n: int, fallback_label: str = ROOT_LABEL) -> DependencyTree:
    """Tree of a terminal configuration; unattached tokens go to the root."""
    heads = [config.heads.get(d, 0) for d in range(1, n + 1)]
    labels = [config.labels[d] if d in config.heads else fallback_label for d in range(1, n + 1)]
    return DependencyTree(heads, labels)


# ---------------------------------------------------------------------------
# Oracles

def _gold_label(gold: DependencyTree, h: int, d: int, default: str = "dep") -> str:
    return gold.labels[d - 1] if gold.heads[d - 1] == h else default


def dynamic_oracle_cost(config: ParserConfiguration, gold: DependencyTree, action, system="arc-hybrid") -> int:
    """Number of gold arcs that become unreachable by taking ``action`` (arc-hybrid, unlabelled)."""
    if get_system(system).name != "arc-hybrid":
        raise ValueError("the dynamic oracle is implemented for arc-hybrid only")
    kind = action.kind if isinstance(action, Action) else action
    g = gold.heads
    st, buf = config.stack, config.buffer
    if kind == SHIFT:
        b = buf[0]
        below = set(st[:-1])
        cost = 1 if g[b - 1] in below else 0
        return cost + sum(1 for d in st if d != 0 and g[d - 1] == b)
    s0 = st[-1]
    if kind == LEFT:
        heads_lost = {st[-2]} | set(buf[1:])
        cost = 1 if g[s0 - 1] in heads_lost else 0
        return cost + sum(1 for d in buf if g[d - 1] == s0)
    if kind == RIGHT:
        cost = 1 if g[s0 - 1] in set(buf) else 0
        return cost + sum(1 for d in buf if g[d - 1] == s0)
    raise IllegalAction(f"{kind} does not exist in arc-hybrid")


def _hybrid_zero_cost(config, gold, kinds):
    costs = {k: dynamic_oracle_cost(config, gold, k) for k in kinds}
    best = min(costs.values())
    return next(k for k in kinds if costs[k] == best), costs


def static_oracle(system, config: ParserConfiguration, gold: DependencyTree, check: bool = True) -> Action:
    """Canonical next action of the gold derivation."""
    system = get_system(system)
    if check and not is_projective(gold):
        raise NotDerivable(f"{system.name} cannot derive a non-projective tree")
    kinds = system.legal_kinds(config)
    if not kinds:
        raise NotDerivable("configuration is terminal")
    g = gold.heads
    st, buf = config.stack, config.buffer
    s0 = st[-1]
    if system.name == "arc-hybrid":
        kind, costs = _hybrid_zero_cost(config, gold, kinds)
        if costs[kind] != 0:
            raise NotDerivable("configuration is off the gold derivation")
    elif system.name == "arc-standard":
        kind = None
        if len(st) >= 2:
            s1 = st[-2]
            if s1 != 0 and g[s1 - 1] == s0:
                kind = LEFT
            elif g[s0 - 1] == s1 and not any(g[d - 1] == s0 and d not in config.heads
                                             for d in range(1, len(g) + 1)):
                kind = RIGHT
        if kind is None:
            kind = SHIFT
    else:
        if buf and s0 != 0 and g[s0 - 1] == buf[0]:
            kind = LEFT
        elif buf and g[buf[0] - 1] == s0:
            kind = RIGHT
        elif s0 != 0 and s0 in config.heads and buf and any(
                g[buf[0] - 1] == k or (k != 0 and g[k - 1] == buf[0]) for k in st[:-1]):
            kind = REDUCE
        else:
            kind = SHIFT
    if kind not in kinds:
        raise NotDerivable(f"gold derivation requires illegal {kind}")
    if kind in (LEFT, RIGHT):
        h, d = system.arc_of(config, kind)
        return Action(kind, _gold_label(gold, h, d))
    return Action(kind)


def oracle_sequence(system, gold: DependencyTree) -> List[Action]:
    system = get_system(system)
    if not is_projective(gold):
        raise NotDerivable(f"{system.name} cannot derive a non-projective tree")
    c = ParserConfiguration.initial(len(gold))
    seq = []
    while not system.is_terminal(c):
        a = static_oracle(system, c, gold, check=False)
        seq.append(a)
        c = system.apply(c, a)
    return seq


def reference_action(config: ParserConfiguration, gold: DependencyTree, labels: Sequence[str] = ()) -> Action:
    """Minimal-cost arc-hybrid action from any configuration (the dynamic oracle policy)."""
    system = TransitionSystem("arc-hybrid")
    kinds = system.legal_kinds(config)
    if not kinds:
        raise IllegalAction("terminal configuration")
    kind, _ = _hybrid_zero_cost(config, gold, kinds)
    if kind in (LEFT, RIGHT):
        h, d = system.arc_of(config, kind)
        default = sorted(labels)[0] if labels else "dep"
        return Action(kind, _gold_label(gold, h, d, default))
    return Action(kind)


# ---------------------------------------------------------------------------
# Scoring

_KIND_SALT = {k: hash64(f"KIND={k}") for k in KIND_ORDER}


class TransitionModel:
    """Linear action scorer: a kind part over configuration features and, for
    arc actions, a label part over the smaller label template set."""

    def __init__(self, system, labels: Sequence[str], feature_cfg: FeatureConfig = FeatureConfig(),
                 model: Optional[LinearModel] = None, parser: str = "transition"):
        self.system = get_system(system)
        self.labels = sorted(labels)
        self.cfg = feature_cfg
        self.model = model or LinearModel(feature_cfg.hash_bits)
        self.parser = parser
        self._kind_salts = {k: np.array([s], dtype=np.uint64) for k, s in _KIND_SALT.items()}
        self._label_salts = {k: np.array([hash64(f"KL={k}:{l}") for l in self.labels], dtype=np.uint64)
                             for k in (LEFT, RIGHT)}
        self._label_pos = {l: i for i, l in enumerate(self.labels)}
        self.model.header.update(self._header())

    def _header(self):
        return {"parser": self.parser, "system": self.system.name, "labels": self.labels,
                "feature": {"hash_bits": self.cfg.hash_bits, "use_morph": self.cfg.use_morph,
                            "free_word_order": self.cfg.free_word_order,
                            "position_templates": self.cfg.position_templates}}

    def features(self, config, sentence, view=None):
        return config_hashes(config, sentence, self.cfg, view)

    def kind_indices(self, feats, kind) -> np.ndarray:
        return conjoin(feats[0], self._kind_salts[kind], self.cfg.mask)[0]

    def label_indices(self, feats, kind) -> np.ndarray:
        """(L, F) index matrix of the label part of ``kind``."""
        return conjoin(feats[1], self._label_salts[kind], self.cfg.mask)

    def action_indices(self, feats, action: Action) -> np.ndarray:
        idx = self.kind_indices(feats, action.kind)
        if action.label is not None:
            lab = self.label_indices(feats, action.kind)[self._label_pos[action.label]]
            idx = np.concatenate([idx, lab])
        return idx

    def score_kinds(self, feats, kinds, w) -> Dict[str, float]:
        return {k: float(w[self.kind_indices(feats, k)].sum()) for k in kinds}

    def score_labels(self, feats, kind, w) -> np.ndarray:
        return w[self.label_indices(feats, kind)].sum(axis=1)

    def scored_actions(self, config, feats, w) -> List[Tuple[Action, float]]:
        """Legal actions with scores, in tie-break order."""
        out = []
        for k in self.system.legal_kinds(config):
            ks = float(w[self.kind_indices(feats, k)].sum())
            if k in (LEFT, RIGHT):
                ls = self.score_labels(feats, k, w)
                out.extend((Action(k, l), ks + float(ls[i])) for i, l in enumerate(self.labels))
            else:
                out.append((Action(k), ks))
        out.sort(key=lambda p: p[0].sort_key())
        return out

    def best_label(self, feats, kind, w) -> str:
        return self.labels[int(np.argmax(self.score_labels(feats, kind, w)))]

    def to_bytes(self) -> bytes:
        self.model.header.update(self._header())
        return self.model.to_bytes()

    @classmethod
    def from_model(cls, model: LinearModel) -> "TransitionModel":
        h = model.header
        return cls(h["system"], h["labels"], FeatureConfig(**h["feature"]), model, h.get("parser", "transition"))

    def parse(self, sentence: Sentence, beam: int = 1) -> DependencyTree:
        if beam <= 1:
            return greedy_parse(self, self.system, sentence)
        return beam_parse(self, self.system, sentence, beam)


def greedy_parse(model: TransitionModel, system, sentence: Sentence, weights=None) -> DependencyTree:
    system = get_system(system)
    w = model.model.active() if weights is None else weights
    view = sentence_view(sentence, model.cfg)
    c = ParserConfiguration.initial(len(sentence))
    while not system.is_terminal(c):
        feats = model.features(c, sentence, view)
        scored = model.scored_actions(c, feats, w)
        scores = np.array([s for _, s in scored])
        c = system.apply(c, scored[int(np.argmax(scores))][0])
    return config_tree(c, len(sentence))


@dataclass
class _Item:
    score: float
    config: ParserConfiguration
    parent: Optional["_Item"]
    action: Optional[Action]
    feats: object
    gold: bool

    def trail(self):
        out, it = [], self
        while it.parent is not None:
            out.append((it.parent.feats, it.action))
            it = it.parent
        return out[::-1]


def _beam_search(model: TransitionModel, system, sentence, width, w, gold_seq=None):
    """Beam search.  With ``gold_seq`` it stops as soon as the gold prefix leaves the
    beam and returns ``("early", step, best_item)``; otherwise ``("done", best_item)``."""
    view = sentence_view(sentence, model.cfg)
    c0 = ParserConfiguration.initial(len(sentence))
    beam = [_Item(0.0, c0, None, None, model.features(c0, sentence, view), True)]
    finished: List[_Item] = []
    step = 0
    while beam:
        cands = []
        for rank, it in enumerate(beam):
            for order, (a, s) in enumerate(model.scored_actions(it.config, it.feats, w)):
                cands.append((-(it.score + s), -s, rank, order, it, a))
        cands.sort(key=lambda t: t[:4])
        new_beam = []
        for negtot, _, _, _, it, a in cands[:width]:
            c = system.apply(it.config, a)
            is_gold = (gold_seq is not None and it.gold and step < len(gold_seq) and gold_seq[step] == a)
            feats = None if system.is_terminal(c) else model.features(c, sentence, view)
            new = _Item(-negtot, c, it, a, feats, is_gold)
            (finished if system.is_terminal(c) else new_beam).append(new)
        step += 1
        if gold_seq is not None:
            alive = any(i.gold for i in new_beam) or any(i.gold for i in finished)
            if not alive:
                pool = new_beam + [i for i in finished if len(i.config.history) == step]
                best = max(pool, key=lambda i: i.score) if pool else None
                return "early", step, best
        beam = new_beam
    best = finished[0]
    for it in finished[1:]:
        if it.score > best.score:
            best = it
    return "done", best


def beam_parse(model: TransitionModel, system, sentence: Sentence, width: int, weights=None) -> DependencyTree:
    if width < 1:
        raise ValueError("beam width must be >= 1")
    system = get_system(system)
    w = model.model.active() if weights is None else weights
    _, best = _beam_search(model, system, sentence, width, w)
    return config_tree(best.config, len(sentence))


def trajectory_score(model: TransitionModel, sentence, actions: Sequence[Action], weights=None) -> float:
    w = model.model.active() if weights is None else weights
    view = sentence_view(sentence, model.cfg)
    c = ParserConfiguration.initial(len(sentence))
    total = 0.0
    for a in actions:
        feats = model.features(c, sentence, view)
        total += float(w[model.action_indices(feats, a)].sum())
        c = model.system.apply(c, a)
    return total


def beam_parse_trajectory(model, system, sentence, width, weights=None):
    """Like beam_parse but also returns the chosen action sequence and its model score."""
    system = get_system(system)
    w = model.model.active() if weights is None else weights
    _, best = _beam_search(model, system, sentence, width, w)
    return config_tree(best.config, len(sentence)), list(best.config.history), best.score


# ---------------------------------------------------------------------------
# Training

@dataclass
class EarlyUpdateConfig:
    epochs: int = 10
    beam: int = 8
    system: str = "arc-eager"
    nonprojective: str = "projectivize"  # or "skip"
    shuffle: bool = True
    seed: int = 0
    feature: FeatureConfig = field(default_factory=FeatureConfig)


def training_trees(corpus: Corpus, mode: str = "projectivize") -> List[Tuple[int, DependencyTree]]:
    out = []
    for k, s in enumerate(corpus.sentences):
        g = s.gold_tree()
        if not is_projective(g):
            if mode == "skip":
                continue
            if mode != "projectivize":
                raise ValueError(f"unknown non-projective mode {mode!r}")
            g = projectivize(g)
        out.append((k, g))
    return out


def train_early_update(corpus: Corpus, system=None, epochs: Optional[int] = None, beam: Optional[int] = None,
                       config: Optional[EarlyUpdateConfig] = None,
                       on_epoch: Optional[Callable[[int, TransitionModel], None]] = None) -> TransitionModel:
    """Beam-search perceptron with early update and averaged weights.

    When the gold prefix falls off the beam the weights move by gold-prefix
    features minus best-item-prefix features and the sentence is abandoned
    for this epoch.
    """
    config = config or EarlyUpdateConfig()
    system = get_system(system or config.system)
    epochs = config.epochs if epochs is None else epochs
    width = config.beam if beam is None else beam
    tm = TransitionModel(system, corpus.labels() or ["dep"], config.feature, parser="arceager")
    model = tm.model
    model.header["beam"] = width
    data = training_trees(corpus, config.nonprojective)
    gold_paths = {}
    for k, g in data:
        sent = corpus.sentences[k]
        seq = oracle_sequence(system, g)
        view = sentence_view(sent, tm.cfg)
        c = ParserConfiguration.initial(len(sent))
        feats = []
        for a in seq:
            feats.append(tm.features(c, sent, view))
            c = system.apply(c, a)
        gold_paths[k] = (seq, feats)
    rng = np.random.default_rng(config.seed)
    for epoch in range(epochs):
        order = rng.permutation(len(data)) if config.shuffle else np.arange(len(data))
        updates = 0
        for j in order:
            k, g = data[j]
            sent = corpus.sentences[k]
            seq, gfeats = gold_paths[k]
            result = _beam_search(tm, system, sent, width, model.weights, gold_seq=seq)
            if result[0] == "early":
                _, step, best = result
                gold_part = list(zip(gfeats[:step], seq[:step]))
                pred_part = best.trail() if best is not None else []
            else:
                best = result[1]
                if list(best.config.history) == seq:
                    model.tick()
                    continue
                gold_part = list(zip(gfeats, seq))
                pred_part = best.trail()
            for f, a in gold_part:
                model.update(tm.action_indices(f, a), 1.0)
            for f, a in pred_part:
                model.update(tm.action_indices(f, a), -1.0)
            updates += 1
            model.tick()
        log.info("%s epoch %d: %d/%d sentences updated", system.name, epoch + 1, updates, len(data))
        if on_epoch is not None:
            model.finalize()
            on_epoch(epoch + 1, tm)
            model.averaged_weights = None
    model.finalize()
    return tm
