"""Learning to search for the arc-hybrid parser.

Each training sentence is rolled in with a mixture of the reference policy
(the arc-hybrid dynamic oracle) and the learned policy.  At every roll-in
step each legal action is tried once and the trajectory is completed with
the roll-out policy; the loss of the finished tree becomes the cost of that
action, and the policy receives a cost-sensitive perceptron update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .features import FeatureConfig, sentence_view
from .transition import (LEFT, RIGHT, Action, ParserConfiguration, TransitionModel, TransitionSystem,
                         config_tree, greedy_parse, reference_action, training_trees)
from .treebank import Corpus, DependencyTree, Sentence

log = logging.getLogger(__name__)

HYBRID = TransitionSystem("arc-hybrid")


def structured_loss(predicted: DependencyTree, gold: DependencyTree, labeled: bool = False) -> int:
    """Number of tokens whose head (and, if ``labeled``, label) differs from gold."""
    if len(predicted) != len(gold):
        raise ValueError("predicted and gold trees differ in length")
    if labeled:
        return sum(1 for ph, pl, gh, gl in zip(predicted.heads, predicted.labels, gold.heads, gold.labels)
                   if ph != gh or pl != gl)
    return sum(1 for ph, gh in zip(predicted.heads, gold.heads) if ph != gh)


@dataclass
class Policy:
    model: TransitionModel
    beta: float = 1.0

    def parse(self, sentence: Sentence) -> DependencyTree:
        return greedy_parse(self.model, HYBRID, sentence)


@dataclass
class Trajectory:
    steps: List[Tuple[ParserConfiguration, Action]]
    tree: DependencyTree


class _Run:
    """Per-sentence helper binding sentence, gold tree and feature view."""

    def __init__(self, model: TransitionModel, sentence: Sentence, gold: DependencyTree, weights):
        self.model, self.sentence, self.gold, self.w = model, sentence, gold, weights
        self.view = sentence_view(sentence, model.cfg)
        self.labels = model.labels

    def learned(self, c):
        feats = self.model.features(c, self.sentence, self.view)
        scored = self.model.scored_actions(c, feats, self.w)
        return scored[int(np.argmax([s for _, s in scored]))][0]

    def reference(self, c):
        return reference_action(c, self.gold, self.labels)

    def act(self, c, beta, rng):
        if beta >= 1.0 or (beta > 0.0 and rng.random() < beta):
            return self.reference(c)
        return self.learned(c)

    def complete(self, c, rollout: str, beta_out: float, rng) -> DependencyTree:
        while not HYBRID.is_terminal(c):
            if rollout == "reference":
                a = self.reference(c)
            elif rollout == "learned":
                a = self.learned(c)
            else:
                a = self.act(c, beta_out, rng)
            c = HYBRID.apply(c, a)
        return config_tree(c, len(self.sentence))


def rollin(policy: Policy, sentence: Sentence, gold: DependencyTree, seed: int = 0,
           beta: Optional[float] = None, weights=None) -> Trajectory:
    """One roll-in trajectory; with probability ``beta`` each step follows the reference policy."""
    beta = policy.beta if beta is None else beta
    w = policy.model.model.weights if weights is None else weights
    run = _Run(policy.model, sentence, gold, w)
    rng = np.random.default_rng(seed)
    c = ParserConfiguration.initial(len(sentence))
    steps = []
    while not HYBRID.is_terminal(c):
        a = run.act(c, beta, rng)
        steps.append((c, a))
        c = HYBRID.apply(c, a)
    return Trajectory(steps, config_tree(c, len(sentence)))


def deviation_costs(prefix: ParserConfiguration, policy: Policy, sentence: Sentence, gold: DependencyTree,
                    rollout: str = "reference", beta_out: float = 0.5, labeled: bool = False,
                    seed: int = 0, weights=None) -> Dict[Action, int]:
    """Loss of the completed tree for every one-step deviation from ``prefix``.

    Arc actions that create a gold arc are expanded over the whole label
    inventory; any other arc action is represented by a single alternative
    carrying the policy's preferred label.
    """
    if HYBRID.is_terminal(prefix):
        raise ValueError("prefix is terminal")
    w = policy.model.model.weights if weights is None else weights
    run = _Run(policy.model, sentence, gold, w)
    feats = policy.model.features(prefix, sentence, run.view)
    costs: Dict[Action, int] = {}
    for j, kind in enumerate(HYBRID.legal_kinds(prefix)):
        if kind not in (LEFT, RIGHT):
            rng = np.random.default_rng([seed, j])
            tree = run.complete(HYBRID.apply(prefix, Action(kind)), rollout, beta_out, rng)
            costs[Action(kind)] = structured_loss(tree, gold, labeled)
            continue
        h, d = HYBRID.arc_of(prefix, kind)
        if gold.heads[d - 1] != h:
            a = Action(kind, policy.model.best_label(feats, kind, w))
            rng = np.random.default_rng([seed, j])
            costs[a] = structured_loss(run.complete(HYBRID.apply(prefix, a), rollout, beta_out, rng), gold, labeled)
            continue
        gold_label = gold.labels[d - 1]
        if rollout == "reference":
            # the reference roll-out never looks at labels, so one completion serves every label
            tree = run.complete(HYBRID.apply(prefix, Action(kind, gold_label)), rollout, beta_out, None)
            base = structured_loss(tree, gold, labeled)
            for lab in run.labels:
                costs[Action(kind, lab)] = base + (1 if labeled and lab != gold_label else 0)
        else:
            for i, lab in enumerate(run.labels):
                rng = np.random.default_rng([seed, j, i])
                a = Action(kind, lab)
                costs[a] = structured_loss(run.complete(HYBRID.apply(prefix, a), rollout, beta_out, rng),
                                           gold, labeled)
    return costs


@dataclass
class L2SConfig:
    passes: int = 10
    beta0: float = 1.0
    beta_decay: float = 0.5
    rollout: str = "reference"   # reference | learned | mix
    beta_out: float = 0.5
    labeled_loss: bool = False
    deviation_fraction: float = 1.0
    nonprojective: str = "projectivize"
    shuffle: bool = True
    seed: int = 0
    feature: FeatureConfig = field(default_factory=FeatureConfig)

    def beta(self, p: int) -> float:
        return self.beta0 * self.beta_decay ** p


def _cost_sensitive_update(model, rows: List[Tuple[np.ndarray, float]], costs: List[float]) -> bool:
    """One-against-best update: the best-scoring minimal-cost row is pushed above every
    costlier row by a margin equal to the cost difference."""
    cmin = min(costs)
    if max(costs) == cmin:
        return False
    w = model.weights
    scores = [float(w[idx].sum()) for idx, _ in rows]
    pos = max((i for i, c in enumerate(costs) if c == cmin), key=lambda i: scores[i])
    updated = False
    for i, c in enumerate(costs):
        delta = c - cmin
        if delta > 0 and scores[pos] - scores[i] < delta:
            model.update(rows[pos][0], delta)
            model.update(rows[i][0], -delta)
            updated = True
    return updated


def train_l2s(corpus: Corpus, passes: Optional[int] = None, config: Optional[L2SConfig] = None,
              on_epoch: Optional[Callable[[int, Policy], None]] = None) -> Policy:
    config = config or L2SConfig()
    passes = config.passes if passes is None else passes
    tm = TransitionModel(HYBRID, corpus.labels() or ["dep"], config.feature, parser="l2s")
    tm.model.header["l2s_schedule"] = {"beta0": config.beta0, "beta_decay": config.beta_decay,
                                       "passes": passes, "rollout": config.rollout}
    policy = Policy(tm, config.beta(0))
    model = tm.model
    data = training_trees(corpus, config.nonprojective)
    rng = np.random.default_rng(config.seed)
    for p in range(passes):
        policy.beta = config.beta(p)
        order = rng.permutation(len(data)) if config.shuffle else np.arange(len(data))
        n_updates = 0
        for j in order:
            k, gold = data[j]
            sent = corpus.sentences[k]
            seed = int(rng.integers(2 ** 31))
            traj = rollin(policy, sent, gold, seed=seed)
            view = sentence_view(sent, tm.cfg)
            for t, (c, _) in enumerate(traj.steps):
                if config.deviation_fraction < 1.0 and rng.random() >= config.deviation_fraction:
                    continue
                costs = deviation_costs(c, policy, sent, gold, config.rollout, config.beta_out,
                                        config.labeled_loss, seed=seed + t)
                feats = tm.features(c, sent, view)
                # kind level: the cheapest label of each kind stands for the kind
                kinds: Dict[str, float] = {}
                for a, v in costs.items():
                    kinds[a.kind] = min(v, kinds.get(a.kind, v))
                ks = sorted(kinds, key=lambda k: Action(k).sort_key())
                rows = [(tm.kind_indices(feats, k), 0) for k in ks]
                if _cost_sensitive_update(model, rows, [kinds[k] for k in ks]):
                    n_updates += 1
                # label level, only where the deviation creates a gold arc
                for kind in (LEFT, RIGHT):
                    labelled = [(a, v) for a, v in costs.items() if a.kind == kind]
                    if len(labelled) <= 1:
                        continue
                    h, d = HYBRID.arc_of(c, kind)
                    if gold.heads[d - 1] != h:
                        continue
                    lab_idx = tm.label_indices(feats, kind)
                    rows, lc = [], []
                    for a, v in labelled:
                        rows.append((lab_idx[tm._label_pos[a.label]], 0))
                        lc.append(v + (0 if a.label == gold.labels[d - 1] else 1) if not config.labeled_loss else v)
                    _cost_sensitive_update(model, rows, lc)
            model.tick()
        log.info("l2s pass %d (beta %.3f): %d updates", p + 1, policy.beta, n_updates)
        if on_epoch is not None:
            model.finalize()
            on_epoch(p + 1, policy)
            model.averaged_weights = None
    model.finalize()
    policy.beta = config.beta(passes)
    return policy
