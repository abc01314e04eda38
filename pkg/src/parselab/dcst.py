"""Deep contextualized self-training.

A base biaffine parser labels raw text; three sequence-tagging tasks derived
from the predicted trees train auxiliary BiLSTM taggers; their encoders are
then gated into a freshly initialised parser trained on the labelled data.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .neural import ops
from .neural.biaff import AuxChannel, BiaffConfig, BiaffModel, build_vocabs, fit, parse_corpus, train_biaff
from .neural.encoder import EncoderParams, Vocab, batch_ids, encoder_backward, encoder_forward
from .neural.optim import Adam
from .treebank import Corpus, DependencyTree, Sentence, corpus_checksum, erase_gold, root_distances, \
    write_conll_file

log = logging.getLogger(__name__)

TASKS = ("children", "rootdist", "relpos")
_ALIASES = {"children-count": "children", "root-distance": "rootdist", "relative-pos-head": "relpos"}
CHILDREN_CAP = 6
ROOTDIST_CAP = 9
ROOT_ATTACHED = "ROOT-ATTACHED"
UNK_TAG = "<UNK>"


def task_name(task: str) -> str:
    t = _ALIASES.get(task, task)
    if t not in TASKS:
        raise ValueError(f"unknown auxiliary task {task!r}")
    return t


def _capped(v: int, cap: int) -> str:
    return f"{cap}+" if v >= cap else str(v)


def extract_aux_tags(tree: DependencyTree, sentence: Sentence, task: str) -> List[str]:
    task = task_name(task)
    heads = list(tree.heads)
    if task == "children":
        kids = tree.children()
        return [_capped(len(kids[d]), CHILDREN_CAP) for d in range(1, len(heads) + 1)]
    if task == "rootdist":
        return [_capped(v, ROOTDIST_CAP) for v in root_distances(tree)]
    morphs = sentence.morphs
    tags = []
    for d, h in enumerate(heads, start=1):
        if h == 0:
            tags.append(ROOT_ATTACHED)
            continue
        p = morphs[h - 1]
        lo, hi = sorted((d, h))
        k = 1 + sum(1 for j in range(lo + 1, hi) if morphs[j - 1] == p)
        tags.append(f"{'L' if h < d else 'R'}{k}@{p}")
    return tags


def decode_relative_pos(tags: Sequence[str], sentence: Sentence) -> List[Optional[int]]:
    """Head per token from relative-position tags; None where the reference does not resolve."""
    morphs = sentence.morphs
    n = len(morphs)
    out: List[Optional[int]] = []
    for d, tag in enumerate(tags, start=1):
        if tag == ROOT_ATTACHED:
            out.append(0)
            continue
        head = None
        try:
            ref, p = tag.split("@", 1)
            step, k = (-1 if ref[0] == "L" else 1 if ref[0] == "R" else 0), int(ref[1:])
        except (ValueError, IndexError):
            step, k = 0, 0
        if step and k > 0:
            j, seen = d + step, 0
            while 1 <= j <= n:
                if morphs[j - 1] == p:
                    seen += 1
                    if seen == k:
                        head = j
                        break
                j += step
        out.append(head)
    return out


# -- auxiliary tagger ----------------------------------------------------------------

@dataclass
class TaggerConfig:
    max_epochs: int = 100
    patience: int = 5
    dev_fraction: float = 0.1
    batch_size: int = 10
    lr: float = 2e-3
    seed: int = 0


@dataclass
class AuxTagger:
    task: str
    params: EncoderParams
    words: Vocab
    morphs: Vocab
    tags: List[str]
    W: np.ndarray
    b: np.ndarray

    def tag_index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            return self.tags.index(UNK_TAG)

    def _logits(self, sentences):
        W, M, lengths = batch_ids(sentences, self.words, self.morphs)
        H, cache = encoder_forward(self.params, W, M, lengths)
        b_idx = np.concatenate([np.full(n, b) for b, n in enumerate(lengths)]).astype(np.int64)
        d_idx = np.concatenate([np.arange(1, n + 1) for n in lengths]).astype(np.int64)
        Z, lc = ops.linear_forward(H[b_idx, d_idx], self.W, self.b)
        return Z, (H, cache, b_idx, d_idx, lc)

    def loss_and_grads(self, sentences, targets: np.ndarray, need_grads: bool = True):
        Z, (H, cache, b_idx, d_idx, lc) = self._logits(sentences)
        loss, xc = ops.softmax_xent_forward(Z, targets)
        if not need_grads:
            return loss, None
        g = ops.linear_backward(ops.softmax_xent_backward(1.0, xc), lc)
        dH = np.zeros_like(H)
        dH[b_idx, d_idx] = g["X"]
        grads = {f"enc.{k}": v for k, v in encoder_backward(self.params, dH, cache).items()}
        grads["out.W"], grads["out.b"] = g["W"], g["b"]
        return loss, grads

    def parameters(self) -> Dict[str, np.ndarray]:
        p = {f"enc.{k}": v for k, v in self.params.tensors.items()}
        p["out.W"], p["out.b"] = self.W, self.b
        return p

    def predict(self, sentences: Sequence[Sentence]) -> List[List[str]]:
        sentences = [s for s in sentences]
        if not sentences:
            return []
        Z, _ = self._logits(sentences)
        best = np.argmax(Z, axis=1)
        out, k = [], 0
        for s in sentences:
            out.append([self.tags[i] for i in best[k:k + len(s)]])
            k += len(s)
        return out

    def accuracy(self, corpus: Corpus) -> float:
        pred = self.predict(corpus.sentences)
        gold = [extract_aux_tags(s.gold_tree(), s, self.task) for s in corpus.sentences]
        total = sum(len(g) for g in gold)
        return sum(p == g for ps, gs in zip(pred, gold) for p, g in zip(ps, gs)) / max(total, 1)


def _targets(tagger: AuxTagger, sentences) -> np.ndarray:
    return np.array([tagger.tag_index(t) for s in sentences for t in extract_aux_tags(s.gold_tree(), s, tagger.task)],
                    dtype=np.int64)


def train_aux_tagger(corpus: Corpus, task: str, encoder: Optional[BiaffConfig] = None,
                     config: Optional[TaggerConfig] = None, dev: Optional[Corpus] = None) -> AuxTagger:
    """BiLSTM tagger for one auxiliary task, stopped by dev-loss patience.

    Tag inventory and vocabularies come from ``corpus`` only.  Without an
    explicit ``dev`` set a ``dev_fraction`` tail of ``corpus`` is held out;
    when that would leave too little data the training loss drives patience.
    """
    task = task_name(task)
    enc_cfg = encoder or BiaffConfig()
    config = config or TaggerConfig()
    sents = [s for s in corpus.sentences if len(s) > 0]
    if dev is None and config.dev_fraction > 0 and len(sents) >= 20:
        cut = len(sents) - max(1, int(round(len(sents) * config.dev_fraction)))
        sents, dev_sents = sents[:cut], sents[cut:]
    else:
        dev_sents = [s for s in dev.sentences if len(s) > 0] if dev is not None else []
    train = Corpus(sents)
    words, morphs = build_vocabs(train)
    tags = sorted({t for s in sents for t in extract_aux_tags(s.gold_tree(), s, task)}) + [UNK_TAG]
    rng = np.random.default_rng(config.seed)
    dt = np.dtype(enc_cfg.dtype)
    params = EncoderParams.init(len(words), len(morphs), enc_cfg.word_dim, enc_cfg.morph_dim, enc_cfg.hidden,
                                enc_cfg.layers, rng=rng, dtype=dt)
    D = params.out_dim
    tagger = AuxTagger(task, params, words, morphs, tags,
                       rng.normal(0.0, np.sqrt(1.0 / D), (D, len(tags))).astype(dt), np.zeros(len(tags), dtype=dt))
    targets = [_targets(tagger, [s]) for s in sents]
    dev_targets = _targets(tagger, dev_sents) if dev_sents else None
    opt = Adam(config.lr, 0.9, 0.9)
    best, best_params, waited = np.inf, None, 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(sents))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = [sents[i] for i in idx]
            loss, grads = tagger.loss_and_grads(batch, np.concatenate([targets[i] for i in idx]))
            opt.step(tagger.parameters(), grads)
            total += loss * len(batch)
        if dev_sents:
            crit = tagger.loss_and_grads(dev_sents, dev_targets, need_grads=False)[0]
        else:
            crit = total / len(sents)
        log.info("aux %s epoch %d criterion %.5f", task, epoch, crit)
        if crit < best - 1e-6:
            best, waited = crit, 0
            best_params = {k: v.copy() for k, v in tagger.parameters().items()}
        else:
            waited += 1
            if waited >= config.patience:
                break
    if best_params is not None:
        for k, v in tagger.parameters().items():
            v[...] = best_params[k]
    return tagger


# -- pipeline ------------------------------------------------------------------------

@dataclass
class DCSTConfig:
    biaff: BiaffConfig = field(default_factory=BiaffConfig)
    tagger: TaggerConfig = field(default_factory=TaggerConfig)
    tasks: Sequence[str] = TASKS
    freeze_aux: bool = True
    fusion: str = "mean"   # mean | per-task
    autolabeled_path: Optional[str] = None


@dataclass
class SelfTrainResult:
    model: BiaffModel
    base: BiaffModel
    autolabeled: Corpus
    taggers: Dict[str, AuxTagger]


def self_train(labeled: Corpus, unlabeled: Corpus, config: Optional[DCSTConfig] = None) -> SelfTrainResult:
    config = config or DCSTConfig()
    tasks = [task_name(t) for t in config.tasks]
    raw = erase_gold(unlabeled)
    blank = corpus_checksum(raw)
    assert blank == corpus_checksum(erase_gold(raw)), "unlabeled gold survived erasure"
    base = train_biaff(labeled, config.biaff)
    if not raw.sentences or not tasks:
        if not raw.sentences:
            warnings.warn("empty unlabeled corpus: self-training reduces to a plain biaffine parser")
        return SelfTrainResult(base, base, Corpus([]), {})
    trees = parse_corpus(base, raw)
    auto = Corpus([s.with_tree(t) for s, t in zip(raw.sentences, trees)])
    if config.autolabeled_path:
        write_conll_file(auto, config.autolabeled_path)
    taggers = {}
    for task in tasks:
        taggers[task] = train_aux_tagger(auto, task, config.biaff, config.tagger)
        log.info("aux %s tagger trained (%d tags)", task, len(taggers[task].tags))
    channels = [AuxChannel(t, tg.params.copy(), tg.words, tg.morphs, config.freeze_aux) for t, tg in taggers.items()]
    words, morphs = build_vocabs(labeled)
    final = BiaffModel.init(replace(config.biaff, seed=config.biaff.seed + 1), words, morphs,
                            labeled.labels() or ["dep"], channels, config.fusion)
    fit(final, labeled, final.config)
    assert corpus_checksum(raw) == blank, "unlabeled gold columns were written during self-training"
    return SelfTrainResult(final, base, auto, taggers)
