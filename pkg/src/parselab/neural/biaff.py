"""Biaffine graph parser on top of the BiLSTM encoder.

An optional set of auxiliary encoders (trained elsewhere, e.g. by the
self-training pipeline) can be fused with the base encoder through a gate.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..graph_parser import cle_decode
from ..treebank import Corpus, DependencyTree, Sentence
from . import ops
from .encoder import UNK, EncoderParams, Vocab, batch_ids, encoder_backward, encoder_forward
from .optim import Adam

log = logging.getLogger(__name__)

MAGIC = b"PLNN"
VERSION = 1
ROLES = ("head_arc", "dep_arc", "head_label", "dep_label")


class TrainingDivergence(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class BiaffConfig:
    epochs: int = 200
    batch_size: int = 10
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.9
    clip: float = 5.0
    word_dim: int = 100
    morph_dim: int = 25
    hidden: int = 100
    layers: int = 2
    d_arc: int = 100
    d_label: int = 50
    unk_p: float = 0.25
    seed: int = 0
    dtype: str = "float64"
    shuffle: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "BiaffConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown biaff settings: {sorted(bad)}")
        return cls(**d)


@dataclass
class AuxChannel:
    """A pre-trained encoder whose states feed the gate."""
    name: str
    params: EncoderParams
    words: Vocab
    morphs: Vocab
    frozen: bool = True


@dataclass
class BiaffModel:
    config: BiaffConfig
    words: Vocab
    morphs: Vocab
    labels: List[str]
    encoder: EncoderParams
    heads: Dict[str, np.ndarray] = field(default_factory=dict)
    aux: List[AuxChannel] = field(default_factory=list)
    fusion: str = "mean"   # mean | per-task

    @classmethod
    def init(cls, config: BiaffConfig, words: Vocab, morphs: Vocab, labels: Sequence[str],
             aux: Sequence[AuxChannel] = (), fusion: str = "mean") -> "BiaffModel":
        rng = np.random.default_rng(config.seed)
        dt = np.dtype(config.dtype)
        enc = EncoderParams.init(len(words), len(morphs), config.word_dim, config.morph_dim, config.hidden,
                                 config.layers, rng=rng, dtype=dt)
        D = enc.out_dim
        h: Dict[str, np.ndarray] = {}
        for role in ROLES:
            d = config.d_arc if role.endswith("arc") else config.d_label
            h[f"{role}.W"] = rng.normal(0.0, np.sqrt(2.0 / D), (D, d)).astype(dt)
            h[f"{role}.b"] = np.zeros(d, dtype=dt)
        da, dl, L = config.d_arc, config.d_label, max(len(labels), 1)
        # zero bilinear and head-side terms keep the initial head softmax uniform
        h["arc.U"] = np.zeros((da, da), dtype=dt)
        h["arc.u_head"] = np.zeros(da, dtype=dt)
        h["arc.u_dep"] = rng.normal(0.0, 0.01, da).astype(dt)
        h["arc.bias"] = np.zeros((), dtype=dt)
        h["label.U"] = np.zeros((L, dl, dl), dtype=dt)
        h["label.W_head"] = rng.normal(0.0, 0.01, (dl, L)).astype(dt)
        h["label.W_dep"] = rng.normal(0.0, 0.01, (dl, L)).astype(dt)
        h["label.b"] = np.zeros(L, dtype=dt)
        for a in aux:
            if a.params.out_dim != D:
                raise ValueError(f"aux encoder {a.name!r} has width {a.params.out_dim}, expected {D}")
        n_gates = len(aux) if fusion == "per-task" else (1 if aux else 0)
        for k in range(n_gates):
            h[f"gate{k}.Wg"] = rng.normal(0.0, 0.01, (2 * D, D)).astype(dt)
            h[f"gate{k}.bg"] = np.zeros(D, dtype=dt)
        return cls(config, words, morphs, list(labels), enc, h, list(aux), fusion)

    def parameters(self, trainable_only: bool = False) -> Dict[str, np.ndarray]:
        p = {f"enc.{k}": v for k, v in self.encoder.tensors.items()}
        p.update(self.heads)
        for i, a in enumerate(self.aux):
            if trainable_only and a.frozen:
                continue
            p.update({f"aux{i}.{k}": v for k, v in a.params.tensors.items()})
        return p

    def copy(self) -> "BiaffModel":
        return BiaffModel(self.config, self.words, self.morphs, list(self.labels), self.encoder.copy(),
                          {k: v.copy() for k, v in self.heads.items()},
                          [AuxChannel(a.name, a.params.copy(), a.words, a.morphs, a.frozen) for a in self.aux],
                          self.fusion)

    # -- forward / backward ---------------------------------------------------

    def _states(self, sentences, W, M, lengths):
        H, cache = encoder_forward(self.encoder, W, M, lengths)
        if not self.aux:
            return H, (cache, None)
        aux_out = []
        for a in self.aux:
            if a.words is self.words and a.morphs is self.morphs:
                Wa, Ma = W, M
            else:
                Wa, Ma, _ = batch_ids(sentences, a.words, a.morphs)
            aux_out.append(encoder_forward(a.params, Wa, Ma, lengths))
        if self.fusion == "per-task":
            outs, gcs = [], []
            for k, (Ha, _) in enumerate(aux_out):
                o, gc = ops.gate_fuse_forward(H, Ha, self.heads[f"gate{k}.Wg"], self.heads[f"gate{k}.bg"])
                outs.append(o)
                gcs.append(gc)
            X = sum(outs) / len(outs)
        else:
            Ha = sum(o for o, _ in aux_out) / len(aux_out)
            X, gc = ops.gate_fuse_forward(H, Ha, self.heads["gate0.Wg"], self.heads["gate0.bg"])
            gcs = [gc]
        return X, (cache, (aux_out, gcs))

    def _states_backward(self, dX, cache, grads):
        enc_cache, fuse = cache
        if fuse is None:
            dH = dX
        else:
            aux_out, gcs = fuse
            K = len(aux_out)
            if self.fusion == "per-task":
                dH = np.zeros_like(dX)
                dHa = []
                for k, gc in enumerate(gcs):
                    g = ops.gate_fuse_backward(dX / K, gc)
                    dH += g["hb"]
                    dHa.append(g["ha"])
                    grads[f"gate{k}.Wg"], grads[f"gate{k}.bg"] = g["Wg"], g["bg"]
            else:
                g = ops.gate_fuse_backward(dX, gcs[0])
                dH = g["hb"]
                dHa = [g["ha"] / K] * K
                grads["gate0.Wg"], grads["gate0.bg"] = g["Wg"], g["bg"]
            for i, a in enumerate(self.aux):
                if not a.frozen:
                    for k, v in encoder_backward(a.params, dHa[i], aux_out[i][1]).items():
                        grads[f"aux{i}.{k}"] = v
        for k, v in encoder_backward(self.encoder, dH, enc_cache).items():
            grads[f"enc.{k}"] = v

    def scores(self, sentences, W=None, M=None, lengths=None):
        """Arc scores (B, T+1, T+1) indexed [h, d] and a cache for backward."""
        if W is None:
            W, M, lengths = batch_ids(sentences, self.words, self.morphs)
        X, scache = self._states(sentences, W, M, lengths)
        reps, rcaches = {}, {}
        for role in ROLES:
            reps[role], rcaches[role] = ops.linear_relu_forward(X, self.heads[f"{role}.W"], self.heads[f"{role}.b"])
        h = self.heads
        S, acache = ops.biaffine_arc_forward(reps["head_arc"], reps["dep_arc"], h["arc.U"], h["arc.u_head"],
                                             h["arc.u_dep"], h["arc.bias"])
        return S, reps, (X, scache, rcaches, acache)

    def label_scores(self, reps, b_idx, h_idx, d_idx):
        h = self.heads
        return ops.biaffine_label_forward(reps["head_label"][b_idx, h_idx], reps["dep_label"][b_idx, d_idx],
                                          h["label.U"], h["label.W_head"], h["label.W_dep"], h["label.b"])

    def loss_and_grads(self, sentences: Sequence[Sentence], W=None, M=None, lengths=None,
                       need_grads: bool = True):
        """Mean head cross-entropy plus mean gold-arc label cross-entropy over the batch."""
        if W is None:
            W, M, lengths = batch_ids(sentences, self.words, self.morphs)
        S, reps, (X, scache, rcaches, acache) = self.scores(sentences, W, M, lengths)
        T1 = S.shape[1]
        b_idx = np.concatenate([np.full(n, b) for b, n in enumerate(lengths)]).astype(np.int64)
        d_idx = np.concatenate([np.arange(1, n + 1) for n in lengths]).astype(np.int64)
        heads = np.array([t.head for s in sentences for t in s.tokens], dtype=np.int64)
        lab_pos = {l: i for i, l in enumerate(self.labels)}
        labs = np.array([lab_pos.get(t.label, 0) for s in sentences for t in s.tokens], dtype=np.int64)
        logits = S[b_idx, :, d_idx]
        mask = np.arange(T1)[None, :] <= np.asarray(lengths)[b_idx][:, None]
        arc_loss, xc = ops.softmax_xent_forward(logits, heads, mask)
        LS, lcache = self.label_scores(reps, b_idx, heads, d_idx)
        lab_loss, lxc = ops.softmax_xent_forward(LS, labs)
        loss = arc_loss + lab_loss
        if not need_grads:
            return loss, None
        grads: Dict[str, np.ndarray] = {}
        dS = np.zeros_like(S)
        dS[b_idx, :, d_idx] = ops.softmax_xent_backward(1.0, xc)
        ga = ops.biaffine_arc_backward(dS, acache)
        for k in ("U", "u_head", "u_dep", "bias"):
            grads[f"arc.{k}"] = ga[k]
        gl = ops.biaffine_label_backward(ops.softmax_xent_backward(1.0, lxc), lcache)
        for k in ("U", "W_head", "W_dep", "b"):
            grads[f"label.{k}"] = gl[k]
        drep = {"head_arc": ga["Hh"], "dep_arc": ga["Hd"],
                "head_label": np.zeros_like(reps["head_label"]), "dep_label": np.zeros_like(reps["dep_label"])}
        np.add.at(drep["head_label"], (b_idx, heads), gl["hh"])
        drep["dep_label"][b_idx, d_idx] = gl["hd"]
        dX = np.zeros_like(X)
        for role in ROLES:
            g = ops.linear_relu_backward(drep[role], rcaches[role])
            dX += g["X"]
            grads[f"{role}.W"], grads[f"{role}.b"] = g["W"], g["b"]
        self._states_backward(dX, scache, grads)
        return loss, grads

    # -- inference ------------------------------------------------------------

    def parse_batch(self, sentences: Sequence[Sentence]) -> List[DependencyTree]:
        out: List[Optional[DependencyTree]] = [None] * len(sentences)
        idx = [i for i, s in enumerate(sentences) if len(s) > 0]
        for i in range(len(sentences)):
            if len(sentences[i]) == 0:
                out[i] = DependencyTree([])
        if not idx:
            return out
        batch = [sentences[i] for i in idx]
        S, reps, _ = self.scores(batch)
        for r, (i, s) in enumerate(zip(idx, batch)):
            n = len(s)
            logp = _log_softmax_cols(S[r, :n + 1, :n + 1])
            heads = cle_decode(logp).heads
            lab = self.label_scores(reps, np.full(n, r), np.array(heads), np.arange(1, n + 1))[0]
            labels = [self.labels[j] for j in np.argmax(lab, axis=1)] if self.labels else ["dep"] * n
            out[i] = DependencyTree(list(heads), labels)
        return out

    def parse(self, sentence: Sentence) -> DependencyTree:
        return self.parse_batch([sentence])[0]

    # -- serialization --------------------------------------------------------

    def to_bytes(self) -> bytes:
        params = self.parameters()
        keys = sorted(params)
        header = {
            "parser": "biaff", "config": asdict(self.config), "words": self.words.to_list(),
            "morphs": self.morphs.to_list(), "labels": self.labels, "encoder": self.encoder.spec(),
            "fusion": self.fusion,
            "aux": [{"name": a.name, "encoder": a.params.spec(), "words": a.words.to_list(),
                     "morphs": a.morphs.to_list(), "frozen": a.frozen} for a in self.aux],
            "shapes": [[k, list(params[k].shape)] for k in keys],
        }
        hb = json.dumps(header, sort_keys=True).encode("utf-8")
        body = b"".join(np.ascontiguousarray(params[k], dtype="<f8").tobytes() for k in keys)
        return MAGIC + struct.pack("<II", VERSION, len(hb)) + hb + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "BiaffModel":
        if data[:4] != MAGIC:
            raise ModelFormatError("not a neural model file")
        version, hlen = struct.unpack("<II", data[4:12])
        if version != VERSION:
            raise ModelFormatError(f"unsupported neural model version {version}")
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
        config = BiaffConfig.from_dict(header["config"])
        dt = np.dtype(config.dtype)
        off = 12 + hlen
        arrays = {}
        for k, shape in header["shapes"]:
            size = int(np.prod(shape)) * 8
            if off + size > len(data):
                raise ModelFormatError("truncated neural model file")
            arrays[k] = np.frombuffer(data[off:off + size], dtype="<f8").reshape(shape).astype(dt)
            off += size
        if off != len(data):
            raise ModelFormatError("trailing bytes in neural model file")
        words, morphs = Vocab(header["words"]), Vocab(header["morphs"])
        enc = EncoderParams(**header["encoder"], tensors={k[4:]: v for k, v in arrays.items()
                                                         if k.startswith("enc.")})
        aux = []
        for i, a in enumerate(header["aux"]):
            p = EncoderParams(**a["encoder"], tensors={k[len(f"aux{i}."):]: v for k, v in arrays.items()
                                                       if k.startswith(f"aux{i}.")})
            aux.append(AuxChannel(a["name"], p, Vocab(a["words"]), Vocab(a["morphs"]), a["frozen"]))
        heads = {k: v for k, v in arrays.items() if not k.startswith(("enc.", "aux"))}
        return cls(config, words, morphs, header["labels"], enc, heads, aux, header["fusion"])


def _log_softmax_cols(S: np.ndarray) -> np.ndarray:
    m = S.max(axis=0, keepdims=True)
    return S - m - np.log(np.exp(S - m).sum(axis=0, keepdims=True))


def build_vocabs(corpus: Corpus):
    words = Vocab(t.form for s in corpus.sentences for t in s.tokens)
    morphs = Vocab(t.morph for s in corpus.sentences for t in s.tokens)
    return words, morphs


def singletons(corpus: Corpus, words: Vocab) -> np.ndarray:
    counts = np.zeros(len(words), dtype=np.int64)
    for s in corpus.sentences:
        for t in s.tokens:
            counts[words.index(t.form)] += 1
    return counts == 1


def unk_replace(W: np.ndarray, single: np.ndarray, p: float, rng) -> np.ndarray:
    """Swap frequency-1 word ids for UNK with probability ``p``."""
    if p <= 0:
        return W
    hit = single[W] & (rng.random(W.shape) < p)
    return np.where(hit, UNK, W)


def fit(model: BiaffModel, corpus: Corpus, config: BiaffConfig,
        on_epoch: Optional[Callable[[int, float, BiaffModel], Optional[bool]]] = None) -> BiaffModel:
    """Minibatch Adam on ``corpus``; ``on_epoch`` may return True to stop early."""
    sents = [s for s in corpus.sentences if len(s) > 0]
    if not sents:
        raise ValueError("training corpus has no sentences")
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(config.lr, config.beta1, config.beta2, clip=config.clip)
    single = singletons(Corpus(sents), model.words)
    frozen = {f"aux{i}.{k}" for i, a in enumerate(model.aux) if a.frozen for k in a.params.tensors}
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(sents)) if config.shuffle else np.arange(len(sents))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [sents[i] for i in order[start:start + config.batch_size]]
            W, M, lengths = batch_ids(batch, model.words, model.morphs)
            W = unk_replace(W, single, config.unk_p, rng)
            loss, grads = model.loss_and_grads(batch, W, M, lengths)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergence(f"non-finite loss/gradient at epoch {epoch}, batch starting {start}"
                                         f" (loss={loss}); try a lower learning rate")
            opt.step(model.parameters(), grads, frozen)
            total += loss * len(batch)
            count += len(batch)
        mean = total / count
        log.info("biaff epoch %d loss %.5f", epoch, mean)
        if on_epoch is not None and on_epoch(epoch, mean, model):
            break
    return model


def train_biaff(corpus: Corpus, hyperparams: Optional[BiaffConfig] = None,
                on_epoch: Optional[Callable[[int, float, BiaffModel], Optional[bool]]] = None,
                aux: Sequence[AuxChannel] = (), fusion: str = "mean") -> BiaffModel:
    config = hyperparams or BiaffConfig()
    words, morphs = build_vocabs(corpus)
    model = BiaffModel.init(config, words, morphs, corpus.labels() or ["dep"], aux, fusion)
    return fit(model, corpus, config, on_epoch)


def parse_biaff(model: BiaffModel, sentence: Sentence) -> DependencyTree:
    return model.parse(sentence)


def parse_corpus(model: BiaffModel, corpus: Corpus, batch_size: int = 32) -> List[DependencyTree]:
    out: List[DependencyTree] = []
    for i in range(0, len(corpus.sentences), batch_size):
        out.extend(model.parse_batch(corpus.sentences[i:i + batch_size]))
    return out


# -- functional views of the scoring layers --------------------------------------

def specialize(states: np.ndarray, model: BiaffModel, which: str) -> np.ndarray:
    """ReLU projection of encoder states for one of the four roles."""
    if which.replace("-", "_") not in ROLES:
        raise ValueError(f"unknown role {which!r}; expected one of {ROLES}")
    role = which.replace("-", "_")
    return ops.linear_relu_forward(states, model.heads[f"{role}.W"], model.heads[f"{role}.b"])[0]


def score_all_arcs(head_reps: np.ndarray, dep_reps: np.ndarray, U, u_head, u_dep, bias) -> np.ndarray:
    """(n+1, n+1) matrix with entry [h, d] = h_head U h_dep + u_head.h_head + u_dep.h_dep + bias."""
    return ops.biaffine_arc_forward(head_reps, dep_reps, U, u_head, u_dep, bias)[0]


def score_labels(head_reps: np.ndarray, dep_reps: np.ndarray, heads: Sequence[int], U, W_head, W_dep, b):
    """(n, L) label scores for the arcs heads[d-1] -> d."""
    n = len(heads)
    return ops.biaffine_label_forward(head_reps[np.asarray(heads, dtype=np.int64)], dep_reps[1:n + 1],
                                      U, W_head, W_dep, b)[0]
