"""Word + morph embeddings followed by a stacked BiLSTM.

Position 0 of the output is the root: a learned state vector, not an
LSTM output, so the recurrent layers only ever see real tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import ops

PAD, UNK = 0, 1


class Vocab:
    def __init__(self, symbols: Sequence[str] = ()):
        self.itos = ["<PAD>", "<UNK>"] + sorted(set(symbols))
        self.stoi = {s: i for i, s in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def index(self, s: str) -> int:
        return self.stoi.get(s, UNK)

    def to_list(self) -> List[str]:
        return self.itos[2:]


@dataclass
class EncoderParams:
    word_dim: int
    morph_dim: int
    hidden: int
    layers: int
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    @classmethod
    def init(cls, n_words, n_morphs, word_dim=100, morph_dim=25, hidden=100, layers=2,
             rng=None, dtype=np.float64) -> "EncoderParams":
        rng = rng or np.random.default_rng(0)
        p = cls(word_dim, morph_dim, hidden, layers)
        t = p.tensors
        t["word_emb"] = rng.normal(0.0, 0.1, (n_words, word_dim)).astype(dtype)
        t["morph_emb"] = rng.normal(0.0, 0.1, (n_morphs, morph_dim)).astype(dtype)
        t["word_emb"][PAD] = 0.0
        t["morph_emb"][PAD] = 0.0
        in_dim = word_dim + morph_dim
        k = 1.0 / np.sqrt(hidden)
        for l in range(layers):
            for d in ("fw", "bw"):
                t[f"l{l}.{d}.Wx"] = rng.uniform(-k, k, (in_dim, 4 * hidden)).astype(dtype)
                t[f"l{l}.{d}.Wh"] = rng.uniform(-k, k, (hidden, 4 * hidden)).astype(dtype)
                t[f"l{l}.{d}.b"] = np.zeros(4 * hidden, dtype=dtype)
            in_dim = 2 * hidden
        t["root"] = rng.normal(0.0, 0.1, 2 * hidden).astype(dtype)
        return p

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.word_dim, self.morph_dim, self.hidden, self.layers,
                             {k: v.copy() for k, v in self.tensors.items()})

    def spec(self) -> dict:
        return {"word_dim": self.word_dim, "morph_dim": self.morph_dim, "hidden": self.hidden,
                "layers": self.layers}


def encoder_forward(p: EncoderParams, words: np.ndarray, morphs: np.ndarray, lengths: Sequence[int]):
    """(B, T) id matrices of real tokens -> (B, T + 1, 2H) states with the root at 0."""
    t = p.tensors
    ew, cw = ops.embedding_forward(t["word_emb"], words)
    em, cm = ops.embedding_forward(t["morph_emb"], morphs)
    X = np.concatenate([ew, em], axis=2)
    caches = []
    for l in range(p.layers):
        X, c = ops.bilstm_forward(X, lengths, (t[f"l{l}.fw.Wx"], t[f"l{l}.fw.Wh"], t[f"l{l}.fw.b"]),
                                  (t[f"l{l}.bw.Wx"], t[f"l{l}.bw.Wh"], t[f"l{l}.bw.b"]))
        caches.append(c)
    B = X.shape[0]
    root = np.broadcast_to(t["root"], (B, 1, X.shape[2]))
    out = np.concatenate([root, X], axis=1)
    return out, (cw, cm, caches, p.word_dim)


def encoder_backward(p: EncoderParams, dout: np.ndarray, cache) -> Dict[str, np.ndarray]:
    cw, cm, caches, wd = cache
    g: Dict[str, np.ndarray] = {"root": dout[:, 0].sum(axis=0)}
    dX = dout[:, 1:]
    for l in range(p.layers - 1, -1, -1):
        dX, fw, bw = ops.bilstm_backward(dX, caches[l])
        g[f"l{l}.fw.Wx"], g[f"l{l}.fw.Wh"], g[f"l{l}.fw.b"] = fw
        g[f"l{l}.bw.Wx"], g[f"l{l}.bw.Wh"], g[f"l{l}.bw.b"] = bw
    g["word_emb"] = ops.embedding_backward(np.ascontiguousarray(dX[..., :wd]), cw)
    g["morph_emb"] = ops.embedding_backward(np.ascontiguousarray(dX[..., wd:]), cm)
    return g


def batch_ids(sentences, words: Vocab, morphs: Vocab) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    lengths = [len(s) for s in sentences]
    T = max(lengths) if lengths else 0
    W = np.zeros((len(sentences), T), dtype=np.int64)
    M = np.zeros((len(sentences), T), dtype=np.int64)
    for r, s in enumerate(sentences):
        for i, tok in enumerate(s.tokens):
            W[r, i] = words.index(tok.form)
            M[r, i] = morphs.index(tok.morph)
    return W, M, lengths


def encode(sentence, params: EncoderParams, words: Vocab, morphs: Vocab) -> np.ndarray:
    """Per-token states (n + 1, 2H) of a single sentence; OOV forms map to UNK."""
    W, M, lengths = batch_ids([sentence], words, morphs)
    return encoder_forward(params, W, M, lengths)[0][0]
