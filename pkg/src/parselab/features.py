"""Hashed sparse features for the linear parsers.

Template inventory
------------------

Edge templates (graph parser), every key also carries the arc direction:

====  =====================================================
E01   head form
E02   head morph
E03   dependent form
E04   dependent morph
E05   head form + head morph
E06   dependent form + dependent morph
E07   head form + dependent form
E08   head morph + dependent morph
E09   head form + dependent morph
E10   head morph + dependent form
E11   head morph + dependent morph + distance       (position)
E12   head morph, head+1 morph, dep-1 morph, dep morph
E13   head-1 morph, head morph, dep-1 morph, dep morph
E14   head morph, head+1 morph, dep morph, dep+1 morph
E15   head-1 morph, head morph, dep morph, dep+1 morph
E16   head morph + between morph + dep morph        (one key per in-between token)
E17   direction + distance                          (position)
E18   head form + dependent form + distance         (position)
====  =====================================================

Label templates (conjoined with the candidate label): L1 dep morph, L2 head
morph + dep morph, L3 dep form, L4 head form + dep morph, L5 dep morph +
direction, L6 dep morph + distance (position).

Configuration templates (transition parsers) over the stack slots S0..S2 and
buffer slots B0..B2:

- C01-C18  form, morph and form+morph of each of the six slots
- C19-C26  S0/B0 pairs: ww, pp, wp, pw, S0p+S1p, B0p+B1p, S0wp+B0p, S0p+B0wp
- C27-C30  S0p+B0p+B1p, S1p+S0p+B0p, S2p+S1p+S0p, B0p+B1p+B2p
- C31-C33  S0-B0 distance, + S0 form, + S0p+B0p               (position)
- C34-C37  S0 left/right valency + S0 form, + S0 morph; B0 left valency + B0 morph
- C38-C40  label set of S0 + S0 morph; label set of B0 + B0 morph; leftmost and
  rightmost child labels of S0
- C41-C43  (free word order) label set of S0 + S0 form, label set of B0 + B0
  form, S0 incoming label + S0 morph

Configuration label templates (used for the label part of arc actions):
CL1 S0 morph + B0 morph, CL2 S0 form + B0 morph, CL3 S0 morph + B0 form,
CL4 S1 morph + S0 morph, CL5 S0 label set + B0 morph.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

NULL = "<NULL>"
ROOT = "<ROOT>"
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class FeatureConfig:
    hash_bits: int = 22
    use_morph: bool = True
    free_word_order: bool = True
    position_templates: bool = True

    @property
    def size(self) -> int:
        return 1 << self.hash_bits

    @property
    def mask(self) -> int:
        return self.size - 1


_hash_cache: Dict[str, int] = {}


def hash64(text: str) -> int:
    """Stable 64-bit hash of a string (BLAKE2b with an 8-byte digest)."""
    h = _hash_cache.get(text)
    if h is None:
        h = int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")
        if len(_hash_cache) < 4_000_000:
            _hash_cache[text] = h
    return h


def hash_index(template: str, key: str, hash_bits: int = 22) -> int:
    return hash64(f"{template}\x1f{key}") & ((1 << hash_bits) - 1)


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser, elementwise over uint64 arrays."""
    z = np.asarray(x, dtype=np.uint64).copy()
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= np.uint64(0xBF58476D1CE4E5B9)
        z ^= z >> np.uint64(27)
        z *= np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
    return z


def conjoin(base: np.ndarray, salts: np.ndarray, mask: int) -> np.ndarray:
    """Indices of ``base`` features conjoined with each salt: shape (len(salts), len(base))."""
    base = np.asarray(base, dtype=np.uint64)
    salts = np.asarray(salts, dtype=np.uint64)
    return (mix64(base[None, :] ^ salts[:, None]) & np.uint64(mask)).astype(np.int64)


class SparseFeatureVector:
    """Sorted unique indices with summed values."""

    __slots__ = ("indices", "values")

    def __init__(self, indices, values=None):
        idx = np.asarray(indices, dtype=np.int64)
        vals = np.ones(len(idx)) if values is None else np.asarray(values, dtype=np.float64)
        uniq, inv = np.unique(idx, return_inverse=True)
        self.indices = uniq
        self.values = np.bincount(inv.ravel(), weights=vals, minlength=len(uniq)) if len(idx) else np.zeros(0)

    def __len__(self):
        return len(self.indices)

    def __eq__(self, other):
        return (isinstance(other, SparseFeatureVector)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"SparseFeatureVector({len(self)} entries)"

    def dot(self, weights: np.ndarray) -> float:
        return float(weights[self.indices] @ self.values)

    def __add__(self, other):
        return SparseFeatureVector(np.concatenate([self.indices, other.indices]),
                                   np.concatenate([self.values, other.values]))

    def __sub__(self, other):
        return SparseFeatureVector(np.concatenate([self.indices, other.indices]),
                                   np.concatenate([self.values, -other.values]))


def _distance_key(d: int, cfg: FeatureConfig) -> str:
    if cfg.free_word_order:
        return str(d) if d < 5 else "5+"
    return str(d)


class _View:
    """Form/morph lookup over positions 0..n with NULL outside and ROOT at 0."""

    def __init__(self, sentence, cfg: FeatureConfig):
        self.forms = [ROOT] + [t.form for t in sentence.tokens]
        if cfg.use_morph:
            self.morphs = [ROOT] + [t.morph for t in sentence.tokens]
        else:
            self.morphs = [ROOT] + ["_"] * len(sentence.tokens)
        self.n = len(sentence.tokens)

    def w(self, i):
        return self.forms[i] if i is not None and 0 <= i <= self.n else NULL

    def p(self, i):
        return self.morphs[i] if i is not None and 0 <= i <= self.n else NULL


# ---------------------------------------------------------------------------
# Edge features

def _edge_keys(v: _View, h: int, d: int, cfg: FeatureConfig) -> List[str]:
    hw, hp, dw, dp = v.w(h), v.p(h), v.w(d), v.p(d)
    direction = "R" if h < d else "L"
    dist = _distance_key(abs(h - d), cfg)
    hp1, hm1 = v.p(h + 1) if h + 1 != d else NULL, v.p(h - 1) if h > 0 else NULL
    dp1, dm1 = v.p(d + 1) if d + 1 != h else NULL, v.p(d - 1) if d - 1 != h else NULL
    keys = [
        f"E01={hw}", f"E02={hp}", f"E03={dw}", f"E04={dp}",
        f"E05={hw}|{hp}", f"E06={dw}|{dp}", f"E07={hw}|{dw}", f"E08={hp}|{dp}",
        f"E09={hw}|{dp}", f"E10={hp}|{dw}",
        f"E12={hp}|{hp1}|{dm1}|{dp}", f"E13={hm1}|{hp}|{dm1}|{dp}",
        f"E14={hp}|{hp1}|{dp}|{dp1}", f"E15={hm1}|{hp}|{dp}|{dp1}",
    ]
    lo, hi = min(h, d), max(h, d)
    for k in range(lo + 1, hi):
        keys.append(f"E16={hp}|{v.p(k)}|{dp}")
    if cfg.position_templates:
        keys += [f"E11={hp}|{dp}|{dist}", f"E17={dist}", f"E18={hw}|{dw}|{dist}"]
    return [f"{k}|{direction}" for k in keys]


def _label_keys(v: _View, h: int, d: int, cfg: FeatureConfig) -> List[str]:
    hw, hp, dw, dp = v.w(h), v.p(h), v.w(d), v.p(d)
    direction = "R" if h < d else "L"
    keys = [f"L1={dp}", f"L2={hp}|{dp}", f"L3={dw}", f"L4={hw}|{dp}", f"L5={dp}|{direction}"]
    if cfg.position_templates:
        keys.append(f"L6={dp}|{_distance_key(abs(h - d), cfg)}|{direction}")
    return keys


def edge_hashes(sentence, head: int, dep: int, cfg: FeatureConfig = FeatureConfig(), view=None) -> np.ndarray:
    v = view or _View(sentence, cfg)
    return np.array([hash64(k) for k in _edge_keys(v, head, dep, cfg)], dtype=np.uint64)


def edge_features(sentence, head: int, dep: int, cfg: FeatureConfig = FeatureConfig(),
                  templates: Optional[Sequence[str]] = None) -> SparseFeatureVector:
    """Feature vector of the arc head -> dep.

    ``templates`` optionally restricts (and orders) the template ids used;
    the resulting vector does not depend on that order.
    """
    v = _View(sentence, cfg)
    keys = _edge_keys(v, head, dep, cfg)
    if templates is not None:
        by_id: Dict[str, List[str]] = {}
        for k in keys:
            by_id.setdefault(k[:3], []).append(k)
        keys = [k for t in templates for k in by_id.get(t, [])]
    idx = np.array([hash64(k) for k in keys], dtype=np.uint64) & np.uint64(cfg.mask)
    return SparseFeatureVector(idx.astype(np.int64))


def label_hashes(sentence, head: int, dep: int, cfg: FeatureConfig = FeatureConfig(), view=None) -> np.ndarray:
    v = view or _View(sentence, cfg)
    return np.array([hash64(k) for k in _label_keys(v, head, dep, cfg)], dtype=np.uint64)


def label_salts(labels: Sequence[str]) -> np.ndarray:
    return np.array([hash64(f"LABEL={l}") for l in labels], dtype=np.uint64)


class SentenceEdgeFeatures:
    """All edge and label feature hashes of one sentence, computed once and cached."""

    def __init__(self, sentence, cfg: FeatureConfig):
        v = _View(sentence, cfg)
        n = len(sentence)
        self.n = n
        mask = np.uint64(cfg.mask)
        flat, owner = [], []
        self.label_base = {}
        for h in range(n + 1):
            for d in range(1, n + 1):
                if h == d:
                    continue
                hs = [hash64(k) for k in _edge_keys(v, h, d, cfg)]
                flat.extend(hs)
                owner.extend([h * (n + 1) + d] * len(hs))
                self.label_base[h, d] = np.array([hash64(k) for k in _label_keys(v, h, d, cfg)],
                                                 dtype=np.uint64)
        self.indices = (np.array(flat, dtype=np.uint64) & mask).astype(np.int64)
        self.owner = np.array(owner, dtype=np.int64)
        order = np.argsort(self.owner, kind="stable")
        self.indices, self.owner = self.indices[order], self.owner[order]
        self.starts = np.searchsorted(self.owner, np.arange((n + 1) * (n + 1)))
        self.ends = np.searchsorted(self.owner, np.arange((n + 1) * (n + 1)), side="right")

    def arc(self, h: int, d: int) -> np.ndarray:
        k = h * (self.n + 1) + d
        return self.indices[self.starts[k]:self.ends[k]]

    def score_matrix(self, weights: np.ndarray) -> np.ndarray:
        size = (self.n + 1) ** 2
        flat = np.bincount(self.owner, weights=weights[self.indices], minlength=size)
        return flat.reshape(self.n + 1, self.n + 1)


# ---------------------------------------------------------------------------
# Configuration features

def _labelset(labels: Iterable[str]) -> str:
    ls = sorted(labels)
    return ",".join(ls) if ls else "{}"


def config_keys(config, sentence, cfg: FeatureConfig = FeatureConfig(), view=None):
    """Feature keys of a parser configuration: (action keys, label keys)."""
    v = view or _View(sentence, cfg)
    stack, buf = config.stack, config.buffer
    s = [stack[-1 - i] if len(stack) > i else None for i in range(3)]
    b = [buf[i] if len(buf) > i else None for i in range(3)]
    slots = {"S0": s[0], "S1": s[1], "S2": s[2], "B0": b[0], "B1": b[1], "B2": b[2]}
    keys = []
    for j, (name, i) in enumerate(slots.items()):
        keys += [f"C{1 + 3 * j:02d}={name}w={v.w(i)}", f"C{2 + 3 * j:02d}={name}p={v.p(i)}",
                 f"C{3 + 3 * j:02d}={name}wp={v.w(i)}|{v.p(i)}"]
    s0w, s0p, s1p, s2p = v.w(s[0]), v.p(s[0]), v.p(s[1]), v.p(s[2])
    b0w, b0p, b1p, b2p = v.w(b[0]), v.p(b[0]), v.p(b[1]), v.p(b[2])
    keys += [
        f"C19={s0w}|{b0w}", f"C20={s0p}|{b0p}", f"C21={s0w}|{b0p}", f"C22={s0p}|{b0w}",
        f"C23={s0p}|{s1p}", f"C24={b0p}|{b1p}", f"C25={s0w}|{s0p}|{b0p}", f"C26={s0p}|{b0w}|{b0p}",
        f"C27={s0p}|{b0p}|{b1p}", f"C28={s1p}|{s0p}|{b0p}", f"C29={s2p}|{s1p}|{s0p}",
        f"C30={b0p}|{b1p}|{b2p}",
    ]
    if cfg.position_templates:
        if s[0] is not None and b[0] is not None:
            dist = _distance_key(abs(b[0] - s[0]), cfg)
        else:
            dist = NULL
        keys += [f"C31={dist}", f"C32={s0w}|{dist}", f"C33={s0p}|{b0p}|{dist}"]
    deps = config.dependents
    s0_left = [c for c in deps.get(s[0], ()) if c < s[0]] if s[0] is not None else []
    s0_right = [c for c in deps.get(s[0], ()) if c > s[0]] if s[0] is not None else []
    b0_left = [c for c in deps.get(b[0], ()) if c < b[0]] if b[0] is not None else []
    labels = config.labels
    s0_ls = _labelset(labels[c] for c in s0_left + s0_right)
    b0_ls = _labelset(labels[c] for c in b0_left)
    s0_lm = labels[min(s0_left)] if s0_left else NULL
    s0_rm = labels[max(s0_right)] if s0_right else NULL
    keys += [
        f"C34={s0w}|{len(s0_left)}|{len(s0_right)}", f"C35={s0p}|{len(s0_left)}|{len(s0_right)}",
        f"C36={b0p}|{len(b0_left)}", f"C37={b0w}|{len(b0_left)}",
        f"C38={s0p}|{s0_ls}", f"C39={b0p}|{b0_ls}", f"C40={s0p}|{s0_lm}|{s0_rm}",
    ]
    if cfg.free_word_order:
        s0_in = labels.get(s[0], NULL) if s[0] is not None else NULL
        keys += [f"C41={s0w}|{s0_ls}", f"C42={b0w}|{b0_ls}", f"C43={s0p}|{s0_in}"]
    label_keys = [f"CL1={s0p}|{b0p}", f"CL2={s0w}|{b0p}", f"CL3={s0p}|{b0w}",
                  f"CL4={s1p}|{s0p}", f"CL5={s0_ls}|{b0p}"]
    return keys, label_keys


def config_hashes(config, sentence, cfg: FeatureConfig = FeatureConfig(), view=None):
    keys, lkeys = config_keys(config, sentence, cfg, view)
    return (np.array([hash64(k) for k in keys], dtype=np.uint64),
            np.array([hash64(k) for k in lkeys], dtype=np.uint64))


def config_features(config, sentence, cfg: FeatureConfig = FeatureConfig()) -> SparseFeatureVector:
    base, _ = config_hashes(config, sentence, cfg)
    return SparseFeatureVector((base & np.uint64(cfg.mask)).astype(np.int64))


def sentence_view(sentence, cfg: FeatureConfig):
    return _View(sentence, cfg)
