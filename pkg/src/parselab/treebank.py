"""Treebank data model, CoNLL-X I/O and structural tree analyses.

Node 0 is the artificial root; tokens are numbered 1..n.  Head arrays are
plain sequences of length n where ``heads[i - 1]`` is the head of token i.
"""

from __future__ import annotations

import copy
import hashlib
import io
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, List, Optional, Sequence

import numpy as np

ROOT_LABEL = "root"


class TreebankError(ValueError):
    """Malformed CoNLL input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TreeValidationError(TreebankError):
    pass


@dataclass
class Token:
    id: int
    form: str
    morph: str = "_"
    head: Optional[int] = None
    label: Optional[str] = None
    lemma: str = "_"
    cpostag: str = "_"
    feats: str = "_"

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"token id must be >= 1, got {self.id}")
        if self.head is not None and self.head == self.id:
            raise ValueError(f"token {self.id} cannot head itself")


@dataclass
class Arc:
    head: int
    dependent: int
    label: Optional[str] = None

    def __post_init__(self):
        if self.head == self.dependent:
            raise ValueError("arc head and dependent must differ")


@dataclass
class DependencyTree:
    heads: List[int]
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.heads = [int(h) for h in self.heads]
        if not self.labels:
            self.labels = ["_"] * len(self.heads)
        if len(self.labels) != len(self.heads):
            raise ValueError("heads and labels differ in length")

    def __len__(self) -> int:
        return len(self.heads)

    def arcs(self) -> List[Arc]:
        return [Arc(h, d, l) for d, (h, l) in enumerate(zip(self.heads, self.labels), start=1)]

    def children(self) -> List[List[int]]:
        """Dependents of every node 0..n, in linear order."""
        kids: List[List[int]] = [[] for _ in range(len(self.heads) + 1)]
        for d, h in enumerate(self.heads, start=1):
            kids[h].append(d)
        return kids


@dataclass
class Sentence:
    tokens: List[Token]

    def __post_init__(self):
        for i, tok in enumerate(self.tokens, start=1):
            if tok.id != i:
                raise TreebankError(f"token ids must be contiguous from 1, found {tok.id} at position {i}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def forms(self) -> List[str]:
        return [t.form for t in self.tokens]

    @property
    def morphs(self) -> List[str]:
        return [t.morph for t in self.tokens]

    @property
    def has_gold(self) -> bool:
        return all(t.head is not None for t in self.tokens)

    def gold_tree(self) -> DependencyTree:
        if not self.has_gold:
            raise TreebankError("sentence has no gold tree")
        return DependencyTree([t.head for t in self.tokens], [t.label or "_" for t in self.tokens])

    def with_tree(self, tree: DependencyTree) -> "Sentence":
        """Copy of the sentence whose gold fields are replaced by ``tree``."""
        toks = [copy.copy(t) for t in self.tokens]
        for t, h, l in zip(toks, tree.heads, tree.labels):
            t.head, t.label = h, l
        return Sentence(toks)


@dataclass
class Corpus:
    sentences: List[Sentence] = field(default_factory=list)
    predicted: Optional[List[DependencyTree]] = None

    def __post_init__(self):
        if self.predicted is not None:
            if len(self.predicted) != len(self.sentences):
                raise ValueError("predicted trees must align 1:1 with sentences")
            for s, t in zip(self.sentences, self.predicted):
                if len(s) != len(t):
                    raise ValueError("predicted tree length differs from sentence length")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def gold_trees(self) -> List[DependencyTree]:
        return [s.gold_tree() for s in self.sentences]

    def labels(self) -> List[str]:
        return sorted({t.label for s in self.sentences for t in s.tokens if t.label is not None})


# ---------------------------------------------------------------------------
# CoNLL-X I/O

def _field(value: str) -> str:
    return value if value else "_"


def read_conll(
    stream: BinaryIO | bytes | str,
    morph_column: str = "postag",
    single_root: bool = False,
) -> Corpus:
    """Read a CoNLL-X treebank.

    ``morph_column`` selects where the morphological tag comes from:
    ``postag`` (column 5, falling back to FEATS when it is ``_``), ``feats``
    or ``cpostag``.  Gold trees are validated; heads of ``_`` are read as
    missing (unannotated text).
    """
    if isinstance(stream, (bytes, bytearray)):
        text = bytes(stream).decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        data = stream.read()
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data

    sentences: List[Sentence] = []
    block: List[tuple] = []

    def flush():
        if not block:
            return
        toks = [tok for tok, _ in block]
        n = len(toks)
        for tok, lineno in block:
            if tok.head is not None and not 0 <= tok.head <= n:
                raise TreeValidationError(f"head {tok.head} out of range for a {n}-token sentence", lineno)
        try:
            sent = Sentence(toks)
        except TreebankError as exc:
            raise TreebankError(str(exc), block[0][1]) from None
        if sent.has_gold:
            problems = validate_tree(sent.gold_tree().heads, single_root=single_root)
            if problems:
                raise TreeValidationError("; ".join(problems), block[0][1])
        elif any(t.head is not None for t in toks):
            raise TreebankError("sentence is only partially annotated", block[0][1])
        sentences.append(sent)
        block.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise TreebankError(f"expected 10 tab-separated fields, found {len(cols)}", lineno)
        if "-" in cols[0] or "." in cols[0]:
            continue  # multiword ranges / empty nodes
        try:
            tid = int(cols[0])
            head = None if cols[6] == "_" else int(cols[6])
        except ValueError:
            raise TreebankError("non-integer ID or HEAD field", lineno) from None
        if morph_column == "postag":
            morph = cols[4] if cols[4] != "_" else cols[5]
        elif morph_column == "feats":
            morph = cols[5]
        elif morph_column == "cpostag":
            morph = cols[3]
        else:
            raise ValueError(f"unknown morph column {morph_column!r}")
        label = None if head is None else cols[7]
        try:
            tok = Token(tid, cols[1], morph=morph, head=head, label=label,
                        lemma=cols[2], cpostag=cols[3], feats=cols[5])
        except ValueError as exc:
            raise TreeValidationError(str(exc), lineno) from None
        block.append((tok, lineno))
    flush()
    return Corpus(sentences)


def read_conll_file(path, **kwargs) -> Corpus:
    with open(path, "rb") as fh:
        return read_conll(fh, **kwargs)


def write_conll(corpus: Corpus, which: str = "gold") -> bytes:
    """Serialise a corpus; ``which="predicted"`` writes the predicted trees into HEAD/DEPREL."""
    if which not in ("gold", "predicted"):
        raise ValueError(f"which must be 'gold' or 'predicted', got {which!r}")
    if which == "predicted" and corpus.predicted is None:
        raise TreebankError("corpus has no predicted trees")
    out = io.StringIO()
    for k, sent in enumerate(corpus.sentences):
        tree = corpus.predicted[k] if which == "predicted" else None
        for i, tok in enumerate(sent.tokens):
            if tree is not None:
                head, label = str(tree.heads[i]), tree.labels[i]
            else:
                head = "_" if tok.head is None else str(tok.head)
                label = "_" if tok.label is None else tok.label
            cols = [str(tok.id), tok.form, tok.lemma, tok.cpostag, tok.morph, tok.feats,
                    head, label, "_", "_"]
            out.write("\t".join(_field(c) for c in cols) + "\n")
        out.write("\n")
    return out.getvalue().encode("utf-8")


def write_conll_file(corpus: Corpus, path, which: str = "gold") -> None:
    with open(path, "wb") as fh:
        fh.write(write_conll(corpus, which))


def corpus_checksum(corpus: Corpus) -> str:
    """Digest of the gold head/label columns (used to prove gold was erased)."""
    h = hashlib.sha256()
    for s in corpus.sentences:
        for t in s.tokens:
            h.update(f"{t.head}\x1f{t.label}\x1e".encode("utf-8"))
        h.update(b"\x1d")
    return h.hexdigest()


def erase_gold(corpus: Corpus) -> Corpus:
    sents = []
    for s in corpus.sentences:
        toks = [copy.copy(t) for t in s.tokens]
        for t in toks:
            t.head, t.label = None, None
        sents.append(Sentence(toks))
    return Corpus(sents)


# ---------------------------------------------------------------------------
# Tree structure

def validate_tree(heads: Sequence[int], single_root: bool = False) -> List[str]:
    """Return the list of violations; an empty list means a well-formed tree."""
    n = len(heads)
    problems: List[str] = []
    if n < 1:
        return ["empty head array"]
    ok_range = True
    for d, h in enumerate(heads, start=1):
        if not isinstance(h, (int, np.integer)):
            problems.append(f"non-integer head at {d}")
            ok_range = False
        elif h == d:
            problems.append(f"self-loop at {d}")
            ok_range = False
        elif not 0 <= h <= n:
            problems.append(f"out-of-range head {h} at {d}")
            ok_range = False
    if not ok_range:
        return problems
    # walk up from every node; colour 2 = known to reach the root
    state = [0] * (n + 1)
    state[0] = 2
    reported = set()
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if state[node] == 1:
            cyc = frozenset(path[path.index(node):])
            if cyc not in reported:
                reported.add(cyc)
                problems.append("cycle through " + ",".join(str(x) for x in sorted(cyc)))
            final = 3
        else:
            final = state[node]
        for p in path:
            state[p] = final
    if single_root:
        roots = sum(1 for h in heads if h == 0)
        if roots != 1:
            problems.append(f"{roots} root attachments, expected exactly one")
    return problems


def is_tree(heads: Sequence[int], single_root: bool = False) -> bool:
    return not validate_tree(heads, single_root)


def _heads_of(tree) -> List[int]:
    return list(tree.heads) if isinstance(tree, DependencyTree) else list(tree)


def descendants(heads: Sequence[int], node: int) -> set:
    kids: List[List[int]] = [[] for _ in range(len(heads) + 1)]
    for d, h in enumerate(heads, start=1):
        kids[h].append(d)
    seen, todo = set(), [node]
    while todo:
        x = todo.pop()
        for c in kids[x]:
            if c not in seen:
                seen.add(c)
                todo.append(c)
    return seen


def is_projective(tree) -> bool:
    """True iff no two arcs cross (the root counts as position 0)."""
    heads = _heads_of(tree)
    spans = [(min(h, d), max(h, d)) for d, h in enumerate(heads, start=1)]
    for i, (a, b) in enumerate(spans):
        for c, e in spans[i + 1:]:
            if a < c < b < e or c < a < e < b:
                return False
    return True


def nonprojectivity_degree(tree, arc) -> int:
    """Degree of non-projectivity of an arc.

    Counts the words strictly between the head and the dependent that are not
    descendants of the head and whose own head lies outside that span.
    """
    heads = _heads_of(tree)
    head, dep = (arc.head, arc.dependent) if isinstance(arc, Arc) else arc
    if not 1 <= dep <= len(heads) or heads[dep - 1] != head:
        raise ValueError(f"arc ({head} -> {dep}) is not in the tree")
    lo, hi = min(head, dep), max(head, dep)
    below = descendants(heads, head)
    count = 0
    for k in range(lo + 1, hi):
        if k not in below and not lo < heads[k - 1] < hi:
            count += 1
    return count


def arc_degrees(tree) -> List[int]:
    """Non-projectivity degree of the arc entering every token 1..n."""
    heads = _heads_of(tree)
    return [nonprojectivity_degree(heads, (h, d)) for d, h in enumerate(heads, start=1)]


def dependency_length(arc) -> Optional[int]:
    """|head - dependent|; ``None`` for root-attached arcs (reported in their own bucket)."""
    head, dep = (arc.head, arc.dependent) if isinstance(arc, Arc) else arc
    if head == 0:
        return None
    return abs(head - dep)


def root_distances(tree) -> List[int]:
    heads = _heads_of(tree)
    depth = [None] * (len(heads) + 1)
    depth[0] = 0
    for start in range(1, len(heads) + 1):
        path, node = [], start
        while depth[node] is None:
            if len(path) > len(heads):
                raise TreeValidationError(f"token {start} does not reach the root")
            path.append(node)
            node = heads[node - 1]
        d = depth[node]
        for p in reversed(path):
            d += 1
            depth[p] = d
    return depth[1:]


def root_distance(tree, node: int) -> int:
    if node == 0:
        return 0
    return root_distances(tree)[node - 1]


def projectivize(tree: DependencyTree) -> DependencyTree:
    """Lift the shortest non-projective arc to the grandparent until the tree is projective."""
    heads = list(tree.heads)
    while True:
        worst = None
        for d, h in enumerate(heads, start=1):
            if h != 0 and nonprojectivity_degree(heads, (h, d)) > 0:
                key = (abs(h - d), d)
                if worst is None or key < worst[0]:
                    worst = (key, d)
        if worst is None:
            return DependencyTree(heads, list(tree.labels))
        d = worst[1]
        heads[d - 1] = heads[heads[d - 1] - 1]


# ---------------------------------------------------------------------------
# Word-order permutation

def permutation(n: int, mode: str = "seeded-shuffle", seed: int = 0) -> List[int]:
    """New order as a list of old token ids: position i (1-based) holds ``order[i-1]``."""
    if mode == "identity":
        return list(range(1, n + 1))
    if mode != "seeded-shuffle":
        raise ValueError(f"unknown permutation mode {mode!r}")
    rng = np.random.default_rng(seed)
    return [int(x) + 1 for x in rng.permutation(n)]


def permute_words(sentence: Sentence, mode: str = "seeded-shuffle", seed: int = 0) -> Sentence:
    order = permutation(len(sentence), mode, seed)
    if mode == "identity":
        return sentence
    new_id = {0: 0}
    for pos, old in enumerate(order, start=1):
        new_id[old] = pos
    toks = []
    for pos, old in enumerate(order, start=1):
        t = copy.copy(sentence.tokens[old - 1])
        t.id = pos
        if t.head is not None:
            t.head = new_id[t.head]
        toks.append(t)
    return Sentence(toks)


def permute_tree(tree: DependencyTree, order: Sequence[int]) -> DependencyTree:
    new_id = {0: 0}
    for pos, old in enumerate(order, start=1):
        new_id[old] = pos
    heads = [new_id[tree.heads[old - 1]] for old in order]
    labels = [tree.labels[old - 1] for old in order]
    return DependencyTree(heads, labels)


def unpermute_tree(tree: DependencyTree, order: Sequence[int]) -> DependencyTree:
    """Map a tree over permuted positions back to the original positions."""
    heads = [0] * len(order)
    labels = ["_"] * len(order)
    for pos, old in enumerate(order, start=1):
        h = tree.heads[pos - 1]
        heads[old - 1] = 0 if h == 0 else order[h - 1]
        labels[old - 1] = tree.labels[pos - 1]
    return DependencyTree(heads, labels)


def sentence_from_heads(heads: Sequence[int], labels: Optional[Sequence[str]] = None,
                        forms: Optional[Sequence[str]] = None,
                        morphs: Optional[Sequence[str]] = None) -> Sentence:
    n = len(heads)
    labels = labels or ["dep"] * n
    forms = forms or [f"w{i}" for i in range(1, n + 1)]
    morphs = morphs or ["X"] * n
    return Sentence([Token(i, forms[i - 1], morphs[i - 1], heads[i - 1], labels[i - 1])
                     for i in range(1, n + 1)])


def iter_arcs(corpus: Corpus) -> Iterable[tuple]:
    for s in corpus.sentences:
        for t in s.tokens:
            yield t.head, t.id, t.label
