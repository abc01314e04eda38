"""Attachment scores, bucketed error profiles, MAD and paired t-tests.

Bucketed precision counts predicted arcs by the attribute they have in the
predicted tree; recall counts gold arcs by their gold-tree attribute.  A
bucket's ``support`` is its gold count (sentences for sentence length).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .treebank import Corpus, DependencyTree, arc_degrees, root_distances, validate_tree

DIMENSIONS = ("sentence-length", "dependency-length", "nonproj-degree", "root-distance")
ALIASES = {"sentlen": "sentence-length", "deplen": "dependency-length", "nonproj": "nonproj-degree",
           "rootdist": "root-distance"}
DEFAULT_CAPS = {"dependency-length": 10, "nonproj-degree": 4, "root-distance": 7}
CSV_HEADER = ["bucket", "support", "p_unlab", "r_unlab", "p_lab", "r_lab"]

Trees = Union[Corpus, Sequence[DependencyTree]]


class EvaluationError(ValueError):
    pass


def dimension_name(dim: str) -> str:
    d = ALIASES.get(dim, dim)
    if d not in DIMENSIONS:
        raise EvaluationError(f"unknown dimension {dim!r}; expected one of {DIMENSIONS + tuple(ALIASES)}")
    return d


def _trees(x: Trees, side: str) -> List[DependencyTree]:
    if isinstance(x, Corpus):
        if side == "pred" and x.predicted is not None:
            return list(x.predicted)
        return x.gold_trees()
    return list(x)


def _aligned(gold: Trees, pred: Trees):
    g, p = _trees(gold, "gold"), _trees(pred, "pred")
    if len(g) != len(p):
        raise EvaluationError(f"gold has {len(g)} sentences, prediction has {len(p)}")
    for i, (a, b) in enumerate(zip(g, p)):
        if len(a) != len(b):
            raise EvaluationError(f"sentence {i + 1}: gold has {len(a)} tokens, prediction has {len(b)}")
    return g, p


def _counts(g: DependencyTree, p: DependencyTree):
    u = sum(1 for a, b in zip(g.heads, p.heads) if a == b)
    l = sum(1 for a, b, c, d in zip(g.heads, p.heads, g.labels, p.labels) if a == b and c == d)
    return u, l


def micro_scores(gold: Trees, pred: Trees):
    """(UAS, LAS) over all tokens of the corpus."""
    g, p = _aligned(gold, pred)
    total = sum(len(t) for t in g)
    if total == 0:
        raise EvaluationError("corpus has no tokens")
    u = l = 0
    for a, b in zip(g, p):
        cu, cl = _counts(a, b)
        u += cu
        l += cl
    return u / total, l / total


def sentence_scores(gold: Trees, pred: Trees) -> List[tuple]:
    """Per-sentence (UAS, LAS); empty sentences are skipped."""
    g, p = _aligned(gold, pred)
    out = []
    for a, b in zip(g, p):
        if len(a):
            cu, cl = _counts(a, b)
            out.append((cu / len(a), cl / len(a)))
    return out


def macro_scores(gold: Trees, pred: Trees):
    """Unweighted mean of per-sentence UAS and LAS."""
    s = sentence_scores(gold, pred)
    if not s:
        raise EvaluationError("corpus has no tokens")
    return float(np.mean([x[0] for x in s])), float(np.mean([x[1] for x in s]))


# -- bucket reports -----------------------------------------------------------------

@dataclass
class BucketRow:
    bucket: str
    support: int
    p_unlab: Optional[float]
    r_unlab: Optional[float]
    p_lab: Optional[float]
    r_lab: Optional[float]
    predicted: int = 0
    correct_unlab: int = 0
    correct_lab: int = 0


@dataclass
class BucketTable:
    dimension: str
    rows: List[BucketRow] = field(default_factory=list)

    def row(self, bucket) -> BucketRow:
        for r in self.rows:
            if r.bucket == str(bucket):
                return r
        raise KeyError(bucket)

    def buckets(self) -> List[str]:
        return [r.bucket for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.bucket, r.support] + [_fmt(v) for v in (r.p_unlab, r.r_unlab, r.p_lab, r.r_lab)])
        return buf.getvalue()


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def _bin(v: int, cap: Optional[int]) -> str:
    return f"{cap}+" if cap is not None and v >= cap else str(v)


def arc_attributes(tree: DependencyTree, dimension: str, cap: Optional[int] = None) -> List[str]:
    """Bucket key of the arc entering each token of ``tree``."""
    dimension = dimension_name(dimension)
    if dimension == "sentence-length":
        raise EvaluationError("sentence length is a sentence attribute")
    if cap is None:
        cap = DEFAULT_CAPS[dimension]
    problems = validate_tree(tree.heads)
    if problems:
        raise EvaluationError(f"invalid tree: {problems[0]}")
    if dimension == "dependency-length":
        return ["root" if h == 0 else _bin(abs(h - d), cap) for d, h in enumerate(tree.heads, start=1)]
    if dimension == "nonproj-degree":
        return [_bin(v, cap) for v in arc_degrees(tree)]
    return [_bin(v, cap) for v in root_distances(tree)]


def _order(key: str):
    if key == "root":
        return (2, 0)
    if key.endswith("+"):
        return (1, int(key[:-1]))
    return (0, int(key))


def _rate(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def bucket_report(gold: Trees, pred: Trees, dimension: str, min_support: int = 0,
                  cap: Optional[int] = None) -> BucketTable:
    dimension = dimension_name(dimension)
    g, p = _aligned(gold, pred)
    table = BucketTable(dimension)
    if dimension == "sentence-length":
        acc: Dict[str, list] = {}
        for a, b in zip(g, p):
            if not len(a):
                continue
            cu, cl = _counts(a, b)
            row = acc.setdefault(str(len(a)), [0, 0, 0, 0])
            row[0] += 1
            row[1] += len(a)
            row[2] += cu
            row[3] += cl
        for key in sorted(acc, key=_order):
            n_sent, n_tok, cu, cl = acc[key]
            if n_sent < min_support:
                continue
            table.rows.append(BucketRow(key, n_sent, cu / n_tok, cu / n_tok, cl / n_tok, cl / n_tok,
                                        n_tok, cu, cl))
        return table
    gold_n: Dict[str, int] = {}
    pred_n: Dict[str, int] = {}
    rec_u: Dict[str, int] = {}
    rec_l: Dict[str, int] = {}
    pre_u: Dict[str, int] = {}
    pre_l: Dict[str, int] = {}
    for a, b in zip(g, p):
        ga = arc_attributes(a, dimension, cap)
        pa = arc_attributes(b, dimension, cap)
        for i in range(len(a)):
            ok_u = a.heads[i] == b.heads[i]
            ok_l = ok_u and a.labels[i] == b.labels[i]
            gold_n[ga[i]] = gold_n.get(ga[i], 0) + 1
            pred_n[pa[i]] = pred_n.get(pa[i], 0) + 1
            rec_u[ga[i]] = rec_u.get(ga[i], 0) + ok_u
            rec_l[ga[i]] = rec_l.get(ga[i], 0) + ok_l
            pre_u[pa[i]] = pre_u.get(pa[i], 0) + ok_u
            pre_l[pa[i]] = pre_l.get(pa[i], 0) + ok_l
    for key in sorted(set(gold_n) | set(pred_n), key=_order):
        sup = gold_n.get(key, 0)
        if sup < min_support:
            continue
        npred = pred_n.get(key, 0)
        table.rows.append(BucketRow(key, sup, _rate(pre_u.get(key, 0), npred), _rate(rec_u.get(key, 0), sup),
                                    _rate(pre_l.get(key, 0), npred), _rate(rec_l.get(key, 0), sup),
                                    npred, rec_u.get(key, 0), rec_l.get(key, 0)))
    return table


# -- statistics ----------------------------------------------------------------------

def mad(values: Sequence[float]) -> float:
    """Mean absolute deviation from the arithmetic mean."""
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        raise EvaluationError("mad of an empty sequence")
    return float(np.mean(np.abs(x - x.mean())))


@dataclass
class TTest:
    t: float
    p: float
    df: int
    degenerate: bool = False


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> TTest:
    """Two-sided paired t-test; zero-variance differences give p = 1 with ``degenerate`` set."""
    a = np.asarray(list(scores_a), dtype=np.float64)
    b = np.asarray(list(scores_b), dtype=np.float64)
    if a.shape != b.shape:
        raise EvaluationError(f"score lists differ in length ({a.size} vs {b.size})")
    if a.size < 2:
        raise EvaluationError("paired t-test needs at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    df = a.size - 1
    if sd == 0.0:
        return TTest(float("nan"), 1.0, df, True)
    t = float(d.mean() / (sd / math.sqrt(a.size)))
    return TTest(t, float(2.0 * stats.t.sf(abs(t), df)), df)


# -- reports -------------------------------------------------------------------------

def bucket_mad(table: BucketTable, column: str = "r_unlab") -> Optional[float]:
    vals = [getattr(r, column) for r in table.rows if getattr(r, column) is not None]
    return mad(vals) if vals else None


def profile(gold: Trees, systems: Mapping[str, Trees], out_dir=None, min_support: int = 0,
            dimensions: Sequence[str] = DIMENSIONS, sentlen_min_support: Optional[int] = None) -> dict:
    """Scores, bucket tables and pairwise significance for one or more systems.

    With ``out_dir`` set, writes ``<system>.<dimension>.csv`` per table and
    ``summary.json``.
    """
    summary: dict = {"systems": {}, "pairwise": {}}
    tables: Dict[str, Dict[str, BucketTable]] = {}
    per_sentence = {}
    for name, pred in systems.items():
        mu, ml = micro_scores(gold, pred)
        Mu, Ml = macro_scores(gold, pred)
        per_sentence[name] = sentence_scores(gold, pred)
        tables[name] = {}
        entry = {"micro_uas": mu, "micro_las": ml, "macro_uas": Mu, "macro_las": Ml, "mad": {}}
        for dim in dimensions:
            dim = dimension_name(dim)
            ms = sentlen_min_support if dim == "sentence-length" and sentlen_min_support is not None \
                else min_support
            t = bucket_report(gold, pred, dim, ms)
            tables[name][dim] = t
            entry["mad"][dim] = {"r_unlab": bucket_mad(t, "r_unlab"), "r_lab": bucket_mad(t, "r_lab")}
        summary["systems"][name] = entry
    for x, y in combinations(sorted(systems), 2):
        res = {}
        for unit, k in (("las", 1), ("uas", 0)):
            tt = paired_t_test([s[k] for s in per_sentence[x]], [s[k] for s in per_sentence[y]])
            res[unit] = {"t": None if math.isnan(tt.t) else tt.t, "p": tt.p, "df": tt.df,
                         "degenerate": tt.degenerate}
        summary["pairwise"][f"{x}|{y}"] = res
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, by_dim in tables.items():
            for dim, t in by_dim.items():
                (out / f"{name}.{dim}.csv").write_text(t.to_csv(), encoding="utf-8")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    summary["tables"] = tables
    return summary
