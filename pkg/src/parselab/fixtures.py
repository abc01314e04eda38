"""Bundled synthetic treebanks.

``regenerate()`` rebuilds every file from the synthetic grammar; the shipped
copies were produced with exactly these calls.
"""

from __future__ import annotations

from pathlib import Path

from .synthetic import generate_corpus
from .treebank import Corpus, read_conll_file, write_conll_file

DATA = Path(__file__).resolve().parent / "data"

RECIPES = {
    "train50.conll": dict(n=50, seed=0),
    "nonproj.conll": dict(n=50, seed=1, hyperbaton=0.6),
    "labeled100.conll": dict(n=100, seed=2),
    "unlabeled400.conll": dict(n=400, seed=3),
    "train500.conll": dict(n=500, seed=4),
    "test200.conll": dict(n=200, seed=5),
}


def path(name: str) -> Path:
    if not name.endswith(".conll"):
        name += ".conll"
    if name not in RECIPES:
        raise KeyError(f"no bundled fixture {name!r}; have {sorted(RECIPES)}")
    return DATA / name


def load(name: str) -> Corpus:
    return read_conll_file(path(name))


def regenerate(target: Path = DATA) -> None:
    target.mkdir(parents=True, exist_ok=True)
    for name, kw in RECIPES.items():
        write_conll_file(generate_corpus(**kw), target / name)
