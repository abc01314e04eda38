"""Loading, saving and applying any of the four parser kinds."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import List, Sequence

from .graph_parser import GraphParser
from .l2s import Policy
from .linear import MAGIC as LINEAR_MAGIC
from .linear import LinearModel, ModelFormatError
from .neural.biaff import MAGIC as NEURAL_MAGIC
from .neural.biaff import BiaffModel, parse_corpus
from .transition import TransitionModel
from .treebank import Corpus, DependencyTree, Sentence


class BeamParser:
    def __init__(self, model: TransitionModel, beam: int):
        self.model, self.beam = model, beam

    def parse(self, sentence: Sentence) -> DependencyTree:
        return self.model.parse(sentence, beam=self.beam)

    def to_bytes(self) -> bytes:
        return self.model.to_bytes()


def model_bytes(model) -> bytes:
    if isinstance(model, Policy):
        return model.model.to_bytes()
    return model.to_bytes()


def load_model(data: bytes):
    """Parser object with a ``parse(sentence)`` method."""
    if data[:4] == NEURAL_MAGIC:
        return BiaffModel.from_bytes(data)
    if data[:4] != LINEAR_MAGIC:
        raise ModelFormatError("unrecognised model file")
    lm = LinearModel.from_bytes(data)
    kind = lm.header.get("parser")
    if kind == "graph":
        return GraphParser.from_model(lm)
    if kind == "arceager":
        return BeamParser(TransitionModel.from_model(lm), int(lm.header.get("beam", 1)))
    if kind == "l2s":
        return Policy(TransitionModel.from_model(lm), 0.0)
    raise ModelFormatError(f"unknown parser kind {kind!r} in model header")


def load_model_file(path):
    with open(path, "rb") as f:
        return load_model(f.read())


def _parse_chunk(args):
    model, sentences = args
    return _parse_serial(model, sentences)


def _parse_serial(model, sentences: Sequence[Sentence]) -> List[DependencyTree]:
    if isinstance(model, BiaffModel):
        return parse_corpus(model, Corpus(list(sentences)))
    return [model.parse(s) if len(s) else DependencyTree([]) for s in sentences]


def parse_sentences(model, sentences: Sequence[Sentence], jobs: int = 1) -> List[DependencyTree]:
    """Parse in order; ``jobs > 1`` splits the input into contiguous chunks over processes."""
    sentences = list(sentences)
    if jobs <= 1 or len(sentences) < 2:
        return _parse_serial(model, sentences)
    size = -(-len(sentences) // jobs)
    chunks = [(model, sentences[i:i + size]) for i in range(0, len(sentences), size)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return [t for part in ex.map(_parse_chunk, chunks) for t in part]
