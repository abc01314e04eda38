"""Dense numeric layer: BiLSTM encoder, biaffine scorers, Adam, gradient checks."""

from .biaff import (AuxChannel, BiaffConfig, BiaffModel, TrainingDivergence, parse_biaff, parse_corpus,
                    score_all_arcs, score_labels, specialize, train_biaff)
from .encoder import EncoderParams, Vocab, encode
from .ops import ShapeError, biaffine_apply, gate_fuse
from .optim import Adam

__all__ = ["AuxChannel", "BiaffConfig", "BiaffModel", "TrainingDivergence", "parse_biaff", "parse_corpus",
           "score_all_arcs", "score_labels", "specialize", "train_biaff", "EncoderParams", "Vocab", "encode",
           "ShapeError", "biaffine_apply", "gate_fuse", "Adam"]
