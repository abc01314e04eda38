"""Averaged linear model over a hashed feature space, with binary serialisation."""

from __future__ import annotations

import json
import struct
from typing import Any, Dict, Optional

import numpy as np

MAGIC = b"PLLM"
VERSION = 1


class ModelFormatError(ValueError):
    pass


class LinearModel:
    """Weight vector plus the bookkeeping needed for averaging.

    Averaging uses an accumulator: every update of size ``v`` at time ``c``
    also adds ``c * v`` to ``acc``, so the mean over the ``c - 1`` completed
    ticks is ``(c * w - acc) / (c - 1)``.
    """

    def __init__(self, hash_bits: int, header: Optional[Dict[str, Any]] = None):
        self.hash_bits = hash_bits
        self.weights = np.zeros(1 << hash_bits)
        self._acc = np.zeros(1 << hash_bits)
        self.averaged_weights: Optional[np.ndarray] = None
        self.update_count = 0
        self.clock = 1
        self.header: Dict[str, Any] = dict(header or {})

    @property
    def size(self) -> int:
        return 1 << self.hash_bits

    def tick(self) -> None:
        self.clock += 1

    def update(self, indices: np.ndarray, scale: float = 1.0, values: Optional[np.ndarray] = None) -> None:
        if len(indices) == 0:
            return
        vals = scale if values is None else scale * np.asarray(values, dtype=np.float64)
        np.add.at(self.weights, indices, vals)
        np.add.at(self._acc, indices, self.clock * np.broadcast_to(vals, np.shape(indices)))
        self.update_count += 1

    def finalize(self) -> None:
        """Mean of the weight vector over every completed ``tick``."""
        steps = self.clock - 1
        if steps == 0:
            self.averaged_weights = self.weights.copy()
        else:
            self.averaged_weights = (self.clock * self.weights - self._acc) / steps

    def active(self) -> np.ndarray:
        """Weights used for prediction: averaged once finalised."""
        return self.weights if self.averaged_weights is None else self.averaged_weights

    # -- serialisation -----------------------------------------------------

    def to_bytes(self) -> bytes:
        """Header JSON, then the nonzero slots: count, indices, weights, averaged weights."""
        header = dict(self.header)
        header.update(hash_bits=self.hash_bits, update_count=self.update_count, clock=self.clock)
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        avg = self.averaged_weights if self.averaged_weights is not None else self.weights
        idx = np.flatnonzero((self.weights != 0) | (avg != 0))
        parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<Q", idx.size),
                 idx.astype("<u8").tobytes(), self.weights[idx].astype("<f8").tobytes(),
                 avg[idx].astype("<f8").tobytes()]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LinearModel":
        if data[:4] != MAGIC:
            raise ModelFormatError("not a linear model file")
        if len(data) < 12:
            raise ModelFormatError("truncated linear model file")
        version, hlen = struct.unpack("<II", data[4:12])
        if version != VERSION:
            raise ModelFormatError(f"unsupported linear model version {version}")
        try:
            header = json.loads(data[12:12 + hlen].decode("utf-8"))
            bits = header.pop("hash_bits")
            update_count, clock = header.pop("update_count"), header.pop("clock")
        except (ValueError, KeyError) as e:
            raise ModelFormatError(f"corrupt linear model header: {e}") from None
        model = cls(bits)
        model.update_count, model.clock, model.header = update_count, clock, header
        off = 12 + hlen
        if len(data) < off + 8:
            raise ModelFormatError("truncated linear model file")
        (nnz,) = struct.unpack("<Q", data[off:off + 8])
        off += 8
        if len(data) != off + 24 * nnz:
            raise ModelFormatError("truncated linear model file")
        idx = np.frombuffer(data[off:off + 8 * nnz], dtype="<u8").astype(np.int64)
        if nnz and idx.max() >= model.size:
            raise ModelFormatError("weight index outside the hashed space")
        w = np.frombuffer(data[off + 8 * nnz:off + 16 * nnz], dtype="<f8")
        a = np.frombuffer(data[off + 16 * nnz:], dtype="<f8")
        model.weights[idx] = w
        model.averaged_weights = np.zeros(model.size)
        model.averaged_weights[idx] = a
        return model
