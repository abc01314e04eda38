"""Flat ``key = value`` experiment configuration.

Keys are dotted (``feature.hash_bits``, ``biaff.epochs``...).  Unknown keys
are rejected; ``PARSELAB_SEED`` in the environment overrides ``seed``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from .dcst import DCSTConfig, TaggerConfig
from .features import FeatureConfig
from .graph_parser import MarginConfig
from .l2s import L2SConfig
from .neural.biaff import BiaffConfig
from .transition import EarlyUpdateConfig

SEED_ENV = "PARSELAB_SEED"


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _list(v: str):
    return tuple(x.strip() for x in v.split(",") if x.strip())


def _choice(*options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return v
    return parse


# key -> (parser, default)
SCHEMA: Dict[str, tuple] = {
    "seed": (int, "0"),
    "feature.hash_bits": (int, "22"),
    "feature.use_morph": (_bool, "true"),
    "feature.free_word_order": (_bool, "true"),
    "feature.position_templates": (_bool, "true"),
    "graph.epochs": (int, "10"),
    "graph.loss": (_choice("margin", "perceptron"), "margin"),
    "graph.decoder": (_choice("cle", "eisner"), "cle"),
    "graph.shuffle": (_bool, "true"),
    "arceager.epochs": (int, "10"),
    "arceager.beam": (int, "8"),
    "arceager.system": (_choice("arc-eager", "arc-standard", "arc-hybrid"), "arc-eager"),
    "arceager.nonprojective": (_choice("projectivize", "skip"), "projectivize"),
    "arceager.shuffle": (_bool, "true"),
    "l2s.passes": (int, "10"),
    "l2s.beta0": (float, "1.0"),
    "l2s.beta_decay": (float, "0.5"),
    "l2s.rollout": (_choice("reference", "learned", "mix"), "reference"),
    "l2s.beta_out": (float, "0.5"),
    "l2s.labeled_loss": (_bool, "false"),
    "l2s.deviation_fraction": (float, "1.0"),
    "l2s.nonprojective": (_choice("projectivize", "skip"), "projectivize"),
    "l2s.shuffle": (_bool, "true"),
    "biaff.epochs": (int, "200"),
    "biaff.batch_size": (int, "10"),
    "biaff.lr": (float, "2e-3"),
    "biaff.beta1": (float, "0.9"),
    "biaff.beta2": (float, "0.9"),
    "biaff.clip": (float, "5.0"),
    "biaff.word_dim": (int, "100"),
    "biaff.morph_dim": (int, "25"),
    "biaff.hidden": (int, "100"),
    "biaff.layers": (int, "2"),
    "biaff.d_arc": (int, "100"),
    "biaff.d_label": (int, "50"),
    "biaff.unk_p": (float, "0.25"),
    "biaff.dtype": (_choice("float64", "float32"), "float64"),
    "biaff.shuffle": (_bool, "true"),
    "biaff.target_uas": (float, "1.01"),
    "dcst.tasks": (_list, "children,rootdist,relpos"),
    "dcst.freeze_aux": (_bool, "true"),
    "dcst.fusion": (_choice("mean", "per-task"), "mean"),
    "dcst.tagger_max_epochs": (int, "100"),
    "dcst.tagger_patience": (int, "5"),
    "dcst.tagger_dev_fraction": (float, "0.1"),
    "eval.min_support": (int, "0"),
    "eval.sentlen_min_support": (int, "5"),
    "eval.dimensions": (_list, "sentence-length,dependency-length,nonproj-degree,root-distance"),
    "permute.mode": (_choice("seeded-shuffle", "identity"), "seeded-shuffle"),
}


@dataclass
class ExperimentConfig:
    raw: Dict[str, str] = field(default_factory=dict)
    values: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, env: Optional[Dict[str, str]] = None) -> "ExperimentConfig":
        raw: Dict[str, str] = {}
        for no, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {no}: expected 'key = value'")
            k, v = (x.strip() for x in line.split("=", 1))
            if k not in SCHEMA:
                raise ConfigError(f"line {no}: unknown key {k!r}")
            if k in raw:
                raise ConfigError(f"line {no}: duplicate key {k!r}")
            raw[k] = v
        return cls.from_dict(raw, env)

    @classmethod
    def from_dict(cls, raw: Dict[str, str], env: Optional[Dict[str, str]] = None) -> "ExperimentConfig":
        env = os.environ if env is None else env
        merged = {k: d for k, (_, d) in SCHEMA.items()}
        for k, v in raw.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown key {k!r}")
            merged[k] = str(v)
        if env.get(SEED_ENV, "").strip():
            merged["seed"] = env[SEED_ENV].strip()
        values = {}
        for k, v in merged.items():
            try:
                values[k] = SCHEMA[k][0](v)
            except ValueError as e:
                raise ConfigError(f"{k}: {e}") from None
        return cls(merged, values)

    @classmethod
    def load(cls, path=None, env=None) -> "ExperimentConfig":
        if path is None:
            return cls.from_dict({}, env)
        with open(path, encoding="utf-8") as f:
            return cls.from_text(f.read(), env)

    def __getitem__(self, key: str):
        return self.values[key]

    def resolved(self) -> str:
        """Every key with its effective value, one ``key = value`` per line."""
        return "".join(f"{k} = {self.raw[k]}\n" for k in sorted(self.raw))

    def _section(self, prefix: str) -> Dict[str, object]:
        return {k[len(prefix) + 1:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    # -- typed views ------------------------------------------------------------

    def feature(self) -> FeatureConfig:
        return FeatureConfig(**self._section("feature"))

    def margin(self) -> MarginConfig:
        s = self._section("graph")
        return MarginConfig(s["epochs"], s["loss"], s["decoder"], s["shuffle"], self["seed"], self.feature())

    def early_update(self) -> EarlyUpdateConfig:
        s = self._section("arceager")
        return EarlyUpdateConfig(s["epochs"], s["beam"], s["system"], s["nonprojective"], s["shuffle"],
                                 self["seed"], self.feature())

    def l2s(self) -> L2SConfig:
        s = self._section("l2s")
        return L2SConfig(s["passes"], s["beta0"], s["beta_decay"], s["rollout"], s["beta_out"], s["labeled_loss"],
                         s["deviation_fraction"], s["nonprojective"], s["shuffle"], self["seed"], self.feature())

    def biaff(self) -> BiaffConfig:
        s = self._section("biaff")
        s.pop("target_uas")
        return BiaffConfig(seed=self["seed"], **s)

    def dcst(self) -> DCSTConfig:
        s = self._section("dcst")
        tagger = TaggerConfig(max_epochs=s["tagger_max_epochs"], patience=s["tagger_patience"],
                              dev_fraction=s["tagger_dev_fraction"], batch_size=self["biaff.batch_size"],
                              lr=self["biaff.lr"], seed=self["seed"])
        return DCSTConfig(self.biaff(), tagger, s["tasks"], s["freeze_aux"], s["fusion"])
