"""JSON experiment configuration (``"schema": 1``).

A configuration names models, switching probabilities and verification
suites::

    {
      "schema": 1,
      "seed": 7, "N": 1000, "eps": 1e-4, "horizon": 1.0, "out": "results",
      "limits": {"max_nodes": 1000000},
      "models": {
        "quarter": {"chars": {"atoms": [[-1.3862943611198906, 1.0]]}},
        "quarter_bblp": {"type": "bblp", "from_model": "quarter"}
      },
      "switches": {"keep_larger": {"kind": "canonical_halfline"}},
      "suites": {
        "fdd": {"kind": "fdd_equality", "model_a": "quarter", "model_b": "three_quarter",
                "times": [0.5, 1.0]}
      }
    }

Suites inherit ``N``, ``eps`` and ``horizon`` from the top level unless they
override them.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .bblp import BblpCharacteristics, gf_to_bblp_characteristics
from .cellsystem import CellModel, ResourceLimits
from .levy import ConfigurationError, JumpMeasure, SnlpCharacteristics, density_from_json
from .switching import SwitchProbability, switch_probability_from_json

SCHEMA_VERSION = 1

SUITE_KINDS = {
    "cumulant_martingale": ("model",),
    "fdd_equality": ("model_a", "model_b"),
    "self_similarity": ("model",),
    "excessive": ("model",),
    "potential": ("model",),
    "switching": ("model", "switch"),
    "coupled_symmetry": ("model_x", "model_y"),
    "bblp_correspondence": ("model",),
    "calibration": ("model",),
}


def _positive(doc: dict, key: str, default=None, integer: bool = False):
    v = doc.get(key, default)
    if v is None:
        return None
    try:
        v = int(v) if integer else float(v)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key!r} must be a number, got {v!r}") from None
    if not v > 0 or (not integer and not math.isfinite(v)):
        raise ConfigurationError(f"{key!r} must be positive and finite, got {v!r}")
    return v


def _measure_from_json(doc: dict | None) -> JumpMeasure:
    doc = doc or {}
    atoms = tuple((float(z), float(m)) for z, m in doc.get("atoms", []))
    dens = tuple(density_from_json(d) for d in doc.get("densities", []))
    return JumpMeasure(atoms, dens, float(doc.get("small_jump_cutoff", 0.0)))


def _bblp_from_json(doc: dict, cell_models: dict[str, CellModel]) -> BblpCharacteristics:
    src = doc.get("from_model")
    if src is not None:
        if src not in cell_models:
            raise ConfigurationError(f"bblp block refers to unknown cell model {src!r}")
        return gf_to_bblp_characteristics(cell_models[src].chars)
    return BblpCharacteristics(float(doc.get("sigma", 0.0)), float(doc.get("c", 0.0)),
                               _measure_from_json(doc.get("levy")), float(doc.get("kill", 0.0)),
                               _measure_from_json(doc.get("mu")))


@dataclass
class ExperimentConfig:
    seed: int
    N: int
    eps: float
    horizon: float
    out: str
    limits: ResourceLimits
    models: dict[str, CellModel] = field(default_factory=dict)
    bblp_models: dict[str, BblpCharacteristics] = field(default_factory=dict)
    switches: dict[str, SwitchProbability] = field(default_factory=dict)
    suites: dict[str, dict] = field(default_factory=dict)
    threads: int = 1
    snapshot_times: list[float] | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("configuration must be a JSON object")
        if doc.get("schema") != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema {doc.get('schema')!r}; expected {SCHEMA_VERSION}")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        N = _positive(doc, "N", 1000, integer=True)
        eps = _positive(doc, "eps", 1e-4)
        horizon = _positive(doc, "horizon", 1.0)
        threads = _positive(doc, "threads", 1, integer=True)
        try:
            limits = ResourceLimits.from_json(doc.get("limits"))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad limits block: {exc}") from None

        models: dict[str, CellModel] = {}
        bblp_docs = {}
        for name, m in (doc.get("models") or {}).items():
            if not isinstance(m, dict):
                raise ConfigurationError(f"model {name!r} must be an object")
            kind = m.get("type", "cell")
            if kind == "bblp":
                bblp_docs[name] = m
                continue
            if kind != "cell":
                raise ConfigurationError(f"model {name!r}: unknown type {kind!r}")
            try:
                chars = SnlpCharacteristics.from_json(m.get("chars", {}))
                models[name] = CellModel(chars, float(m.get("alpha", 0.0)), float(m.get("start_size", 1.0)),
                                         m.get("grid_step"))
            except ConfigurationError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigurationError(f"model {name!r}: {exc}") from None
        bblp_models = {}
        for name, m in bblp_docs.items():
            try:
                bblp_models[name] = _bblp_from_json(m, models)
            except ConfigurationError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigurationError(f"bblp model {name!r}: {exc}") from None

        switches = {}
        for name, s in (doc.get("switches") or {}).items():
            try:
                switches[name] = switch_probability_from_json(s)
            except ConfigurationError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigurationError(f"switch {name!r}: {exc}") from None

        suites = {}
        for name, s in (doc.get("suites") or {}).items():
            if not isinstance(s, dict):
                raise ConfigurationError(f"suite {name!r} must be an object")
            kind = s.get("kind")
            if kind not in SUITE_KINDS:
                raise ConfigurationError(f"suite {name!r}: unknown kind {kind!r}")
            for ref in SUITE_KINDS[kind]:
                target = s.get(ref)
                pool = switches if ref == "switch" else models
                if target not in pool:
                    raise ConfigurationError(f"suite {name!r}: {ref} {target!r} does not resolve")
            for key in ("N", "eps", "horizon"):
                if key in s:
                    _positive(s, key, integer=(key == "N"))
            suites[name] = dict(s)

        snap = doc.get("snapshot_times")
        if snap is not None:
            snap = [float(t) for t in snap]
            if any(not 0 <= t <= horizon for t in snap):
                raise ConfigurationError("snapshot_times must lie in [0, horizon]")
        return cls(seed, N, eps, horizon, str(doc.get("out", "results")), limits, models, bblp_models,
                   switches, suites, threads, snap, doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config: {exc}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def model(self, name: str) -> CellModel:
        if name not in self.models:
            raise ConfigurationError(f"unknown cell model {name!r}")
        return self.models[name]
