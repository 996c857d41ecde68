"""Experiment configuration: JSON documents, validated strictly.

Every section is checked before any computation runs: unknown keys are
rejected, required keys must be present, and values must have the right
type. Error messages carry the JSON path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .errors import ConfigError
from .linalg import SymmetricMatrix
from .losses import (Dataset, LossFunction, QuadraticLoss, RotInvToy,
                     SaddleToy, ScaleInvToy, load_digits64, load_idx,
                     synth_blobs)
from .losses.mlp import MlpModel
from .measures import SeededStream
from .optim import LrSchedule, SharpnessTracking, TrainConfig
from .sharpness import (CharPoly, Determinant, Frobenius, Moment, SpecPreset,
                        Trace)

LOSS_NAMES = ("saddle", "scale_inv", "rot_inv", "quadratic", "mlp")
DATASET_KINDS = ("idx", "digits64", "synth_blobs")
TRANSFORM_KINDS = ("diag_rescale", "rotation")
CHECK_MODES = ("coupled", "oracle")

_TYPE_NAMES = {bool: "bool", int: "int", float: "number", str: "string",
               list: "list", dict: "object"}


def _typecheck(value, expected, path: str):
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected int, got {value!r}")
        return value
    if not isinstance(value, expected):
        raise ConfigError(
            f"{path}: expected {_TYPE_NAMES.get(expected, expected)}, got {value!r}")
    return value


class _Section:
    """One validated JSON object: tracks which keys the parser consumed and
    rejects anything left over."""

    def __init__(self, doc: Any, path: str):
        _typecheck(doc, dict, path)
        self.doc = doc
        self.path = path
        self._seen: set[str] = set()

    def has(self, key: str) -> bool:
        return key in self.doc

    def get(self, key: str, expected, default=None, required: bool = False):
        if key not in self.doc:
            if required:
                raise ConfigError(f"{self.path}.{key}: missing required key")
            return default
        self._seen.add(key)
        return _typecheck(self.doc[key], expected, f"{self.path}.{key}")

    def child(self, key: str, required: bool = False) -> Optional["_Section"]:
        if key not in self.doc:
            if required:
                raise ConfigError(f"{self.path}.{key}: missing required section")
            return None
        self._seen.add(key)
        return _Section(self.doc[key], f"{self.path}.{key}")

    def finish(self) -> None:
        unknown = set(self.doc) - self._seen
        if unknown:
            raise ConfigError(
                f"{self.path}: unknown key(s) {sorted(unknown)}")


def _float_list(sec: _Section, key: str, required: bool = False,
                nonempty: bool = False) -> Optional[list[float]]:
    raw = sec.get(key, list, required=required)
    if raw is None:
        return None
    out = [_typecheck(v, float, f"{sec.path}.{key}[{i}]") for i, v in enumerate(raw)]
    if nonempty and not out:
        raise ConfigError(f"{sec.path}.{key}: must not be empty")
    return out


def _int_list(sec: _Section, key: str, required: bool = False,
              nonempty: bool = False) -> Optional[list[int]]:
    raw = sec.get(key, list, required=required)
    if raw is None:
        return None
    out = [_typecheck(v, int, f"{sec.path}.{key}[{i}]") for i, v in enumerate(raw)]
    if nonempty and not out:
        raise ConfigError(f"{sec.path}.{key}: must not be empty")
    return out


def _matrix(sec: _Section, key: str, required: bool = False) -> Optional[np.ndarray]:
    raw = sec.get(key, list, required=required)
    if raw is None:
        return None
    try:
        m = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{sec.path}.{key}: not a numeric matrix") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{sec.path}.{key}: expected a square matrix")
    return m


# ---------------------------------------------------------------------------
# Section parsers
# ---------------------------------------------------------------------------


@dataclass
class DatasetSpec:
    kind: str
    images: Optional[str] = None
    labels: Optional[str] = None
    train_count: Optional[int] = None
    test_count: Optional[int] = None
    classes: int = 3
    per_class: int = 100
    dim: int = 2
    spread: float = 0.3
    seed: int = 0

    def load(self) -> tuple[Dataset, Optional[Dataset]]:
        if self.kind == "idx":
            full = load_idx(self.images, self.labels)
            n_train = self.train_count or full.size
            n_test = self.test_count or 0
            if n_train + n_test > full.size:
                raise ConfigError(
                    f"dataset has {full.size} examples, asked for "
                    f"{n_train} train + {n_test} test")
            train = full.take(np.arange(n_train))
            test = (full.take(np.arange(n_train, n_train + n_test))
                    if n_test else None)
            return train, test
        if self.kind == "digits64":
            train, test = load_digits64(self.train_count or 1437)
            if self.test_count:
                test = test.take(np.arange(min(self.test_count, test.size)))
            return train, test
        blobs = synth_blobs(self.classes, self.per_class, self.dim, self.spread,
                            SeededStream(self.seed))
        n_test = self.test_count or 0
        if n_test:
            test_blobs = synth_blobs(self.classes, max(1, n_test // self.classes),
                                     self.dim, self.spread,
                                     SeededStream(self.seed + 1))
            return blobs, test_blobs
        return blobs, None


def parse_dataset(sec: _Section) -> DatasetSpec:
    kind = sec.get("kind", str, required=True)
    if kind not in DATASET_KINDS:
        raise ConfigError(f"{sec.path}.kind: must be one of {DATASET_KINDS}")
    ds = DatasetSpec(kind=kind)
    if kind == "idx":
        ds.images = sec.get("images", str, required=True)
        ds.labels = sec.get("labels", str, required=True)
        ds.train_count = sec.get("train_count", int)
        ds.test_count = sec.get("test_count", int)
    elif kind == "digits64":
        ds.train_count = sec.get("train_count", int)
        ds.test_count = sec.get("test_count", int)
    else:
        ds.classes = sec.get("classes", int, default=3)
        ds.per_class = sec.get("per_class", int, default=100)
        ds.dim = sec.get("dim", int, default=2)
        ds.spread = sec.get("spread", float, default=0.3)
        ds.seed = sec.get("seed", int, default=0)
        ds.test_count = sec.get("test_count", int)
    sec.finish()
    return ds


@dataclass
class LossSpec:
    name: str
    point: Optional[np.ndarray] = None
    dim: int = 2
    matrix: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    hidden: tuple[int, ...] = (128, 128, 128)
    activation: str = "relu"
    head: str = "softmax_ce"
    dataset: Optional[DatasetSpec] = None

    def build(self) -> LossFunction:
        if self.name == "saddle":
            return SaddleToy()
        if self.name == "scale_inv":
            return ScaleInvToy()
        if self.name == "rot_inv":
            return RotInvToy(self.dim)
        if self.name == "quadratic":
            return QuadraticLoss(SymmetricMatrix(self.matrix), self.center)
        raise ConfigError(f"loss {self.name!r} is not an analytic loss")

    def build_model(self, input_dim: int, num_classes: int) -> MlpModel:
        sizes = (input_dim,) + tuple(self.hidden) + (num_classes,)
        return MlpModel(sizes, activation=self.activation, head=self.head)


def parse_loss(sec: _Section) -> LossSpec:
    name = sec.get("name", str, required=True)
    if name not in LOSS_NAMES:
        raise ConfigError(f"{sec.path}.name: must be one of {LOSS_NAMES}")
    spec = LossSpec(name=name)
    pt = _float_list(sec, "point")
    if pt is not None:
        spec.point = np.asarray(pt, dtype=float)
    if name == "rot_inv":
        spec.dim = sec.get("dim", int, default=2)
    if name == "quadratic":
        spec.matrix = _matrix(sec, "matrix", required=True)
        center = _float_list(sec, "center")
        spec.center = None if center is None else np.asarray(center)
    if name == "mlp":
        hidden = _int_list(sec, "hidden")
        if hidden is not None:
            spec.hidden = tuple(hidden)
        spec.activation = sec.get("activation", str, default="relu")
        spec.head = sec.get("head", str, default="softmax_ce")
        spec.dataset = parse_dataset(sec.child("dataset", required=True))
    sec.finish()
    if name != "mlp" and spec.point is None:
        spec.point = np.zeros(spec.dim if name == "rot_inv" else 2)
        if name == "quadratic":
            spec.point = np.zeros(spec.matrix.shape[0])
    return spec


def parse_preset(sec: _Section) -> SpecPreset:
    name = sec.get("preset", str, required=True)
    if name == "trace":
        preset = Trace()
    elif name == "frobenius":
        preset = Frobenius()
    elif name == "determinant":
        preset = Determinant(sec.get("half_width", float, required=True))
    elif name == "moment":
        preset = Moment(sec.get("degree", int, required=True),
                        sec.get("measure", str, default="gaussian"))
    elif name == "charpoly":
        preset = CharPoly(sec.get("sigma", float, required=True))
    else:
        raise ConfigError(f"{sec.path}.preset: unknown preset {name!r}")
    sec.finish()
    return preset


def parse_optimizer(sec: _Section) -> TrainConfig:
    preset = None
    spec_sec = sec.child("spec")
    if spec_sec is not None:
        preset = parse_preset(spec_sec)
    cfg = TrainConfig(
        eta=sec.get("eta", float, required=True),
        rho=sec.get("rho", float, default=0.0),
        n_samples=sec.get("n", int, default=1),
        lam=sec.get("lambda", float, default=0.0),
        epochs=sec.get("epochs", int, default=0),
        batch_size=sec.get("batch_size", int, default=0),
        momentum=sec.get("momentum", float, default=0.0),
        schedule=LrSchedule(decay=sec.get("lr_decay", float, default=0.1),
                            period_epochs=sec.get("lr_period", int, default=50)),
        seed=sec.get("seed", int, default=0),
        optimizer=sec.get("kind", str, default="sgd"),
        preset=preset,
        det_half_width=sec.get("det_half_width", float, default=0.01),
    )
    sec.finish()
    cfg.validate()
    return cfg


@dataclass
class StudySpec:
    lambdas: Optional[list[float]] = None
    rhos: Optional[list[float]] = None
    seeds: Optional[list[int]] = None


def parse_study(sec: Optional[_Section]) -> StudySpec:
    if sec is None:
        return StudySpec()
    out = StudySpec(
        lambdas=_float_list(sec, "lambdas"),
        rhos=_float_list(sec, "rhos"),
        seeds=_int_list(sec, "seeds"),
    )
    sec.finish()
    return out


def parse_tracking(sec: Optional[_Section]) -> SharpnessTracking:
    if sec is None:
        return SharpnessTracking()
    out = SharpnessTracking(
        trace=sec.get("trace", bool, default=False),
        frob_sq=sec.get("frob_sq", bool, default=False),
        probes=sec.get("probes", int, default=100),
        subsample=sec.get("subsample", int, default=1280),
    )
    sec.finish()
    return out


# ---------------------------------------------------------------------------
# Per-command configs
# ---------------------------------------------------------------------------


@dataclass
class OracleConfig:
    loss: LossSpec
    presets: list[SpecPreset]
    samples: int
    seed: int
    out_dir: Optional[str]


@dataclass
class EstimateConfig:
    loss: LossSpec
    preset: SpecPreset
    rhos: list[float]
    samples: int
    seed: int
    out_dir: Optional[str]


@dataclass
class TrainCommandConfig:
    loss: LossSpec
    optimizer: TrainConfig
    study: StudySpec
    tracking: SharpnessTracking
    out_dir: Optional[str]


@dataclass
class InvarianceConfig:
    loss: LossSpec
    preset: SpecPreset
    mode: str
    transform: str
    count: int
    scales: Optional[list[float]]
    angles: Optional[list[float]]
    points: Optional[list[list[float]]]
    samples: int
    seed: int
    out_dir: Optional[str]


@dataclass
class UniversalityConfig:
    matrix: Optional[np.ndarray]
    loss: Optional[LossSpec]
    mc_samples: int
    seed: int
    out_dir: Optional[str]


def _out_dir(root: _Section) -> Optional[str]:
    out = root.child("output")
    if out is None:
        return None
    d = out.get("dir", str)
    out.finish()
    return d


def parse_config(doc: Any, command: str):
    root = _Section(doc, "$")
    if command == "oracle":
        loss = parse_loss(root.child("loss", required=True))
        presets_raw = root.get("presets", list, required=True)
        if not presets_raw:
            raise ConfigError("$.presets: must not be empty")
        presets = [parse_preset(_Section(p, f"$.presets[{i}]"))
                   for i, p in enumerate(presets_raw)]
        cfg = OracleConfig(loss=loss, presets=presets,
                           samples=root.get("samples", int, default=100_000),
                           seed=root.get("seed", int, default=0),
                           out_dir=_out_dir(root))
    elif command == "estimate":
        loss = parse_loss(root.child("loss", required=True))
        preset = parse_preset(root.child("spec", required=True))
        rhos = _float_list(root, "rhos", required=True, nonempty=True)
        if any(r <= 0 for r in rhos):
            raise ConfigError("$.rhos: perturbation radii must be positive")
        cfg = EstimateConfig(loss=loss, preset=preset, rhos=rhos,
                             samples=root.get("samples", int, default=100_000),
                             seed=root.get("seed", int, default=0),
                             out_dir=_out_dir(root))
    elif command in ("train", "bias-study"):
        loss = parse_loss(root.child("loss", required=True))
        optimizer = parse_optimizer(root.child("optimizer", required=True))
        study = parse_study(root.child("study"))
        tracking = parse_tracking(root.child("tracking"))
        if command == "bias-study":
            if loss.name != "mlp":
                raise ConfigError("$.loss: bias-study requires an mlp loss")
            if not study.lambdas:
                raise ConfigError("$.study.lambdas: bias-study needs a nonempty sweep")
            if not (tracking.frob_sq or tracking.trace):
                tracking = SharpnessTracking(trace=tracking.trace, frob_sq=True,
                                             probes=tracking.probes,
                                             subsample=tracking.subsample)
        cfg = TrainCommandConfig(loss=loss, optimizer=optimizer, study=study,
                                 tracking=tracking, out_dir=_out_dir(root))
    elif command == "invariance-check":
        loss = parse_loss(root.child("loss", required=True))
        if loss.name not in ("scale_inv", "rot_inv"):
            raise ConfigError(
                "$.loss: invariance checks support scale_inv and rot_inv losses")
        preset = parse_preset(root.child("spec", required=True))
        tr = root.child("transform", required=True)
        kind = tr.get("kind", str, required=True)
        if kind not in TRANSFORM_KINDS:
            raise ConfigError(f"$.transform.kind: must be one of {TRANSFORM_KINDS}")
        count = tr.get("count", int, default=5)
        scales = _float_list(tr, "scales")
        angles = _float_list(tr, "angles")
        tr.finish()
        mode = root.get("mode", str, default="coupled")
        if mode not in CHECK_MODES:
            raise ConfigError(f"$.mode: must be one of {CHECK_MODES}")
        points_raw = root.get("points", list)
        points = None
        if points_raw is not None:
            points = [[_typecheck(v, float, f"$.points[{i}][{j}]")
                       for j, v in enumerate(row)]
                      for i, row in enumerate(points_raw)]
        cfg = InvarianceConfig(loss=loss, preset=preset, mode=mode,
                               transform=kind, count=count, scales=scales,
                               angles=angles, points=points,
                               samples=root.get("samples", int, default=20_000),
                               seed=root.get("seed", int, default=0),
                               out_dir=_out_dir(root))
    elif command == "universality-demo":
        matrix = _matrix(root, "matrix")
        loss = None
        loss_sec = root.child("loss")
        if loss_sec is not None:
            loss = parse_loss(loss_sec)
        if (matrix is None) == (loss is None):
            raise ConfigError("$: provide exactly one of 'matrix' or 'loss'")
        cfg = UniversalityConfig(matrix=matrix, loss=loss,
                                 mc_samples=root.get("mc_samples", int, default=0),
                                 seed=root.get("seed", int, default=0),
                                 out_dir=_out_dir(root))
    else:
        raise ConfigError(f"unknown command {command!r}")
    root.finish()
    return cfg


def load_config_file(path: str, command: str):
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(doc, command)
