"""Experiment configuration files.

A config is a JSON object; unknown keys anywhere are rejected. Minimal
example::

    {
      "dataset": {"path": "bundled:iris.csv", "label_column": "species",
                  "features": ["sepal_length", "sepal_width"]},
      "split": {"train_fraction": 0.7, "seed": 3},
      "classifier": {"kind": "rbf_svm", "c": 1.0},
      "generators": [{"kind": "growing_spheres"}, {"kind": "hcls"}],
      "master_seed": 0
    }

Relative dataset paths resolve against the config file's directory;
``bundled:<name>`` points at a CSV shipped with the package. Generator
parameters given as ``"auto"`` (or omitted, where the default is data
dependent) are scaled to the diameter of the training data.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from ..classifiers import KnnConfig, RbfSvmConfig
from ..dataset import Metric, bundled_path
from ..generators import GENERATORS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSection:
    path: str
    label_column: str
    features: tuple[str, ...] | None = None
    scale: bool = False


@dataclass(frozen=True)
class SplitSection:
    train_fraction: float = 0.7
    seed: int = 0


@dataclass(frozen=True)
class ClassifierSection:
    kind: str = "rbf_svm"
    params: dict = field(default_factory=dict)

    def build_config(self):
        cls = RbfSvmConfig if self.kind == "rbf_svm" else KnnConfig
        return cls(**self.params)


@dataclass(frozen=True)
class GeneratorSection:
    kind: str
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DiagnosticsSection:
    metric: Metric = Metric.L2
    epsilon: float | str = "auto"
    stability: bool = False
    stability_epsilon: float | str = "auto"
    stability_data: str = "train"


@dataclass(frozen=True)
class GridSection:
    resolution: int = 200
    margin: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection
    split: SplitSection
    classifier: ClassifierSection
    generators: tuple[GeneratorSection, ...]
    diagnostics: DiagnosticsSection = DiagnosticsSection()
    grid: GridSection = GridSection()
    output_dir: str = "out"
    master_seed: int = 0
    figures: bool = True
    base_dir: Path = field(default=Path("."), compare=False)

    def dataset_path(self) -> Path:
        p = self.dataset.path
        if p.startswith("bundled:"):
            return bundled_path(p[len("bundled:"):])
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def output_path(self) -> Path:
        out = Path(self.output_dir)
        return out if out.is_absolute() else self.base_dir / out

    def to_json(self) -> dict:
        return {
            "dataset": {"path": self.dataset.path, "label_column": self.dataset.label_column,
                        "features": list(self.dataset.features) if self.dataset.features else None,
                        "scale": self.dataset.scale},
            "split": {"train_fraction": self.split.train_fraction, "seed": self.split.seed},
            "classifier": {"kind": self.classifier.kind, **self.classifier.params},
            "generators": [{"kind": g.kind, "name": g.name, **g.params} for g in self.generators],
            "diagnostics": {"metric": self.diagnostics.metric.value,
                            "epsilon": self.diagnostics.epsilon,
                            "stability": self.diagnostics.stability,
                            "stability_epsilon": self.diagnostics.stability_epsilon,
                            "stability_data": self.diagnostics.stability_data},
            "grid": {"resolution": self.grid.resolution, "margin": self.grid.margin},
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
            "figures": self.figures,
        }


def _section(raw: Any, where: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    missing = set(required) - set(raw)
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(sorted(missing))}")
    return raw


def _positive_or_auto(value, where):
    if value == "auto":
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
        raise ConfigError(f"{where}: expected a positive number or \"auto\"")
    return float(value)


def _generator(raw, i: int) -> GeneratorSection:
    where = f"generators[{i}]"
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError(f"{where}: expected an object with a 'kind'")
    kind = raw["kind"]
    if kind not in GENERATORS:
        raise ConfigError(f"{where}: unknown generator kind {kind!r}")
    cfg_cls = GENERATORS[kind][0]
    names = {f.name for f in fields(cfg_cls)} - {"seed"}
    params = dict(_section(raw, where, names | {"kind", "name"}))
    params.pop("kind")
    name = params.pop("name", kind)
    # values are checked in resolve_generator, once "auto" can be resolved
    return GeneratorSection(kind, str(name), params)


def resolve_generator(section: GeneratorSection, train_X, seed: int = 0):
    """Concrete generator config for ``section`` scaled to ``train_X``."""
    cfg_cls = GENERATORS[section.kind][0]
    params = {k: v for k, v in section.params.items() if v != "auto"}
    try:
        return cfg_cls.for_data(train_X, seed=seed, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"generator {section.name!r}: {exc}") from None


def parse_config(raw: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    top = _section(raw, "config",
                   {"dataset", "split", "classifier", "generators", "diagnostics", "grid",
                    "output_dir", "master_seed", "figures"},
                   {"dataset", "generators"})

    ds = _section(top["dataset"], "dataset", {"path", "label_column", "features", "scale"},
                  {"path", "label_column"})
    feats = ds.get("features")
    if feats is not None and (not isinstance(feats, list) or not all(isinstance(f, str) for f in feats)):
        raise ConfigError("dataset.features: expected a list of column names")
    dataset = DatasetSection(str(ds["path"]), str(ds["label_column"]),
                             tuple(feats) if feats else None, bool(ds.get("scale", False)))

    sp = _section(top.get("split", {}), "split", {"train_fraction", "seed"})
    split = SplitSection(float(sp.get("train_fraction", 0.7)), int(sp.get("seed", 0)))
    if not 0 < split.train_fraction < 1:
        raise ConfigError("split.train_fraction must lie in (0, 1)")

    cl = dict(top.get("classifier", {"kind": "rbf_svm"}))
    kind = cl.pop("kind", "rbf_svm")
    if kind not in ("rbf_svm", "knn"):
        raise ConfigError(f"classifier.kind: unknown classifier {kind!r}")
    allowed = {f.name for f in fields(RbfSvmConfig if kind == "rbf_svm" else KnnConfig)}
    _section(cl, "classifier", allowed)
    classifier = ClassifierSection(kind, cl)
    try:
        classifier.build_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"classifier: {exc}") from None

    gens = top["generators"]
    if not isinstance(gens, list) or not gens:
        raise ConfigError("generators: expected a non-empty list")
    generators = tuple(_generator(g, i) for i, g in enumerate(gens))
    if len({g.name for g in generators}) != len(generators):
        raise ConfigError("generators: names must be unique")

    dg = _section(top.get("diagnostics", {}), "diagnostics",
                  {"metric", "epsilon", "stability", "stability_epsilon", "stability_data"})
    try:
        metric = Metric.parse(dg.get("metric", "L2"))
    except ValueError as exc:
        raise ConfigError(f"diagnostics.metric: {exc}") from None
    stab_data = dg.get("stability_data", "train")
    if stab_data not in ("train", "test"):
        raise ConfigError("diagnostics.stability_data must be 'train' or 'test'")
    diagnostics = DiagnosticsSection(
        metric,
        _positive_or_auto(dg.get("epsilon", "auto"), "diagnostics.epsilon"),
        bool(dg.get("stability", False)),
        _positive_or_auto(dg.get("stability_epsilon", "auto"), "diagnostics.stability_epsilon"),
        stab_data,
    )

    gr = _section(top.get("grid", {}), "grid", {"resolution", "margin"})
    grid = GridSection(int(gr.get("resolution", 200)), float(gr.get("margin", 0.1)))
    if grid.resolution < 2 or grid.margin < 0:
        raise ConfigError("grid.resolution must be >= 2 and grid.margin >= 0")

    cfg = ExperimentConfig(dataset, split, classifier, generators, diagnostics, grid,
                           str(top.get("output_dir", "out")), int(top.get("master_seed", 0)),
                           bool(top.get("figures", True)), Path(base_dir))
    if not cfg.dataset_path().is_file():
        raise ConfigError(f"dataset.path: no such file {cfg.dataset_path()}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, path.parent)
