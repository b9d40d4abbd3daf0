"""Batch audit: one counterfactual per test instance per generator, scored
for proximity, connectedness and (optionally) stability."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import multiprocessing
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..classifiers import Classifier, accuracy, train_knn, train_rbf_svm
from ..dataset import (Dataset, DatasetSplit, MinMaxScaler, correctly_predicted_subset,
                       load_csv, train_test_split)
from ..diagnostics import (DiagnosticError, connectedness, default_epsilon, proximity,
                           stability)
from ..generators import GENERATORS, NoCounterfactualFound
from .config import ConfigError, ExperimentConfig, resolve_generator

log = logging.getLogger(__name__)

HIST_EDGES = tuple(0.5 * k for k in range(11))  # [0, 5) in steps of 0.5, then overflow
PROXIMITY_BAND = 3.0


def instance_seed(master_seed: int, generator_index: int, side: str, index: int) -> int:
    """Seed for explaining row ``index`` of the ``side`` ("test"/"train") split."""
    tag = 0 if side == "test" else 1
    ss = np.random.SeedSequence([master_seed, generator_index, tag, index])
    return int(ss.generate_state(1)[0])


@dataclass
class Experiment:
    cfg: ExperimentConfig
    data: Dataset
    split: DatasetSplit
    classifier: Classifier
    generator_configs: list
    same_class: dict[int, Dataset]
    epsilons: dict[int, float | None]
    stability_data: Dataset | None = None
    stability_eps: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def train(self) -> Dataset:
        return self.split.train

    @property
    def test(self) -> Dataset:
        return self.split.test


def train_classifier(cfg: ExperimentConfig, train: Dataset) -> Classifier:
    ccfg = cfg.classifier.build_config()
    if cfg.classifier.kind == "rbf_svm":
        return train_rbf_svm(train, ccfg)
    return train_knn(train, ccfg)


def load_split(cfg: ExperimentConfig) -> tuple[Dataset, DatasetSplit]:
    data = load_csv(cfg.dataset_path(), cfg.dataset.label_column, cfg.dataset.features)
    split = train_test_split(data, cfg.split.train_fraction, cfg.split.seed)
    if cfg.dataset.scale:
        scaler = MinMaxScaler().fit(split.train)
        split = dataclasses.replace(split, train=scaler.transform(split.train),
                                    test=scaler.transform(split.test))
        data = scaler.transform(data)
    return data, split


def prepare(cfg: ExperimentConfig) -> Experiment:
    data, split = load_split(cfg)
    f = train_classifier(cfg, split.train)
    gen_cfgs = [resolve_generator(g, split.train.X) for g in cfg.generators]
    metric = cfg.diagnostics.metric

    same_class, epsilons = {}, {}
    for label in range(data.n_classes):
        sub = correctly_predicted_subset(f, split.train, label)
        same_class[label] = sub
        if cfg.diagnostics.epsilon != "auto":
            epsilons[label] = float(cfg.diagnostics.epsilon)
        elif len(sub) >= 2:
            epsilons[label] = default_epsilon(sub, metric)
        else:
            epsilons[label] = None

    exp = Experiment(cfg, data, split, f, gen_cfgs, same_class, epsilons)
    if cfg.diagnostics.stability:
        pool = split.train if cfg.diagnostics.stability_data == "train" else split.test
        exp.stability_data = pool
        se = cfg.diagnostics.stability_epsilon
        exp.stability_eps = default_epsilon(split.train) if se == "auto" else float(se)
    return exp


def explain(exp: Experiment, g: int, side: str, index: int, x):
    """Run generator ``g`` on a point with its derived seed (memoised)."""
    key = (g, side, index)
    if key not in exp._cache:
        cfg = dataclasses.replace(exp.generator_configs[g],
                                  seed=instance_seed(exp.cfg.master_seed, g, side, index))
        fn = GENERATORS[exp.cfg.generators[g].kind][1]
        try:
            exp._cache[key] = fn(x, exp.classifier, cfg)
        except NoCounterfactualFound as exc:
            exp._cache[key] = exc
    out = exp._cache[key]
    if isinstance(out, Exception):
        raise out
    return out


def audit_instance(exp: Experiment, i: int) -> list[dict]:
    x = exp.test.X[i]
    src = int(exp.classifier.predict(x))
    rows = []
    for g, section in enumerate(exp.cfg.generators):
        row = {"instance": i, "generator": section.name, "source_label": src, "x": x,
               "failed": False, "error": "", "cf": None, "cf_label": None,
               "distance_l2": None, "evaluations": None, "proximity": None,
               "proximity_a0": None, "proximity_numerator": None,
               "proximity_denominator": None, "connected": None, "epsilon": None,
               "stability": None, "stability_witness": None, "stability_neighbors": None,
               "stability_failed": None}
        try:
            res = explain(exp, g, "test", i, x)
        except NoCounterfactualFound as exc:
            row.update(failed=True, error=str(exc))
            rows.append(row)
            continue
        lab = res.counterfactual_label
        row.update(cf=res.counterfactual, cf_label=lab, distance_l2=res.distance_l2,
                   evaluations=res.evaluations)
        metric = exp.cfg.diagnostics.metric
        same = exp.same_class[lab]
        if len(same) >= 2:
            try:
                p = proximity(res.counterfactual, same, metric)
                row.update(proximity=p.value, proximity_a0=p.a0_index,
                           proximity_numerator=p.numerator, proximity_denominator=p.denominator)
            except DiagnosticError:
                pass
        eps = exp.epsilons[lab]
        if eps is not None and len(same) >= 1:
            c = connectedness(res.counterfactual, same, eps, metric)
            row.update(connected=c.connected, epsilon=eps)
        if exp.stability_data is not None:
            side = exp.cfg.diagnostics.stability_data
            pool = exp.stability_data

            def explainer(j, point, g=g, side=side):
                return explain(exp, g, side, j, point).counterfactual

            try:
                s = stability(x, pool, explainer, exp.stability_eps,
                              x_explanation=res.counterfactual)
                row.update(stability=s.value, stability_witness=s.witness_index,
                           stability_neighbors=s.n_neighbors, stability_failed=s.n_failed)
            except DiagnosticError:
                pass
        rows.append(row)
    return rows


_WORKER_EXP: Experiment | None = None


def _init_worker(exp: Experiment) -> None:
    global _WORKER_EXP
    _WORKER_EXP = exp


def _work(i: int) -> list[dict]:
    return audit_instance(_WORKER_EXP, i)


def audit_all(exp: Experiment, workers: int = 1) -> list[dict]:
    indices = list(range(len(exp.test)))
    if workers <= 1:
        per_instance = [audit_instance(exp, i) for i in indices]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker,
                                 initargs=(exp,)) as pool:
            per_instance = list(pool.map(_work, indices, chunksize=max(1, len(indices) // (4 * workers))))
    rows = [r for group in per_instance for r in group]
    order = {g.name: k for k, g in enumerate(exp.cfg.generators)}
    rows.sort(key=lambda r: (r["instance"], order[r["generator"]]))
    return rows


def _summary(values) -> dict | None:
    if not values:
        return None
    v = np.sort(np.asarray(values, dtype=float))
    return {"n": len(v), "min": float(v[0]), "median": float(np.median(v)), "max": float(v[-1])}


def proximity_histogram(values) -> dict:
    v = np.asarray(values, dtype=float)
    counts = [int(np.sum((v >= lo) & (v < hi))) for lo, hi in zip(HIST_EDGES, HIST_EDGES[1:])]
    counts.append(int(np.sum(v >= HIST_EDGES[-1])))
    return {"edges": list(HIST_EDGES), "counts": counts}


def aggregate(rows: list[dict], exp: Experiment) -> dict:
    gens = {}
    for section in exp.cfg.generators:
        mine = [r for r in rows if r["generator"] == section.name]
        ok = [r for r in mine if not r["failed"]]
        prox = [r["proximity"] for r in ok if r["proximity"] is not None]
        conn = [r["connected"] for r in ok if r["connected"] is not None]
        stab = [r["stability"] for r in ok if r["stability"] is not None]
        gens[section.name] = {
            "kind": section.kind,
            "n": len(mine),
            "n_success": len(ok),
            "success_rate": len(ok) / len(mine) if mine else 0.0,
            "mean_distance_l2": float(np.mean([r["distance_l2"] for r in ok])) if ok else None,
            "mean_evaluations": float(np.mean([r["evaluations"] for r in ok])) if ok else None,
            "proximity": {
                "n": len(prox),
                "histogram": proximity_histogram(prox),
                "fraction_in_0_3": (sum(p <= PROXIMITY_BAND for p in prox) / len(prox)) if prox else None,
                "summary": _summary(prox),
            },
            "connectedness": {
                "n": len(conn),
                "fraction_not_connected": (sum(not c for c in conn) / len(conn)) if conn else None,
            },
            "stability": _summary(stab),
        }
    return {
        "test_accuracy": accuracy(exp.classifier, exp.test),
        "train_accuracy": accuracy(exp.classifier, exp.train),
        "n_train": len(exp.train),
        "n_test": len(exp.test),
        "class_names": list(exp.data.class_names),
        "epsilon_per_class": {exp.data.class_names[k]: v for k, v in exp.epsilons.items()},
        "generators": gens,
    }


# ---------------------------------------------------------------- output files

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v).replace(",", ";").replace("\n", " ")


ROW_FIELDS = ("instance", "generator", "failed", "error", "source_label", "cf_label",
              "distance_l2", "evaluations", "proximity", "proximity_a0",
              "proximity_numerator", "proximity_denominator", "connected", "epsilon",
              "stability", "stability_witness", "stability_neighbors", "stability_failed")


def audit_header(feature_names) -> list[str]:
    head = list(ROW_FIELDS[:6])
    head += [f"x_{n}" for n in feature_names] + [f"cf_{n}" for n in feature_names]
    return head + list(ROW_FIELDS[6:])


def write_rows(rows: list[dict], feature_names, path) -> None:
    d = len(feature_names)
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(audit_header(feature_names)) + "\n")
        for r in rows:
            cells = [_fmt(r[k]) for k in ROW_FIELDS[:6]]
            cells += [_fmt(v) for v in r["x"]]
            cells += [_fmt(v) for v in r["cf"]] if r["cf"] is not None else [""] * d
            cells += [_fmt(r[k]) for k in ROW_FIELDS[6:]]
            fh.write(",".join(cells) + "\n")


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def run_meta(exp: Experiment, elapsed: float, workers: int) -> dict:
    return {
        "config": exp.cfg.to_json(),
        "master_seed": exp.cfg.master_seed,
        "workers": workers,
        "elapsed_seconds": round(elapsed, 3),
        "generator_configs": [dataclasses.asdict(c) for c in exp.generator_configs],
        "classifier_converged": bool(getattr(exp.classifier, "converged", True)),
        "versions": {"cfaudit": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }


def run_audit(cfg: ExperimentConfig, workers: int = 1, out_dir=None,
              write: bool = True, figures: bool | None = None):
    """Run the audit described by ``cfg``; returns ``(rows, aggregate)``.

    With ``write`` the rows, aggregate, run metadata and (for 2-D data)
    figures are stored in ``out_dir`` (default: the config's output_dir).
    """
    t0 = time.perf_counter()
    exp = prepare(cfg)
    if not getattr(exp.classifier, "converged", True):
        log.warning("classifier training did not converge; results are still produced")
    rows = audit_all(exp, workers)
    for r in rows:
        if not r["failed"] and r["cf_label"] == r["source_label"]:
            raise RuntimeError(f"invalid counterfactual for instance {r['instance']}")
    agg = aggregate(rows, exp)
    if write:
        out = Path(out_dir) if out_dir is not None else cfg.output_path()
        out.mkdir(parents=True, exist_ok=True)
        write_rows(rows, exp.data.feature_names, out / "audit_rows.csv")
        (out / "aggregate.json").write_text(_json(agg))
        (out / "run_meta.json").write_text(_json(run_meta(exp, time.perf_counter() - t0, workers)))
        if (cfg.figures if figures is None else figures) and exp.data.n_features == 2:
            from .plotting import render_audit_figures
            render_audit_figures(exp, rows, agg, out)
    return rows, agg


__all__ = ["ConfigError", "Experiment", "prepare", "run_audit", "audit_all", "aggregate",
           "write_rows", "instance_seed"]
