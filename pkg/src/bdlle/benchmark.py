"""Reproducible benchmark runs: sample, optionally embed, detect, score.

A :class:`RunConfig` is a plain JSON document.  Everything random derives
from its single ``seed``, and no output carries a timestamp, so rerunning a
config reproduces every file byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, datasets
from .diffusion import DmParams, denoise_detect, subsample_indices
from .evaluation import DEFAULT_GRID_K, f1_max, f1_max_cps
from .indicator import choose_epsilon, run_bdlle, select_epsilon_range
from .pointcloud import NeighborParams, build_index

SCHEMA_VERSION = 1
DETECTORS = ("bdlle",) + baselines.ALGORITHMS


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


# ------------------------------------------------------------------- configs
def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


@dataclass
class DetectorSpec:
    """``algo`` plus its options, e.g. ``bdlle:epsilon=1,reg=auto`` or ``border:k=50``."""

    algo: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algo not in DETECTORS:
            raise ConfigError(f"unknown detector {self.algo!r}; choose from {', '.join(DETECTORS)}")

    @classmethod
    def parse(cls, text: str):
        algo, _, rest = text.partition(":")
        options = {}
        for item in filter(None, rest.split(",")):
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigError(f"detector option {item!r} is not key=value")
            options[key.strip().replace("-", "_")] = _coerce(val.strip())
        return cls(algo.strip(), options)

    def label(self):
        return self.options.get("label", self.algo)


@dataclass
class RunConfig:
    datasets: list
    detectors: list
    seed: int = 0
    dm: dict | None = None
    grid_k: int = DEFAULT_GRID_K
    out_dir: str = "runs"
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if not self.datasets:
            raise ConfigError("no datasets configured")
        for ds in self.datasets:
            if ds.get("name") not in datasets.DATASETS:
                raise ConfigError(f"unknown dataset {ds.get('name')!r}")
            n = ds.get("n", datasets.DEFAULT_N[ds["name"]])
            if not isinstance(n, int) or n < 1:
                raise ConfigError(f"dataset {ds['name']!r}: n must be a positive integer, got {n!r}")
        if not self.detectors:
            raise ConfigError("no detectors configured")
        for det in self.detectors + [d for ds in self.datasets for d in ds.get("detectors", [])]:
            if "algo" not in det:
                raise ConfigError("detector entry without 'algo'")
            DetectorSpec(det["algo"], det.get("options", {}))
        if self.dm is not None:
            try:
                DmParams(self.dm["epsilon"], self.dm.get("ell", 3), self.dm.get("n_max"))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad dm section: {exc}") from exc
        if self.grid_k < 1:
            raise ConfigError("grid_k must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            return cls.from_json(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc

    def save(self, path):
        Path(path).write_text(self.to_json())


# ---------------------------------------------------------------- detectors
def _bdlle(cloud, opts, d, workers):
    scheme = opts.get("scheme", "ball")
    if scheme == "ball":
        eps = opts.get("epsilon", "auto")
        if eps == "auto":
            eps = choose_epsilon(select_epsilon_range(cloud, d), opts.get("epsilon_frac", 0.5))
        params = NeighborParams.ball(eps)
    else:
        params = NeighborParams.knn(opts["k"])
    reg = opts.get("reg", "auto")
    return run_bdlle(cloud, params, d, reg=reg, s=opts.get("s", 0.01),
                     threshold_frac=opts.get("threshold_frac", 0.5), workers=workers)


def detect(spec: DetectorSpec, cloud, d, workers=None):
    """Run one detector; returns (result, cps distances or None)."""
    opts = spec.options
    if spec.algo == "bdlle":
        return _bdlle(cloud, opts, d, workers), None
    index = build_index(cloud)
    if spec.algo == "cps":
        dists = baselines.cps_distances(cloud, opts["epsilon"], d, index=index, workers=workers)
        return baselines.cps_detect(dists, opts.get("radius", 0.0)), dists
    return baselines.run_baseline(spec.algo, cloud, k=opts.get("k"), epsilon=opts.get("epsilon"),
                                  index=index), None


def _score(spec, result, dists, gt, grid_k):
    if dists is not None and "radius" not in spec.options:
        return f1_max_cps(dists, gt, grid_k, spec.label())
    return f1_max(result.boundary_indices, gt, grid_k, spec.label())


# -------------------------------------------------------------------- output
def plot_rows(bundle, detected, values=None):
    """Header and rows for plotting detections.

    Clouds of dimension above 3 are shown in their intrinsic parameters
    (theta, phi for the Klein bottle; u, v for the noisy disk).
    """
    mask = np.zeros(bundle.n, dtype=bool)
    mask[np.asarray(detected, dtype=np.intp)] = True
    if bundle.cloud.p <= 3:
        names = ["x", "y", "z"][: bundle.cloud.p]
        cols = [bundle.cloud.points[:, j] for j in range(bundle.cloud.p)]
    else:
        keys = [k for k in ("theta", "phi", "u", "v") if k in bundle.params]
        names, cols = keys, [bundle.params[k] for k in keys]
    header = names + (["B"] if values is not None else []) + ["detected"]
    rows = []
    for i in range(bundle.n):
        row = [repr(float(c[i])) for c in cols]
        if values is not None:
            row.append(repr(float(values[i])))
        row.append("1" if mask[i] else "0")
        rows.append(row)
    return header, rows


def emit_plot_data(report, bundle, path=None):
    """CSV text with one row per point; written to ``path`` when given."""
    values = getattr(report, "values", None)
    header, rows = plot_rows(bundle, report.boundary_indices, values)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def table_text(results, datasets_order, detectors_order):
    """Detectors x datasets matrix of F1_max as (csv text, aligned text)."""
    lookup = {(r["dataset"], r["detector"]): r["f1_max"] for r in results}
    header = ["detector"] + list(datasets_order)
    rows = [[det] + [("%.4f" % lookup[(ds, det)]) if (ds, det) in lookup else "NA"
                     for ds in datasets_order] for det in detectors_order]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(x).ljust(wd) for x, wd in zip(line, widths)).rstrip()
             for line in [header] + rows]
    return buf.getvalue(), "\n".join(lines) + "\n"


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _result_payload(result, dists):
    if hasattr(result, "to_dict"):
        payload = result.to_dict()
    else:
        payload = {"boundary_indices": [int(i) for i in result.boundary_indices]}
    if dists is not None:
        payload["d_hat"] = [float(v) for v in dists.d_hat]
    return payload


def run_benchmark(config: RunConfig, workers=None):
    """Execute every (dataset, detector) pair and write the report files.

    Layout under ``config.out_dir``: ``config.json``, ``<dataset>/<label>.json``
    (detections and F1 curve), ``<dataset>/<label>.plot.csv``, ``results.json``,
    ``table.csv`` and ``table.txt``.  A failing stage leaves an ``INCOMPLETE``
    marker naming it and raises :class:`StageError`.
    """
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    marker = out / "INCOMPLETE"
    if marker.exists():
        marker.unlink()
    results, names, labels = [], [], []

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            marker.write_text(f"{name}: {type(exc).__name__}: {exc}\n")
            raise StageError(name, exc) from exc

    for ds in config.datasets:
        ds_name = ds["name"]
        label = ds.get("label", ds_name)
        names.append(label)
        kw = {k: v for k, v in ds.items() if k not in ("name", "n", "label", "detectors")}
        specs = [DetectorSpec(d["algo"], d.get("options", {}))
                 for d in ds.get("detectors", config.detectors)]
        labels += [s.label() for s in specs if s.label() not in labels]
        bundle = stage(f"sample:{label}",
                       lambda: datasets.sample(ds_name, ds.get("n"), config.seed, **kw))
        if config.dm is not None and config.dm.get("n_max"):
            keep = subsample_indices(bundle.n, config.dm["n_max"], config.seed)
            bundle = datasets.subset_bundle(bundle, keep)
        sub = out / label
        sub.mkdir(exist_ok=True)
        for spec in specs:
            tag = f"{label}/{spec.label()}"
            if config.dm is not None:
                dm = DmParams(config.dm["epsilon"], config.dm.get("ell", 3),
                              self_loops=config.dm.get("self_loops", False))

                def run(spec=spec, dm=dm):
                    holder = {}

                    def detector(cloud):
                        res, holder["dists"] = detect(spec, cloud, bundle.d, workers)
                        return res

                    res, _ = denoise_detect(bundle.cloud, dm, detector, seed=config.seed)
                    return res, holder["dists"]

                result, dists = stage(f"detect:{tag}", run)
            else:
                result, dists = stage(f"detect:{tag}",
                                      lambda spec=spec: detect(spec, bundle.cloud, bundle.d, workers))
            score = stage(f"eval:{tag}",
                          lambda: _score(spec, result, dists, bundle.dist_to_boundary, config.grid_k))
            payload = _result_payload(result, dists)
            payload["f1"] = score.to_dict()
            _dump(sub / f"{spec.label()}.json", payload)
            emit_plot_data(result, bundle, sub / f"{spec.label()}.plot.csv")
            results.append({"dataset": label, "detector": spec.label(),
                            "f1_max": score.f1_max, "best_r": score.best_r, "n": bundle.n})
    _dump(out / "results.json", results)
    csv_text, txt = table_text(results, names, labels)
    (out / "table.csv").write_text(csv_text)
    (out / "table.txt").write_text(txt)
    return results


# ----------------------------------------------------------- preset configs
TABLE_EPSILON = {"ball": 0.2, "vcut": 1.0, "tcut": 1.15, "klein": 0.25}
TABLE_K = 50


def table_detectors(name, baselines_too=True):
    eps = TABLE_EPSILON[name]
    dets = [{"algo": "bdlle", "options": {"epsilon": eps}}]
    if baselines_too:
        dets += [{"algo": a, "options": {"k": TABLE_K}} for a in ("band", "border", "lever", "spinver")]
        dets += [{"algo": "brim", "options": {"epsilon": eps}},
                 {"algo": "cps", "options": {"epsilon": eps}}]
    return dets


def table_config(names=("ball", "vcut", "tcut", "klein"), seed=0, out_dir="runs/table",
                 baselines_too=True) -> RunConfig:
    """The four benchmark shapes with their published scale parameters."""
    entries = [{"name": n, "detectors": table_detectors(n, baselines_too)} for n in names]
    return RunConfig(datasets=entries, detectors=table_detectors(names[0], baselines_too),
                     seed=seed, out_dir=out_dir)
