"""Command-line front end: ``bdlle <subcommand> ...``.

Exit codes: 0 on success, 2 for bad arguments or configs, 3 when a stage
fails at runtime.  Worker count follows ``BDLLE_WORKERS`` unless
``--workers`` is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, benchmark, datasets
from .benchmark import ConfigError, DetectorSpec, RunConfig, StageError
from .diffusion import DmParams, dm_embed
from .evaluation import DEFAULT_GRID_K, f1_max, f1_max_cps, r_grid
from .indicator import choose_epsilon, run_bdlle, select_epsilon_range
from .pointcloud import NeighborParams, build_index, load_cloud, save_cloud

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _dump(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load(path):
    try:
        return load_cloud(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read point cloud {path}: {exc}") from exc


def gt_path(out):
    out = Path(out)
    return out.with_name(out.stem + ".gt.csv")


def clean_path(out):
    out = Path(out)
    return out.with_name(out.stem + ".clean.csv")


def write_ground_truth(bundle, path):
    keys = [k for k, v in bundle.params.items()
            if isinstance(v, np.ndarray) and v.ndim == 1 and v.size == bundle.n]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dist_to_boundary"] + keys)
        for i in range(bundle.n):
            w.writerow([repr(float(bundle.dist_to_boundary[i]))]
                       + [repr(float(bundle.params[k][i])) for k in keys])


def read_ground_truth(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read ground truth {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"ground truth file {path} is empty")
    if rows[0] and rows[0][0].strip() == "dist_to_boundary":
        rows = rows[1:]
    return np.array([float(r[0]) for r in rows if r])


def read_detected(path):
    """Detected indices, or CPS distance estimates when the JSON carries ``d_hat``."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
        if isinstance(data, list):
            return np.asarray(data, dtype=np.intp), None
        if "d_hat" in data and "radius" not in data.get("params", {}):
            return None, np.asarray(data["d_hat"], dtype=float)
        return np.asarray(data["boundary_indices"], dtype=np.intp), None
    vals = [int(tok) for tok in text.replace(",", " ").split() if tok.strip().lstrip("-").isdigit()]
    return np.asarray(vals, dtype=np.intp), None


# ---------------------------------------------------------------- commands
def cmd_sample(args):
    kw = {}
    if args.sigma is not None:
        if args.name != "noisy-disk":
            raise ConfigError("--sigma only applies to noisy-disk")
        kw["sigma"] = args.sigma
    if args.n is not None and args.n < 1:
        raise ConfigError("--n must be at least 1")
    bundle = datasets.sample(args.name, args.n, args.seed, **kw)
    save_cloud(args.out, bundle.cloud.points)
    write_ground_truth(bundle, gt_path(args.out))
    if bundle.clean_cloud is not None:
        save_cloud(clean_path(args.out), bundle.clean_cloud.points)
    print(f"{bundle.name}: n={bundle.n} p={bundle.cloud.p} -> {args.out}", file=sys.stderr)


def _reg(text):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError as exc:
        raise ConfigError("--reg must be 'auto' or a positive number") from exc
    if not value > 0:
        raise ConfigError("--reg must be positive")
    return value


def cmd_detect(args):
    cloud = _load(args.inp)
    if args.dim < 1 or args.dim > cloud.p:
        raise ConfigError("--dim must lie between 1 and the ambient dimension")
    index = build_index(cloud)
    if args.scheme == "ball":
        eps = args.epsilon
        if eps in (None, "auto"):
            eps = choose_epsilon(select_epsilon_range(cloud, args.dim, index), args.epsilon_frac)
        params = NeighborParams.ball(float(eps))
    else:
        if args.k is None:
            raise ConfigError("--scheme knn needs --k")
        if not 1 <= args.k <= cloud.n - 1:
            raise ConfigError("--k must lie in [1, n-1]")
        params = NeighborParams.knn(args.k)
    report = run_bdlle(cloud, params, args.dim, reg=_reg(args.reg),
                       threshold_frac=args.threshold_frac, index=index, workers=args.workers)
    _dump(report.to_dict(), args.out)


def cmd_baseline(args):
    cloud = _load(args.inp)
    needs_k = args.algo in ("border", "band", "spinver", "lever")
    if needs_k and args.k is None:
        raise ConfigError(f"{args.algo} needs --k")
    if not needs_k and args.epsilon is None:
        raise ConfigError(f"{args.algo} needs --epsilon")
    if args.algo != "cps":
        res = baselines.run_baseline(args.algo, cloud, k=args.k, epsilon=args.epsilon)
        _dump(res.to_dict(), args.out)
        return
    if args.dim is None:
        raise ConfigError("cps needs --dim")
    dists = baselines.cps_distances(cloud, args.epsilon, args.dim, workers=args.workers)
    if args.radius is not None:
        payload = baselines.cps_detect(dists, args.radius).to_dict()
    else:
        grid = r_grid(args.radius_grid)
        payload = {"name": "cps", "params": {"epsilon": args.epsilon, "d": args.dim},
                   "detections": {repr(r): [int(i) for i in np.flatnonzero(dists.d_hat < r)]
                                  for r in grid}}
    payload["d_hat"] = [float(v) for v in dists.d_hat]
    _dump(payload, args.out)


def cmd_dm(args):
    cloud = _load(args.inp)
    try:
        params = DmParams(args.epsilon_dm, args.l, args.n_max, self_loops=args.self_loops)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    emb = dm_embed(cloud, params, args.seed)
    save_cloud(args.out, emb.coords)
    meta = {"params": params.to_dict(), "eigenvalues": [float(v) for v in emb.eigenvalues],
            "indices": [int(i) for i in emb.indices]}
    Path(args.out).with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _pipeline_config(args):
    if args.config:
        cfg = RunConfig.load(args.config)
        if args.out_dir:
            cfg.out_dir = args.out_dir
        return cfg.validate()
    if not args.name:
        raise ConfigError("pipeline needs --name or --config")
    entry = {"name": args.name}
    if args.n is not None:
        entry["n"] = args.n
    specs = [DetectorSpec.parse(t) for t in (args.detector or ["bdlle"])]
    dm = None
    if args.dm_epsilon is not None:
        dm = {"epsilon": args.dm_epsilon, "ell": args.l, "n_max": args.n_max}
    return RunConfig(datasets=[entry],
                     detectors=[{"algo": s.algo, "options": s.options} for s in specs],
                     seed=args.seed, dm=dm, grid_k=args.grid_k,
                     out_dir=args.out_dir or "runs/pipeline").validate()


def cmd_pipeline(args):
    cfg = _pipeline_config(args)
    benchmark.run_benchmark(cfg, workers=args.workers)
    sys.stdout.write((Path(cfg.out_dir) / "table.txt").read_text())


def cmd_eval(args):
    detected, d_hat = read_detected(args.detected)
    dist = read_ground_truth(args.gt)
    if args.grid_k < 1:
        raise ConfigError("--grid-k must be at least 1")
    if d_hat is not None:
        if d_hat.size != dist.size:
            raise ConfigError("d_hat and ground truth lengths differ")
        report = f1_max_cps(d_hat, dist, args.grid_k)
    else:
        if detected.size and (detected.min() < 0 or detected.max() >= dist.size):
            raise ConfigError("detected index outside the ground-truth range")
        report = f1_max(detected, dist, args.grid_k, Path(args.detected).stem)
    _dump(report.to_dict(), args.out)


def cmd_report(args):
    if args.config:
        cfg = RunConfig.load(args.config)
        benchmark.run_benchmark(cfg, workers=args.workers)
        run_dir = Path(cfg.out_dir)
    elif args.run_dir:
        run_dir = Path(args.run_dir)
    else:
        cfg = benchmark.table_config(seed=args.seed, out_dir=args.out_dir or "runs/table")
        benchmark.run_benchmark(cfg, workers=args.workers)
        run_dir = Path(cfg.out_dir)
    try:
        results = json.loads((run_dir / "results.json").read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"no readable results.json in {run_dir}: {exc}") from exc
    names = list(dict.fromkeys(r["dataset"] for r in results))
    dets = list(dict.fromkeys(r["detector"] for r in results))
    csv_text, txt = benchmark.table_text(results, names, dets)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    sys.stdout.write(txt)


# ------------------------------------------------------------------ parser
def build_parser():
    p = _Parser(prog="bdlle", description="Boundary detection on point clouds.")
    p.add_argument("--workers", type=int, default=None, help="per-point worker threads")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="draw a benchmark cloud with ground truth")
    s.add_argument("--name", required=True, choices=datasets.DATASETS)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    d = sub.add_parser("detect", help="run the boundary indicator")
    d.add_argument("--scheme", choices=("ball", "knn"), default="ball")
    d.add_argument("--epsilon", default="auto")
    d.add_argument("--epsilon-frac", type=float, default=0.5,
                   help="position inside the automatic epsilon range")
    d.add_argument("--k", type=int, default=None)
    d.add_argument("--dim", type=int, required=True)
    d.add_argument("--reg", default="auto")
    d.add_argument("--threshold-frac", type=float, default=0.5)
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", default="-")
    d.set_defaults(func=cmd_detect)

    b = sub.add_parser("baseline", help="run a comparison detector")
    b.add_argument("--algo", required=True, choices=baselines.ALGORITHMS)
    b.add_argument("--k", type=int, default=None)
    b.add_argument("--epsilon", type=float, default=None)
    b.add_argument("--dim", type=int, default=None)
    grp = b.add_mutually_exclusive_group()
    grp.add_argument("--radius", type=float, default=None)
    grp.add_argument("--radius-grid", type=int, nargs="?", const=DEFAULT_GRID_K,
                     default=DEFAULT_GRID_K)
    b.add_argument("--in", dest="inp", required=True)
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_baseline)

    m = sub.add_parser("dm", help="diffusion-maps embedding")
    m.add_argument("--epsilon-dm", type=float, required=True)
    m.add_argument("--l", type=int, default=3)
    m.add_argument("--n-max", type=int, default=None)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--self-loops", action="store_true", help="keep the kernel diagonal")
    m.add_argument("--in", dest="inp", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_dm)

    pl = sub.add_parser("pipeline", help="sample, embed, detect and score in one run")
    pl.add_argument("--config", default=None)
    pl.add_argument("--name", choices=datasets.DATASETS, default=None)
    pl.add_argument("--n", type=int, default=None)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--dm-epsilon", type=float, default=None)
    pl.add_argument("--l", type=int, default=3)
    pl.add_argument("--n-max", type=int, default=None)
    pl.add_argument("--detector", action="append", default=None,
                    help="algo[:key=value,...], repeatable")
    pl.add_argument("--grid-k", type=int, default=DEFAULT_GRID_K)
    pl.add_argument("--out-dir", default=None)
    pl.set_defaults(func=cmd_pipeline)

    e = sub.add_parser("eval", help="F1 against ground-truth collars")
    e.add_argument("--detected", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--grid-k", type=int, default=DEFAULT_GRID_K)
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="detectors x datasets F1_max table")
    r.add_argument("--run-dir", default=None)
    r.add_argument("--config", default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out-dir", default=None)
    r.add_argument("--csv", default=None)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except ConfigError as exc:
        print(f"bdlle: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"bdlle: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"bdlle: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
