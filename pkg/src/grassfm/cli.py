"""Command-line interface: synth / reconstruct / eval / sweep-noise.

Heavy imports happen after argument parsing so ``--threads`` can pin the
BLAS thread pools through environment variables before numpy loads; with the
default of one thread, repeated runs are bit-reproducible.  Machine-readable
results go to stdout as JSON, human-readable notes to stderr under
``--verbose``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# mirror of grassfm.solver.SolverConfig defaults; a unit test guards the two
# against drifting apart (this module must stay import-light, see above)
SOLVER_DEFAULTS = {
    "K": 6,
    "p": 6,
    "beta1": 1.0,
    "beta2": None,
    "beta3": 0.1,
    "rho0": 1e-2,
    "rho_max": 1e8,
    "eps": 1e-10,
    "c": 1.1,
    "d_tilde": None,
    "max_iter": 300,
    "seed": 0,
    "delta_stride": 1,
    "merge_tol": 0.8,
}

_FLOAT_KEYS = {"beta1", "beta2", "beta3", "rho0", "rho_max", "eps", "c", "merge_tol"}
_INT_KEYS = {"K", "p", "d_tilde", "max_iter", "seed", "delta_stride"}


class _Parser(argparse.ArgumentParser):
    # exit code 1 on usage errors (argparse defaults to 2)
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _add_solver_flags(sp):
    g = sp.add_argument_group("solver configuration")
    g.add_argument("--config", type=Path, default=None, metavar="PATH",
                   help="JSON file with flat key/value overrides for any key below")
    g.add_argument("--K", type=int, default=None,
                   help=f"number of trajectory groups (default: dataset meta.json, else {SOLVER_DEFAULTS['K']})")
    g.add_argument("--p", type=int, default=None,
                   help=f"retained singular values per group (default {SOLVER_DEFAULTS['p']})")
    g.add_argument("--beta1", type=float, default=None,
                   help=f"self-expressiveness weight (default {SOLVER_DEFAULTS['beta1']})")
    g.add_argument("--beta2", type=float, default=None,
                   help="shape nuclear-norm weight (default: auto, rho0 times the"
                        " leading shape singular value / 4)")
    g.add_argument("--beta3", type=float, default=None,
                   help=f"coefficient nuclear-norm weight (default {SOLVER_DEFAULTS['beta3']})")
    g.add_argument("--rho0", type=float, default=None,
                   help=f"initial penalty (default {SOLVER_DEFAULTS['rho0']})")
    g.add_argument("--rho-max", type=float, default=None,
                   help=f"penalty ceiling; exceeding it stops the loop (default {SOLVER_DEFAULTS['rho_max']:g})")
    g.add_argument("--eps", type=float, default=None,
                   help=f"consensus-gap stopping tolerance (default {SOLVER_DEFAULTS['eps']:g})")
    g.add_argument("--c", type=float, default=None,
                   help=f"penalty growth factor per iteration (default {SOLVER_DEFAULTS['c']})")
    g.add_argument("--d-tilde", type=int, default=None,
                   help="low-dimensional ambient dimension (default min(3F, max(2p, 12)))")
    g.add_argument("--max-iter", type=int, default=None,
                   help=f"iteration cap (default {SOLVER_DEFAULTS['max_iter']})")
    g.add_argument("--delta-stride", type=int, default=None,
                   help=f"refit the reduction map every N iterations (default {SOLVER_DEFAULTS['delta_stride']})")
    g.add_argument("--merge-tol", type=float, default=None,
                   help="normalized subspace overlap above which groups fuse"
                        f" (default {SOLVER_DEFAULTS['merge_tol']})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grassfm",
                     description="Dense non-rigid structure from motion via"
                                 " Grassmann subspace clustering")
    parser.add_argument("--threads", type=int, default=1,
                        help="cap BLAS/OpenMP threads (default 1, reproducible)")
    parser.add_argument("--verbose", action="store_true",
                        help="human-readable progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    sp.add_argument("--out", type=Path, required=True, help="output dataset directory")
    sp.add_argument("--F", type=int, default=30, help="frame count (default 30)")
    sp.add_argument("--P", type=int, default=600, help="trajectory count (default 600)")
    sp.add_argument("--K", type=int, default=6, help="ground-truth patch count (default 6)")
    sp.add_argument("--p-true", type=int, default=3, help="per-patch trajectory rank (default 3)")
    sp.add_argument("--deform-amp", type=float, default=0.2,
                    help="deformation amplitude in surface-scale units (default 0.2)")
    sp.add_argument("--rot-range", type=float, default=30.0,
                    help="max rotation angle in degrees (default 30)")
    sp.add_argument("--noise", type=float, default=0.0,
                    help="Gaussian noise ratio applied to W (default 0)")
    sp.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")

    sp = sub.add_parser("reconstruct", help="recover per-frame 3D shape from a dataset")
    sp.add_argument("dataset", type=Path, help="dataset directory (W.csv, R.csv, meta.json)")
    sp.add_argument("--out", type=Path, default=Path("out"),
                    help="output directory (default ./out)")
    sp.add_argument("--seed", type=int, default=None,
                    help=f"seed for every stochastic step (default {SOLVER_DEFAULTS['seed']})")
    _add_solver_flags(sp)

    sp = sub.add_parser("eval", help="score an estimate against ground truth")
    sp.add_argument("estimate", type=Path, help="S_est.csv or a directory containing it")
    sp.add_argument("dataset", type=Path, help="dataset directory with S_gt.csv")

    sp = sub.add_parser("sweep-noise", help="e3d as a function of the noise ratio")
    sp.add_argument("dataset", type=Path, help="dataset directory with S_gt.csv")
    sp.add_argument("--out", type=Path, default=Path("out"),
                    help="output directory for sweep.csv (default ./out)")
    sp.add_argument("--lambdas", type=str, default="0,0.01,0.03,0.055",
                    help="comma-separated noise ratios (default 0,0.01,0.03,0.055)")
    sp.add_argument("--noise-seeds", type=str, default="0,1,2",
                    help="comma-separated noise seeds (default 0,1,2)")
    sp.add_argument("--seed", type=int, default=None,
                    help=f"solver seed (default {SOLVER_DEFAULTS['seed']})")
    _add_solver_flags(sp)
    return parser


def _pin_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, str(n))


def _load_config_file(path: Path) -> dict:
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a flat JSON object")
    out = {}
    for key, value in raw.items():
        if key not in SOLVER_DEFAULTS:
            raise ValueError(f"unknown config key: {key!r}")
        if value is not None:
            value = float(value) if key in _FLOAT_KEYS else int(value)
        out[key] = value
    return out


def _resolve_solver_config(args, meta: dict):
    from .solver import SolverConfig

    values = dict(SOLVER_DEFAULTS)
    if meta.get("K") is not None:
        values["K"] = int(meta["K"])
    if args.config is not None:
        values.update(_load_config_file(args.config))
    for key in SOLVER_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return SolverConfig(**values)


def _log(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


def _cmd_synth(args) -> int:
    from . import bench

    spec = bench.SceneSpec(F=args.F, P=args.P, K_true=args.K, p_true=args.p_true,
                           deform_amp=args.deform_amp, rot_range=args.rot_range,
                           seed=args.seed)
    scene = bench.generate_scene(spec)
    ds = scene.dataset
    if args.noise > 0:
        from .data import Dataset
        ds = Dataset(W=bench.add_noise(ds.W, args.noise, args.seed), R=ds.R,
                     S_gt=ds.S_gt, column_ids=ds.column_ids)
        scene = bench.Scene(dataset=ds, labels_gt=scene.labels_gt,
                            bases=scene.bases, spec=scene.spec)
    bench.save_scene(scene, args.out)
    _log(args, f"wrote scene F={args.F} P={args.P} K={args.K} to {args.out}")
    print(json.dumps({"out": str(args.out), "frames": args.F, "points": args.P,
                      "K": args.K}, sort_keys=True))
    return 0


def _cmd_reconstruct(args) -> int:
    from . import data
    from .solver import admm_solve

    ds = data.load_dataset(args.dataset)
    meta = data.read_meta(Path(args.dataset) / "meta.json")
    cfg = _resolve_solver_config(args, meta)
    _log(args, f"solving F={ds.F} P={ds.P} with K={cfg.K} p={cfg.p}")
    res = admm_solve(ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.save_shape(out, res.S_est, meta={"K": cfg.K, "p": cfg.p, "seed": cfg.seed})
    data.save_matrix(out / "labels.csv", res.labels_original[None, :].astype(float))
    with open(out / "diagnostics.json", "w") as fh:
        json.dump({
            "iterations": res.iterations,
            "converged": res.converged,
            "reason": res.reason,
            "rows": res.diagnostics,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    last = res.diagnostics[-1]
    _log(args, f"finished after {res.iterations} iterations (reason: {res.reason}, "
               f"gap {last['gap']:.3e})")
    print(json.dumps({"out": str(out), "iterations": res.iterations,
                      "converged": res.converged, "reason": res.reason},
                     sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    from . import bench, data

    est_path = Path(args.estimate)
    if est_path.is_dir():
        est_path = est_path / "S_est.csv"
    S_est = data.load_matrix(est_path)
    ds = data.load_dataset(args.dataset)
    if ds.S_gt is None:
        raise data.DatasetError(f"dataset has no S_gt.csv: {args.dataset}")
    report = bench.e3d(S_est, ds.S_gt)
    payload = {
        "e3d": report.e3d,
        "per_frame_errors": [float(v) for v in report.per_frame_errors],
        "sign_flipped": report.sign_flipped,
    }
    labels_file = Path(args.estimate) / "labels.csv" if Path(args.estimate).is_dir() else None
    gt_labels_file = Path(args.dataset) / "labels_gt.csv"
    if labels_file and labels_file.exists() and gt_labels_file.exists():
        est_labels = data.load_matrix(labels_file).ravel().astype(int)
        gt_labels = data.load_matrix(gt_labels_file).ravel().astype(int)
        payload["label_accuracy"] = bench.label_accuracy(est_labels, gt_labels)
    _log(args, f"e3d = {report.e3d:.6f} (flipped: {report.sign_flipped})")
    print(json.dumps(payload, sort_keys=True))
    return 0


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


def _cmd_sweep_noise(args) -> int:
    from . import bench, data

    ds = data.load_dataset(args.dataset)
    if ds.S_gt is None:
        raise data.DatasetError(f"dataset has no S_gt.csv: {args.dataset}")
    meta = data.read_meta(Path(args.dataset) / "meta.json")
    cfg = _resolve_solver_config(args, meta)
    lambdas = _parse_float_list(args.lambdas)
    seeds = [int(v) for v in _parse_float_list(args.noise_seeds)]
    rows = bench.noise_sweep(ds, cfg, lambdas, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("lambda_g,seed,e3d,iters,seconds\n")
        for row in rows:
            fh.write(f"{row['lambda_g']:.17g},{row['seed']},{row['e3d']:.17g},"
                     f"{row['iters']},{row['seconds']:.3f}\n")
    means = bench.sweep_means(rows)
    for lam, mean in means.items():
        _log(args, f"lambda_g={lam:g}: mean e3d = {mean:.6f}")
    print(json.dumps({"out": str(out / "sweep.csv"),
                      "means": {f"{lam:g}": mean for lam, mean in means.items()}},
                     sort_keys=True))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "reconstruct": _cmd_reconstruct,
    "eval": _cmd_eval,
    "sweep-noise": _cmd_sweep_noise,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _pin_threads(args.threads)

    from .data import DatasetError
    from .lowdim import ProjectionCollapseError

    try:
        return _COMMANDS[args.command](args)
    except (DatasetError, FileNotFoundError, NotADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProjectionCollapseError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numpy/scipy LinAlgError without importing them eagerly
        if type(exc).__name__ == "LinAlgError":
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
