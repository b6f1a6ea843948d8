"""Command-line front end.

Usage::

    annealsgd [--config FILE] [--out DIR] [--run-name NAME] SUBCOMMAND [--key value ...]
    annealsgd --from-manifest RUN/manifest.json [--out DIR] [--run-name NAME]

Every run writes its files plus ``manifest.json`` into ``DIR/NAME``. ``DIR``
comes from ``--out``, else the ``ANNEALSGD_OUT`` environment variable, else
``./annealsgd_runs``. ``NAME`` defaults to the subcommand plus a UTC timestamp.

Settings resolve as built-in defaults, then the ``[subcommand]`` section of
the config file (``key = value`` lines), then command-line flags. The
manifest stores the resolved settings, so ``--from-manifest`` replays a run
exactly.

Exit codes: 0 success, 1 check failed (gradcheck), 2 usage, 3 I/O,
4 capacity, 5 divergence.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anneal import SCHEDULES
from .census import CensusConfig, reference_regimes, perturbation_shift_experiment, run_census
from .data import IdxFormatError, load_idx, synth_blobs
from .hamiltonian import CapacityError, DEFAULT_BUDGET, gradient, hessian, sample_disorder, sample_field
from .regimes import critical_field, nu_for_tau, regime_table
from .sphere import DescentConfig
from .trainer import MLP, DivergenceError, MLPSpec, default_anneal, train

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_IO, EXIT_CAPACITY, EXIT_DIVERGENCE = 0, 1, 2, 3, 4, 5
OUT_ENV = "ANNEALSGD_OUT"


class UsageError(ValueError):
    pass


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def _strs(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# name -> (parser, default, help). Defaults are strings so config files, flags
# and manifests all go through the same parser.
PARAMS: dict[str, dict[str, tuple]] = {
    "regimes": {
        "J": (float, "1.0", "coupling scale"),
        "p": (int, "3", "interaction order"),
        "n": (int, "100", "number of spins"),
        "nu": (_floats, "", "comma-separated field strengths"),
        "tau": (_floats, "", "comma-separated edge offsets, converted to nu (used when --nu is empty)"),
        "band": (float, "1.0", "half-width of the polynomial band in units of 1/n"),
    },
    "landscape": {
        "n": (int, "100", "number of spins"),
        "p": (int, "3", "interaction order"),
        "J": (float, "1.0", "coupling scale"),
        "trials": (int, "2000", "descents per regime"),
        "seeds": (_ints, "0", "comma-separated master seeds; one census per seed"),
        "regimes": (_strs, "exponential,polynomial,trivial", "subset of exponential,polynomial,trivial"),
        "step": (float, "0.1", "descent step size"),
        "tol": (float, "1e-4", "projected-gradient tolerance"),
        "max_iters": (int, "1000000", "descent iteration cap"),
        "cluster_threshold": (float, "0.05", "single-linkage cosine-distance threshold"),
        "indices": (_bool, "true", "compute critical-point indices"),
        "workers": (int, "1", "descent threads per regime"),
        "budget": (int, str(DEFAULT_BUDGET), "largest dense array, in entries"),
    },
    "perturb-check": {
        "n_grid": (_ints, "50,100,200", "comma-separated sizes"),
        "p": (int, "3", "interaction order"),
        "J": (float, "1.0", "coupling scale"),
        "nu": (float, "0.5", "field strength"),
        "trials": (int, "100", "trials per size"),
        "seed": (int, "0", "master seed"),
        "step": (float, "0.1", "descent step size"),
        "tol": (float, "1e-4", "projected-gradient tolerance"),
        "field_scaling": (str, "standard", "standard or inv_sqrt_n (h divided by sqrt(n))"),
        "distance_units": (str, "sphere", "sphere or unit"),
        "budget": (int, str(DEFAULT_BUDGET), "largest dense array, in entries"),
    },
    "train": {
        "data": (str, "blobs", "blobs or idx"),
        "images": (str, "", "IDX image file (data=idx)"),
        "labels": (str, "", "IDX label file (data=idx)"),
        "classes": (int, "10", "number of classes"),
        "dim": (int, "20", "blob feature dimension"),
        "per_class": (int, "1000", "blob samples per class"),
        "spread": (float, "0.5", "blob standard deviation"),
        "data_seed": (int, "0", "seed for data generation and the validation split"),
        "val_fraction": (float, "0.12", "validation share"),
        "depth": (int, "16", "number of hidden layers"),
        "width": (int, "32", "hidden-layer width"),
        "init": (str, "uniform", "uniform or he"),
        "init_seed": (int, "0", "weight initialization seed"),
        "weight_decay": (float, "1e-5", "L2 penalty on weight matrices"),
        "optimizer": (str, "adam", "adam or sgd_momentum"),
        "lr": (float, "1e-3", "learning rate"),
        "momentum": (float, "0.9", "Nesterov momentum (sgd_momentum)"),
        "epochs": (int, "3", "passes over the training split"),
        "batch_size": (int, "32", "mini-batch size"),
        "seed": (int, "0", "batch-order seed"),
        "noise_baseline": (str, "none", "none or resampled"),
        "anneal.enabled": (_bool, "true", "add the AnnealSGD perturbation"),
        "anneal.J": (float, "1e-3", "perturbation coupling"),
        "anneal.tau0": (float, "200", "schedule time constant, in steps"),
        "anneal.schedule": (str, "tau_exp", "one of " + ", ".join(SCHEDULES)),
        "anneal.seed": (int, "0", "perturbation direction seed"),
        "anneal.kappa": (float, "1.0", "kappa for the kappa schedule"),
        "anneal.i_max": (int, "1000", "steps to zero for the linear schedule"),
    },
    "gradcheck": {
        "n": (int, "8", "number of spins"),
        "p": (int, "3", "interaction order"),
        "J": (float, "1.0", "coupling scale"),
        "nu": (float, "1.0", "field strength"),
        "seed": (int, "0", "seed"),
        "points": (int, "5", "random configurations to check"),
        "inject": (str, "none", "none or sign-flip (negate one gradient entry, must fail)"),
        "budget": (int, str(DEFAULT_BUDGET), "largest dense array, in entries"),
    },
}


def _resolve(sub: str, config_file: str | None, flags: dict[str, str | None]) -> dict[str, str]:
    raw = {k: v[1] for k, v in PARAMS[sub].items()}
    if config_file:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        if not cp.read(config_file):
            raise FileNotFoundError(f"config file not found: {config_file}")
        if cp.has_section(sub):
            for k, v in cp.items(sub):
                if k not in raw:
                    raise UsageError(f"{config_file}: unknown key {k!r} in [{sub}]")
                raw[k] = v
    for k, v in flags.items():
        if v is not None:
            raw[k] = v
    return raw


def _parse(sub: str, raw: dict[str, str]) -> dict:
    out = {}
    for k, (conv, _, _) in PARAMS[sub].items():
        try:
            out[k] = conv(raw[k])
        except ValueError as e:
            raise UsageError(f"--{k}: {e}") from None
    return out


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_regimes(c: dict, outdir: Path) -> tuple[dict, int]:
    if c["nu"]:
        nus = c["nu"]
    elif c["tau"]:
        nus = [nu_for_tau(critical_field(c["J"], c["p"]), t, c["n"]) for t in c["tau"]]
    else:
        raise UsageError("give --nu or --tau")
    if c["p"] < 2 or c["n"] < 1:
        raise UsageError("need p >= 2 and n >= 1")
    rows = regime_table(c["J"], c["p"], c["n"], nus, c["band"])
    path = outdir / "regimes.csv"
    _write_csv(path, ["nu", "B", "label", "expected_count"],
               ([r["nu"], r["B"], r["regime"], float(r["expected_count"])] for r in rows))
    return {"table": path.name}, EXIT_OK


def cmd_landscape(c: dict, outdir: Path) -> tuple[dict, int]:
    known = dict(reference_regimes(c["n"], c["J"], c["p"]))
    bad = [r for r in c["regimes"] if r not in known]
    if bad or not c["regimes"]:
        raise UsageError(f"unknown regime label(s) {bad}; choose from {sorted(known)}")
    if not c["seeds"]:
        raise UsageError("give at least one seed")
    regimes = [(r, known[r]) for r in c["regimes"]]
    descent = DescentConfig(step=c["step"], grad_tol=c["tol"], max_iters=c["max_iters"])
    files = {}
    for seed in c["seeds"]:
        d = sample_disorder(c["n"], c["p"], c["J"], seed, c["budget"])
        cfg = CensusConfig(trials=c["trials"], regimes=regimes, descent=descent,
                           cluster_threshold=c["cluster_threshold"], master_seed=seed,
                           compute_indices=c["indices"], workers=c["workers"])
        paths = run_census(d, cfg).write(outdir, prefix=f"census_seed{seed}")
        files.update({f"seed{seed}_{k}": p.name for k, p in paths.items()})
    return files, EXIT_OK


def cmd_perturb_check(c: dict, outdir: Path) -> tuple[dict, int]:
    if len(c["n_grid"]) < 3:
        raise UsageError("--n_grid needs at least three sizes")
    rep = perturbation_shift_experiment(
        c["n_grid"], c["p"], c["J"], c["nu"], c["trials"], c["seed"],
        DescentConfig(step=c["step"], grad_tol=c["tol"]), c["field_scaling"], c["distance_units"], c["budget"])
    path = outdir / "shift_report.json"
    _write_json(path, rep.to_json())
    return {"report": path.name}, EXIT_OK


def _train_data(c: dict):
    if c["data"] == "blobs":
        return synth_blobs(c["classes"], c["dim"], c["per_class"], c["spread"], c["data_seed"], c["val_fraction"])
    if c["data"] == "idx":
        if not c["images"] or not c["labels"]:
            raise UsageError("data=idx needs --images and --labels")
        return load_idx(c["images"], c["labels"], c["val_fraction"], c["data_seed"], c["classes"])
    raise UsageError(f"unknown data source {c['data']!r}")


def cmd_train(c: dict, outdir: Path) -> tuple[dict, int]:
    data = _train_data(c)
    try:
        spec = MLPSpec(hidden=(c["width"],) * c["depth"], weight_decay=c["weight_decay"],
                       init_seed=c["init_seed"], init=c["init"])
        anneal = None
        if c["anneal.enabled"] or c["noise_baseline"] != "none":
            net = MLP(spec, data.dim, data.classes)
            anneal = default_anneal(net, J=c["anneal.J"], tau0=c["anneal.tau0"], schedule=c["anneal.schedule"],
                                    seed=c["anneal.seed"], kappa=c["anneal.kappa"], i_max=c["anneal.i_max"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    noise = None if c["noise_baseline"] == "none" else c["noise_baseline"]
    m = train(spec, data, c["optimizer"], anneal, noise, c["epochs"], c["batch_size"], c["lr"], c["seed"],
              c["momentum"])
    path = outdir / "metrics.csv"
    m.write_csv(path)
    files = {"metrics": path.name}
    if anneal is not None:
        # derived, not configured; recorded so the manifest shows the field scale used
        files["derived"] = {"p_est": anneal.p_est, "n_est": anneal.n_est}
    return files, EXIT_OK


def _fd_gradient(fun, x: np.ndarray, eps: float) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (fun(x + e) - fun(x - e)) / (2 * eps)
    return g


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300))


def gradcheck_report(n: int, p: int, J: float = 1.0, nu: float = 1.0, seed: int = 0, points: int = 5,
                     inject: str = "none", budget: int = DEFAULT_BUDGET) -> dict:
    """Central differences against the analytic Hamiltonian gradient and Hessian and the trainer's backprop."""
    from .hamiltonian import energy

    if inject not in ("none", "sign-flip"):
        raise UsageError(f"unknown fault {inject!r}")
    d = sample_disorder(n, p, J, seed, budget)
    f = sample_field(n, nu, seed)
    rng = np.random.default_rng(seed)
    worst_g = worst_h = 0.0
    for _ in range(points):
        x = rng.standard_normal(n)
        g = gradient(d, x, f)
        if inject == "sign-flip":
            g = g.copy()
            g[0] = -g[0]
        worst_g = max(worst_g, _rel_err(g, _fd_gradient(lambda y: energy(d, y, f), x, 1e-5)))
        fd_h = np.array([_fd_gradient(lambda y: gradient(d, y, f)[i], x, 1e-5) for i in range(n)])
        worst_h = max(worst_h, _rel_err(hessian(d, x, f, budget), 0.5 * (fd_h + fd_h.T)))

    data = synth_blobs(3, 4, 4, 0.3, seed)
    net = MLP(MLPSpec(hidden=(5, 5), init_seed=seed, init="he", weight_decay=1e-3), data.dim, data.classes)
    x, y = data.train
    _, g = net.loss_and_grad(x, y)
    if inject == "sign-flip":
        g = g.copy()
        g[0] = -g[0]
    worst_t = _rel_err(g, _fd_gradient(lambda w: net.loss(x, y, w), net.w.copy(), 1e-6))

    checks = {
        "hamiltonian_gradient": {"rel_err": worst_g, "tol": 1e-6},
        "hamiltonian_hessian": {"rel_err": worst_h, "tol": 1e-5},
        "trainer_gradient": {"rel_err": worst_t, "tol": 1e-6},
    }
    for v in checks.values():
        v["passed"] = bool(v["rel_err"] < v["tol"])
    return {"checks": checks, "passed": all(v["passed"] for v in checks.values())}


def cmd_gradcheck(c: dict, outdir: Path) -> tuple[dict, int]:
    rep = gradcheck_report(c["n"], c["p"], c["J"], c["nu"], c["seed"], c["points"], c["inject"], c["budget"])
    path = outdir / "gradcheck.json"
    _write_json(path, rep)
    for name, v in rep["checks"].items():
        print(f"{name}: {'PASS' if v['passed'] else 'FAIL'} (rel_err {v['rel_err']:.3e}, tol {v['tol']:g})")
    return {"report": path.name}, EXIT_OK if rep["passed"] else EXIT_CHECK_FAILED


COMMANDS = {
    "regimes": cmd_regimes,
    "landscape": cmd_landscape,
    "perturb-check": cmd_perturb_check,
    "train": cmd_train,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="annealsgd", description="p-spin landscapes and AnnealSGD experiments")
    ap.add_argument("--config", help="key = value file with one [section] per subcommand")
    ap.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./annealsgd_runs)")
    ap.add_argument("--run-name", help="run directory name under the output root")
    ap.add_argument("--from-manifest", help="replay the run recorded in this manifest")
    ap.add_argument("--version", action="version", version=__version__)
    subs = ap.add_subparsers(dest="command")
    for name, params in PARAMS.items():
        sp = subs.add_parser(name)
        for key, (_, default, help_) in params.items():
            sp.add_argument(f"--{key}", dest=key, default=None, help=f"{help_} (default: {default!r})")
    return ap


def run(command: str, raw: dict[str, str], out_root: Path, run_name: str | None) -> int:
    conf = _parse(command, raw)
    started = _now()
    name = run_name or f"{command}-{dt.datetime.now(dt.timezone.utc).strftime('%Y%m%dT%H%M%S%fZ')}"
    outdir = out_root / name
    outdir.mkdir(parents=True, exist_ok=True)
    files, code = COMMANDS[command](conf, outdir)
    seeds = {k: v for k, v in raw.items() if "seed" in k}
    manifest = {
        "subcommand": command,
        "config": raw,
        "seeds": seeds,
        "version": __version__,
        "numpy": np.__version__,
        "started": started,
        "finished": _now(),
        "outputs": {k: v for k, v in files.items() if k != "derived"},
        "derived": files.get("derived", {}),
        "exit_code": code,
    }
    _write_json(outdir / "manifest.json", manifest)
    print(outdir)
    return code


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    out_root = Path(args.out or os.environ.get(OUT_ENV) or "annealsgd_runs")
    try:
        if args.from_manifest:
            if args.command:
                raise UsageError("--from-manifest replays a recorded run; do not also give a subcommand")
            man = json.loads(Path(args.from_manifest).read_text())
            command, raw = man["subcommand"], man["config"]
            if command not in PARAMS:
                raise UsageError(f"manifest names unknown subcommand {command!r}")
            return run(command, raw, out_root, args.run_name)
        if not args.command:
            ap.print_usage(sys.stderr)
            return EXIT_USAGE
        flags = {k: getattr(args, k) for k in PARAMS[args.command]}
        raw = _resolve(args.command, args.config, flags)
        return run(args.command, raw, out_root, args.run_name)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError, IdxFormatError, json.JSONDecodeError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
