"""``pipscreen`` command-line interface.

Verbs: ``simulate``, ``screen pips``, ``screen rdvs``, ``bench`` and
``report``. Outputs go to ``--out``, else ``$PIPSCREEN_OUTPUT_DIR``, else
``./pipscreen-out``; the effective configuration is written next to them.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import importlib
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .bench import SUITES, run_bench
from .config import AnalysisConfig
from .emulator import EmulatorDesign, EmulatorMeanTerm, FittedEmulator, fit_emulator
from .errors import ConfigError, NumericalError
from .kernel import BACKEND
from .likelihood import FieldObservations, ZeroModel, evaluate_model
from .mcmc import DirectModelTerm, run_full_sampler
from .pips import ScreeningResult, check_enumerable, screen
from .rdvs import RdvsAborted, RdvsConfig, RdvsResult, rdvs_run
from .scenarios import SCENARIO_IDS, gen_dataset, get_scenario, read_xy_csv, write_dataset

log = logging.getLogger("pipscreen")

OUTPUT_ENV = "PIPSCREEN_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# Ingestion helpers
# ---------------------------------------------------------------------------


def output_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV) or "pipscreen-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_config(args) -> AnalysisConfig:
    cfg = AnalysisConfig.load(args.config) if args.config else AnalysisConfig.from_dict()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "threshold", None) is not None:
        over["threshold"] = args.threshold
    if getattr(args, "alpha", None) is not None:
        over["spike"] = {"alpha": args.alpha}
    if getattr(args, "calibrate", None) is not None:
        over["calibrate"] = args.calibrate == "on"
    if getattr(args, "n_mh", None) is not None or getattr(args, "n_mwg", None) is not None:
        over["sampler"] = {k: v for k, v in (("n_mh", args.n_mh), ("n_mwg", args.n_mwg))
                           if v is not None}
    return cfg.updated(**over) if over else cfg


def scale_columns(X):
    """Min/max scaling of each column to [0, 1]; constant columns map to 0."""
    lo = X.min(axis=0)
    width = X.max(axis=0) - lo
    width = np.where(width > 0, width, 1.0)
    return (X - lo) / width, {"lo": lo.tolist(), "width": width.tolist()}


class NormalizedModel:
    """``(f - center) / scale`` so that model and data share the normalized scale."""

    def __init__(self, model, center, scale):
        self.model, self.center, self.scale = model, center, scale
        self.thread_safe = getattr(model, "thread_safe", False)

    def __call__(self, X, theta):
        return (evaluate_model(self.model, X, theta) - self.center) / self.scale


class NormalizedMeanTerm:
    def __init__(self, term, center, scale):
        self.term, self.center, self.scale = term, center, scale

    def __call__(self, theta):
        mean, extra = self.term(theta)
        return (mean - self.center) / self.scale, None if extra is None else extra / self.scale**2


def resolve_model(spec: str | None, sidecar: dict | None):
    """Return (model, scenario or None) for ``builtin:<id>``, ``module:attr`` or ``none``."""
    if spec is None:
        if sidecar and sidecar.get("scenario") in SCENARIO_IDS:
            spec = "builtin:" + sidecar["scenario"]
        else:
            raise ConfigError("no computer model given; use --model builtin:<scenario>, "
                              "--model package.module:attr or --model none")
    if spec == "none":
        return ZeroModel(), None
    if spec.startswith("builtin:"):
        try:
            sc = get_scenario(spec.split(":", 1)[1])
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        return sc.model, sc
    if ":" not in spec:
        raise ConfigError(f"cannot parse model spec {spec!r}")
    mod_name, attr = spec.split(":", 1)
    try:
        obj = getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load computer model {spec!r}: {exc}") from exc
    return obj, None


def read_theta_file(path) -> np.ndarray:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
        vals = doc["theta"] if isinstance(doc, dict) else doc
    except json.JSONDecodeError:
        vals = text.replace(",", " ").split()
    return np.atleast_1d(np.asarray(vals, dtype=float))


def prepare(args, cfg: AnalysisConfig):
    """Read the data and assemble everything one sampler run needs."""
    X_raw, y_raw, names = read_xy_csv(args.data)
    p = X_raw.shape[1]
    max_p = int(cfg.raw["screening"]["max_p"])
    try:
        check_enumerable(p, max_p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    side_path = Path(args.data).with_suffix(".json")
    sidecar = json.loads(side_path.read_text()) if side_path.exists() else None
    meta = {"data": str(args.data), "n": int(X_raw.shape[0]), "p": p, "names": names,
            "backend": BACKEND, "version": __version__}

    if cfg.raw["data"]["scale_inputs"]:
        X, meta["input_scaling"] = scale_columns(X_raw)
    else:
        if X_raw.min() < 0 or X_raw.max() > 1:
            raise ConfigError("inputs outside [0, 1] with data.scale_inputs = false")
        X, meta["input_scaling"] = X_raw, None

    prior = cfg.prior_spec()
    emulator = None
    if args.emulator_design or cfg.raw["emulator"]:
        if not args.emulator_design:
            raise ConfigError("emulator = true needs --emulator-design")
        design = EmulatorDesign.from_csv(args.emulator_design)
        if design.p != p:
            raise ConfigError(f"emulator design has {design.p} inputs, data has {p}")
        emulator = fit_emulator(design, cfg.kernel)
        model, scenario = None, None
        k = design.k
    else:
        model, scenario = resolve_model(args.model, sidecar)
        k = len(scenario.model_dims) if scenario else None

    calibrate = cfg.calibrate
    if calibrate:
        if not prior.theta_bounds:
            if scenario is None:
                raise ConfigError("calibration needs priors.theta_bounds in the config")
            prior = prior.__class__(prior.sigma2_shape, prior.sigma2_rate, prior.sigma02_shape,
                                    prior.sigma02_rate, scenario.theta_bounds())
        if k is not None and prior.k != k:
            raise ConfigError(f"{prior.k} theta bounds given for {k} calibration parameters")
        theta = None
    else:
        if args.theta_file:
            theta = read_theta_file(args.theta_file)
        elif sidecar and scenario is not None and "true_theta" in sidecar:
            theta = np.asarray(sidecar["true_theta"][: len(scenario.model_dims)])
        elif scenario is not None:
            theta = np.asarray(scenario.model_theta)
        else:
            theta = np.empty(0)
        if k is not None and theta.size != k:
            raise ConfigError(f"theta has {theta.size} values, the model takes {k}")
    meta["calibrate"] = calibrate
    meta["theta_fixed"] = None if theta is None else theta.tolist()

    if emulator is not None:
        mean_term = EmulatorMeanTerm(emulator, X_raw)
        meta["emulator"] = {"sigma_f2": emulator.sigma_f2, "log_psi": emulator.log_psi.tolist()}
    else:
        mean_term = DirectModelTerm(model, X_raw)

    y = y_raw
    if cfg.raw["data"]["normalize_output"]:
        center, scale = float(np.mean(y_raw)), float(np.std(y_raw, ddof=1))
        if not scale > 0:
            raise ConfigError("output has zero variance; set data.normalize_output = false")
        y = (y_raw - center) / scale
        mean_term = NormalizedMeanTerm(mean_term, center, scale)
        if model is not None:
            model = NormalizedModel(model, center, scale)
        meta["output_normalization"] = {"center": center, "scale": scale}
    else:
        meta["output_normalization"] = None

    data = FieldObservations(X, y, X_model=X_raw)
    return data, model, mean_term, prior, theta, names, emulator, meta


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    try:
        sc = get_scenario(args.scenario)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    out = output_dir(args)
    from .mcmc import derive_seed

    for r in range(args.reps):
        ds = gen_dataset(sc, derive_seed(args.seed, r))
        path = out / f"{sc.identifier}_rep{r:03d}.csv"
        write_dataset(ds, path)
        print(path)
    return EXIT_OK


def cmd_screen_pips(args):
    cfg = load_config(args)
    out = output_dir(args)
    data, model, mean_term, prior, theta, names, emulator, meta = prepare(args, cfg)
    chain = run_full_sampler(data, model, prior, cfg.sampler(), a=cfg.kernel.a,
                             theta=theta, mean_term=mean_term)
    pairs = [(i - 1, j - 1) for i, j in cfg.raw["screening"]["pairs"]]
    if any(max(pr) >= data.p for pr in pairs):
        raise ConfigError("screening.pairs refers to an input that does not exist")
    alpha = cfg.spike.alpha
    alpha = alpha if isinstance(alpha, float) else cfg.spike.per_input(data.p)
    res = screen(chain, alpha=alpha, prior=cfg.model_prior,
                 threshold=cfg.threshold, names=names, pairs=pairs)
    res.write_json(out / "screening.json")
    ScreeningResult.from_json(json.loads((out / "screening.json").read_text()))
    res.write_csv(out / "screening.csv")
    with open(out / "pips_plot.csv", "w") as fh:
        fh.write("replication,input,pip\n")
        for n, v in zip(res.names, res.inclusion_probs):
            fh.write(f"0,{n},{float(v)!r}\n")
    chain.write_csv(out / "chain.csv")
    if emulator is not None:
        emulator.save(out / "emulator.json")
    meta["diagnostics"] = {k: v for k, v in chain.diagnostics.items() if k != "proposal_cov"}
    _write_json(out / "metadata.json", meta)
    cfg.write(out)
    print(res.summary())
    for pr in res.pairwise:
        print(f"P({pr['inputs'][0]} or {pr['inputs'][1]} active) = {pr['probability']:.4f}")
    print(f"MH acceptance {chain.diagnostics['mh_accept']:.3f}; results in {out}")
    return EXIT_OK


def cmd_screen_rdvs(args):
    cfg = load_config(args)
    out = output_dir(args)
    if args.T is not None:
        cfg = cfg.updated(rdvs={"T": args.T})
    if args.percentile:
        cfg = cfg.updated(rdvs={"percentiles": [float(q) for q in args.percentile]})
    data, model, mean_term, prior, theta, names, emulator, meta = prepare(args, cfg)
    if emulator is not None:
        raise ConfigError("RDVS with an emulator is not supported")
    rc = RdvsConfig(T=int(cfg.raw["rdvs"]["T"]), percentiles=tuple(cfg.raw["rdvs"]["percentiles"]),
                    sampler=cfg.sampler(), seed=cfg.seed)
    try:
        res = rdvs_run(data, model, prior, rc, a=cfg.kernel.a, theta=theta, names=names,
                       jobs=args.jobs, partial_path=out / "rdvs_partial.csv")
    except RdvsAborted as exc:
        raise NumericalError(str(exc)) from exc
    res.write_csv(out / "rdvs.csv")
    res.write_json(out / "rdvs.json")
    RdvsResult.from_json(json.loads((out / "rdvs.json").read_text()))
    _write_json(out / "metadata.json", meta)
    cfg.write(out)
    print(res.summary())
    return EXIT_OK


def cmd_bench(args):
    cfg = load_config(args)
    out = output_dir(args)
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    alpha = cfg.spike.alpha
    if not isinstance(alpha, float):
        raise ConfigError("bench suites use one shared spike alpha")
    alphas = sorted({alpha, *(args.extra_alpha or [])})
    rdvs = None
    if args.suite in ("table1", "table2") and not args.no_rdvs:
        T = args.T if args.T is not None else int(cfg.raw["rdvs"]["T"])
        rdvs = RdvsConfig(T=T, percentiles=tuple(cfg.raw["rdvs"]["percentiles"]),
                          sampler=cfg.sampler(), seed=cfg.seed)
    # the suites follow the simulation protocol: unit-cube inputs, raw outputs
    report = run_bench(args.suite, args.reps, cfg.seed, cfg.sampler(), cfg.prior_spec(False),
                       alphas=alphas, model_prior=cfg.model_prior, a=cfg.kernel.a, rdvs=rdvs,
                       rdvs_reps=args.rdvs_reps, jobs=args.jobs)
    report.write(out, alpha)
    cfg.write(out)
    print(report.format_tables(alpha))
    print(f"results in {out}")
    return EXIT_OK


def cmd_report(args):
    src = Path(args.input)
    if not src.is_dir():
        raise OSError(f"{src} is not a directory")
    found = False
    if (src / "screening.json").exists():
        res = ScreeningResult.from_json(json.loads((src / "screening.json").read_text()))
        print(f"PIPS screening ({res.n_draws} draws, alpha {res.alpha})")
        print(res.summary())
        found = True
    if (src / "rdvs.json").exists():
        res = RdvsResult.from_json(json.loads((src / "rdvs.json").read_text()))
        print("RDVS screening")
        print(res.summary())
        found = True
    if (src / "bench.json").exists():
        doc = json.loads((src / "bench.json").read_text())
        print(f"benchmark suite {doc['suite']}, alpha {doc['alpha']:g}")
        print((src / "proportions.csv").read_text())
        found = True
    if not found:
        raise OSError(f"no screening, RDVS or benchmark results in {src}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p, data=True):
    p.add_argument("--config", help="TOML analysis configuration")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./pipscreen-out)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
    p.add_argument("--n-mh", type=int, dest="n_mh", help="MH iterations (overrides the config)")
    p.add_argument("--n-mwg", type=int, dest="n_mwg", help="warmup sweeps (overrides the config)")
    if data:
        p.add_argument("--data", required=True, help="CSV with columns x_1..x_p, y")
        p.add_argument("--model", help="builtin:<scenario>, package.module:attr or none")
        p.add_argument("--calibrate", choices=("on", "off"))
        p.add_argument("--theta-file", dest="theta_file", help="fixed theta values (JSON or text)")
        p.add_argument("--emulator-design", dest="emulator_design",
                       help="CSV of model runs x_1..x_p, theta_1..theta_k, f")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipscreen", description=(
        "Screen the discrepancy function of a computer model for active inputs."))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic scenario datasets")
    sim.add_argument("--scenario", required=True, help=", ".join(SCENARIO_IDS))
    sim.add_argument("--reps", type=int, default=1)
    sim.add_argument("--seed", type=int, default=2024)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    scr = sub.add_parser("screen", help="screen one dataset")
    scr_sub = scr.add_subparsers(dest="method", required=True)
    pips = scr_sub.add_parser("pips", help="posterior inclusion probabilities")
    _add_common(pips)
    pips.add_argument("--alpha", type=float, help="spike shape (overrides the config)")
    pips.add_argument("--threshold", type=float)
    pips.set_defaults(func=cmd_screen_pips)
    rd = scr_sub.add_parser("rdvs", help="reference distribution variable selection")
    _add_common(rd)
    rd.add_argument("--T", type=int, help="number of repetitions")
    rd.add_argument("--percentile", type=float, action="append",
                    help="reference percentile in [0, 1]; repeatable")
    rd.set_defaults(func=cmd_screen_rdvs)

    b = sub.add_parser("bench", help="replicate the simulation tables")
    _add_common(b, data=False)
    b.add_argument("--suite", required=True, choices=SUITES)
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--alpha", type=float)
    b.add_argument("--extra-alpha", type=float, action="append", dest="extra_alpha",
                   help="also report PIPs at this alpha from the same chains; repeatable")
    b.add_argument("--T", type=int, help="RDVS repetitions")
    b.add_argument("--rdvs-reps", type=int, dest="rdvs_reps",
                   help="run RDVS on the first N replications only")
    b.add_argument("--no-rdvs", action="store_true", dest="no_rdvs")
    b.set_defaults(func=cmd_bench)

    rep = sub.add_parser("report", help="print a summary of an output directory")
    rep.add_argument("input")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed data files and out-of-range inputs
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
