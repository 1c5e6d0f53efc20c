"""Replication harness behind ``pipscreen bench``.

Suites:

``table1``
    The 8-input scenario with theta fixed at its true value. PIPS at
    thresholds 0.1, 0.5 and 0.9, and RDVS at its percentiles.
``table2``
    Same datasets with theta calibrated on [0, 1]^4.
``scenarios42``
    Composite scenarios 1+2, 1+3 and 1+4, each with theta fixed and
    calibrated. PIPS only; the per-replication PIPs feed boxplots.

Replication ``r`` of a scenario draws its dataset from
``derive_seed(seed, r)`` (``derive_seed(seed, s, r)`` for the ``s``-th
scenario of ``scenarios42``), its chain from the same key extended by 1,
and its RDVS repetitions from the key extended by 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import csv
import json
from pathlib import Path

import numpy as np

from .likelihood import FieldObservations
from .mcmc import SamplerConfig, derive_seed, map_jobs, run_full_sampler
from .pips import screen
from .priors import ModelSpacePrior, PriorSpec
from .rdvs import RdvsConfig, rdvs_run
from .scenarios import gen_dataset, get_scenario

SUITES = ("table1", "table2", "scenarios42")
THRESHOLDS = (0.1, 0.5, 0.9)
SCENARIOS_42 = ("s42_12", "s42_13", "s42_14")


@dataclass(frozen=True)
class BenchTask:
    scenario: str
    setting: str                 # "fixed" or "calibrated"
    rep: int
    key: tuple
    seed: int
    sampler: SamplerConfig
    prior: PriorSpec
    alphas: tuple
    model_prior: ModelSpacePrior
    a: float = 1.9
    rdvs: RdvsConfig | None = None


@dataclass
class ReplicationResult:
    scenario: str
    setting: str
    rep: int
    truth: np.ndarray
    pips: dict                   # alpha -> (p,) array
    rdvs_active: dict | None     # percentile -> (p,) bool array
    mh_accept: float
    log_rho: np.ndarray | None = None


def _data_and_chain(task: BenchTask):
    sc = get_scenario(task.scenario)
    ds = gen_dataset(sc, derive_seed(task.seed, *task.key))
    data = FieldObservations(ds.X, ds.y)
    if task.setting == "calibrated":
        prior = replace(task.prior, theta_bounds=sc.theta_bounds())
        theta = None
    else:
        prior = replace(task.prior, theta_bounds=())
        theta = sc.model_theta
    cfg = replace(task.sampler, seed=derive_seed(task.seed, *task.key, 1))
    chain = run_full_sampler(data, sc.model, prior, cfg, a=task.a, theta=theta)
    return sc, ds, data, prior, theta, chain


def run_replication(task: BenchTask) -> ReplicationResult:
    """One dataset, one PIPS chain, and optionally one RDVS run."""
    sc, ds, data, prior, theta, chain = _data_and_chain(task)
    pips = {float(al): screen(chain, alpha=al, prior=task.model_prior).inclusion_probs
            for al in task.alphas}
    rdvs_active = None
    if task.rdvs is not None:
        rc = replace(task.rdvs, seed=derive_seed(task.seed, *task.key, 2))
        res = rdvs_run(data, sc.model, prior, rc, a=task.a, theta=theta)
        rdvs_active = {float(q): res.active(q) for q in rc.percentiles}
    return ReplicationResult(sc.identifier, task.setting, task.rep, ds.truth, pips,
                             rdvs_active, float(chain.diagnostics["mh_accept"]), chain.log_rho)


def build_tasks(suite: str, reps: int, seed: int, sampler: SamplerConfig, prior: PriorSpec,
                alphas=(100.0,), model_prior=None, a=1.9, rdvs: RdvsConfig | None = None,
                rdvs_reps: int | None = None):
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    model_prior = model_prior or ModelSpacePrior()
    rdvs_reps = reps if rdvs_reps is None else rdvs_reps
    common = dict(seed=seed, sampler=sampler, prior=prior, alphas=tuple(alphas),
                  model_prior=model_prior, a=a)
    tasks = []
    if suite in ("table1", "table2"):
        setting = "fixed" if suite == "table1" else "calibrated"
        for r in range(reps):
            tasks.append(BenchTask("s41", setting, r, (r,), rdvs=rdvs if r < rdvs_reps else None,
                                   **common))
    else:
        for s, ident in enumerate(SCENARIOS_42):
            for setting in ("fixed", "calibrated"):
                for r in range(reps):
                    tasks.append(BenchTask(ident, setting, r, (100 + s, r), **common))
    return tasks


@dataclass
class BenchReport:
    suite: str
    results: list
    thresholds: tuple = THRESHOLDS
    meta: dict = field(default_factory=dict)

    def groups(self):
        out = {}
        for res in self.results:
            out.setdefault((res.scenario, res.setting), []).append(res)
        return out

    def pips_proportions(self, alpha: float):
        """{(scenario, setting): {threshold: (p,) detection proportions}}."""
        out = {}
        for key, rows in self.groups().items():
            mat = np.array([r.pips[float(alpha)] for r in rows])
            out[key] = {t: (mat > t).mean(axis=0) for t in self.thresholds}
        return out

    def rdvs_proportions(self):
        out = {}
        for key, rows in self.groups().items():
            rows = [r for r in rows if r.rdvs_active is not None]
            if not rows:
                continue
            qs = rows[0].rdvs_active.keys()
            out[key] = {q: np.mean([r.rdvs_active[q] for r in rows], axis=0) for q in qs}
        return out

    def table_rows(self, alpha: float):
        """Rows in the layout method, criterion, x1..xp."""
        rows = []
        for key, props in self.pips_proportions(alpha).items():
            for t, v in props.items():
                rows.append([*key, "PIPS", f"threshold={t:g}", *v])
        for key, props in self.rdvs_proportions().items():
            for q, v in props.items():
                rows.append([*key, "RDVS", f"q={q:g}", *v])
        return rows

    def format_tables(self, alpha: float) -> str:
        lines = []
        for key in self.groups():
            p = len(self.groups()[key][0].truth)
            truth = self.groups()[key][0].truth
            head = "".join(f"{('*' if truth[i] else '') + f'x{i + 1}':>7}" for i in range(p))
            n = len(self.groups()[key])
            lines.append(f"{key[0]} ({key[1]}), {n} replications; * = truly active")
            lines.append(f"{'method':<8}{'setting':<16}{head}")
            for row in self.table_rows(alpha):
                if tuple(row[:2]) == key:
                    vals = "".join(f"{v:>7.2f}" for v in row[4:])
                    lines.append(f"{row[2]:<8}{row[3]:<16}{vals}")
            lines.append("")
        return "\n".join(lines)

    def write(self, out_dir, alpha: float):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        p_max = max(len(r.truth) for r in self.results)
        with open(out_dir / "proportions.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "setting", "method", "criterion"]
                       + [f"x{i + 1}" for i in range(p_max)])
            for row in self.table_rows(alpha):
                w.writerow(row[:4] + [f"{v:.4f}" for v in row[4:]])
        with open(out_dir / "pips_long.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "setting", "replication", "alpha", "input", "pip", "truly_active"])
            for r in self.results:
                for al, v in r.pips.items():
                    for i, pip in enumerate(v):
                        w.writerow([r.scenario, r.setting, r.rep, f"{al:g}", f"x{i + 1}",
                                    repr(float(pip)), int(r.truth[i])])
        doc = {"schema": "pipscreen.bench/1", "suite": self.suite, "alpha": alpha,
               "thresholds": list(self.thresholds), "meta": self.meta,
               "replications": [{"scenario": r.scenario, "setting": r.setting, "rep": r.rep,
                                 "mh_accept": r.mh_accept,
                                 "pips": {f"{al:g}": v.tolist() for al, v in r.pips.items()},
                                 "rdvs_active": None if r.rdvs_active is None else
                                 {f"{q:g}": v.astype(int).tolist() for q, v in r.rdvs_active.items()}}
                                for r in self.results]}
        (out_dir / "bench.json").write_text(json.dumps(doc, indent=2) + "\n")


def run_bench(suite: str, reps: int, seed: int, sampler: SamplerConfig, prior: PriorSpec,
              alphas=(100.0,), model_prior=None, a=1.9, rdvs: RdvsConfig | None = None,
              rdvs_reps: int | None = None, jobs: int = 1, keep_chains=False) -> BenchReport:
    tasks = build_tasks(suite, reps, seed, sampler, prior, alphas, model_prior, a, rdvs, rdvs_reps)
    results = map_jobs(run_replication, tasks, jobs)
    if not keep_chains:
        for r in results:
            r.log_rho = None
    return BenchReport(suite, results, meta={"reps": reps, "seed": seed,
                                             "alphas": [float(x) for x in alphas]})
