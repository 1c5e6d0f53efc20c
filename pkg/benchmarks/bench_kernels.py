"""Compare the compiled and pure-numpy kernel backends.

Times the two hot kernels (correlation assembly and the GaSP
log-likelihood) at the simulation-study sizes, then one short full-model
chain per backend. Run with ``python benchmarks/bench_kernels.py``.
"""

import argparse
import time
import timeit

import numpy as np

from pipscreen import _backend, kernel
from pipscreen.likelihood import FieldObservations
from pipscreen.mcmc import SamplerConfig, run_full_sampler
from pipscreen.priors import PriorSpec
from pipscreen.scenarios import gen_dataset, get_scenario

SIZES = ((50, 8), (100, 5), (200, 8))


def time_call(fn, repeat=5):
    number, _ = timeit.Timer(fn).autorange()
    best = min(timeit.Timer(fn).repeat(repeat=repeat, number=number))
    return best / number


def kernel_rows(backends):
    rows = []
    for n, p in SIZES:
        rng = np.random.default_rng(n + p)
        X = rng.random((n, p))
        dist = kernel.scaled_distances(X, 1.9)
        log_rho = np.log(rng.uniform(0.05, 1.0, p))
        resid = rng.standard_normal(n)
        for name in backends:
            impl = _backend.load(name)
            t_corr = time_call(lambda: impl.corr_matrix(dist, log_rho, n))
            t_ll = time_call(lambda: impl.gasp_loglik(dist, log_rho, resid, 0.8, 0.01))
            rows.append((n, p, name, t_corr, t_ll))
    return rows


def chain_rows(backends, n_mh):
    sc = get_scenario("s41")
    ds = gen_dataset(sc, 0)
    data = FieldObservations(ds.X, ds.y)
    cfg = SamplerConfig(seed=1, n_mwg=n_mh // 2, n_mh=n_mh)
    rows = []
    for name in backends:
        start = time.perf_counter()
        run_full_sampler(data, sc.model, PriorSpec(), cfg, theta=sc.model_theta, backend=name)
        rows.append((name, time.perf_counter() - start))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-mh", type=int, default=2000, help="MH iterations in the chain timing")
    args = ap.parse_args(argv)
    backends = _backend.available()
    print(f"backends: {', '.join(backends)} (default: {_backend.BACKEND})\n")
    print(f"{'n':>5}{'p':>4}  {'backend':<8}{'corr_matrix':>14}{'gasp_loglik':>14}")
    rows = kernel_rows(backends)
    for n, p, name, t_corr, t_ll in rows:
        print(f"{n:>5}{p:>4}  {name:<8}{t_corr * 1e6:>11.1f} us{t_ll * 1e6:>11.1f} us")
    if len(backends) > 1:
        print()
        for n, p in SIZES:
            by = {r[2]: r for r in rows if r[:2] == (n, p)}
            print(f"n={n}, p={p}: speedup corr {by['python'][3] / by['cython'][3]:.1f}x, "
                  f"loglik {by['python'][4] / by['cython'][4]:.1f}x")
    print(f"\nfull-model chain on s41 ({args.n_mh // 2} warmup sweeps + {args.n_mh} MH draws):")
    for name, secs in chain_rows(backends, args.n_mh):
        print(f"  {name:<8}{secs:>8.2f} s")


if __name__ == "__main__":
    main()
