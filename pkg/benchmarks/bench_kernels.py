"""Per-step cost of the numba kernels against the pure-numpy fallback.

Both backends are imported directly and fed identical random draws, so the
benchmark also checks that they produce the same walker trajectory and
step estimates. Usage: python benchmarks/bench_kernels.py [--steps N]
"""
import argparse
import time

import numpy as np

from mcmp2 import _kernels_numba, _kernels_numpy
from mcmp2.estimator import Engine
from mcmp2.fixtures import FIXTURE_WEIGHTS, h2_spinors, synthetic_4c_spinors
from mcmp2.sampler import burn_in, init_ensemble
from mcmp2.weights import WeightSpec, sample_tau


def run_backend(mod, engine, ens, normals, uniforms, taus):
    spec = engine.spec
    pos, g, r12, acc = ens.positions.copy(), ens.g.copy(), ens.r12.copy(), ens.accepted.copy()
    n = len(taus)
    out_re, out_im = np.empty(n), np.empty(n)
    t = time.perf_counter()
    mod.production(pos, g, r12, ens.sigma, normals, uniforms, taus, spec.centers,
                   spec.coefficients, spec.exponents, *engine.kernel_args(), acc, out_re, out_im)
    return time.perf_counter() - t, pos, out_re


def bench(name, spinors, weights, walkers, steps):
    spec = WeightSpec.build(spinors.molecule, weights)
    engine = Engine.build(spinors, spec)
    ens = init_ensemble(walkers, spec, seed=0)
    burn_in(ens, spec, 500)
    gen = np.random.default_rng(1)
    normals = gen.standard_normal((steps, walkers, 2, 3))
    uniforms = gen.random((steps, walkers))
    taus = sample_tau(engine.tau, gen.random(steps))
    # compile outside the timed call
    run_backend(_kernels_numba, engine, ens, normals[:1], uniforms[:1], taus[:1])
    t_nb, pos_nb, re_nb = run_backend(_kernels_numba, engine, ens, normals, uniforms, taus)
    t_np, pos_np, re_np = run_backend(_kernels_numpy, engine, ens, normals, uniforms, taus)
    same = np.array_equal(pos_nb, pos_np) and np.allclose(re_nb, re_np, rtol=1e-10, atol=0)
    print(f"{name:10s} m={walkers:2d}  numba {t_nb / steps * 1e6:9.1f} us/step  "
          f"numpy {t_np / steps * 1e6:9.1f} us/step  speedup {t_np / t_nb:6.1f}x  "
          f"agree={same}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    for m in (4, 8):
        bench("h2_sto3g", h2_spinors(), FIXTURE_WEIGHTS["h2_sto3g"], m, args.steps)
        bench("synth4c", synthetic_4c_spinors(), FIXTURE_WEIGHTS["synth4c"], m, args.steps)


if __name__ == "__main__":
    main()
