"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row times one workload under every available backend and reports the
best of ``--repeat`` runs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

import causet_qft
from causet_qft import _backend
from causet_qft.causet import choose_preferred_past
from causet_qft.functionals import PolyFunctional, contract_orders, self_contract
from causet_qft.generators import LatticeSpec, SprinklingSpec, diamond_lattice, sprinkle
from causet_qft.operators import build_plambda, greens
from causet_qft.quantization import sj_two_point, star_chain, wick_rule


def _random_poly(rng, n, degree, terms):
    out = {}
    for _ in range(terms):
        k = int(rng.integers(1, degree + 1))
        out[tuple(sorted(rng.integers(0, n, size=k)))] = rng.normal()
    return PolyFunctional(n, out)


def workloads():
    rng = np.random.default_rng(0)
    cs = diamond_lattice(LatticeSpec(3, 4))
    gs = greens(build_plambda(cs, choose_preferred_past(cs)))
    tp = sj_two_point(gs)
    F, G = _random_poly(rng, cs.size, 5, 20), _random_poly(rng, cs.size, 5, 20)
    fields = [PolyFunctional.linear(f) for f in rng.normal(size=(6, cs.size))]
    big = sprinkle(SprinklingSpec(("diamond", 0.0, 0.0, 20.0, 0.0), 2.0, seed=1))
    blob = np.packbits(big.causal).tobytes()
    return {
        "contract degree-5 pair": lambda: contract_orders(F, G, gs.commutator, 5),
        "self-contract degree 5": lambda: self_contract(F, tp.H),
        "six-point Wick chain": lambda: star_chain(fields, wick_rule(tp)),
        f"link ranks (N={big.size})": lambda: _backend.kernels.link_ranks(
            [np.flatnonzero(big.link[z]).tolist() for z in range(big.size)], big.size),
        f"checksum ({len(blob)} bytes)": lambda: _backend.kernels.fnv1a64(blob),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = causet_qft.available_backends()
    jobs = workloads()
    width = max(len(name) for name in jobs)
    print(f"{'workload':<{width}}  " + "  ".join(f"{b:>10}" for b in backends) + "  speedup")
    for name, job in jobs.items():
        times = {}
        for b in backends:
            causet_qft.set_backend(b)
            times[b] = min(timeit.repeat(job, number=1, repeat=args.repeat))
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<{width}}  " + "  ".join(f"{times[b] * 1e3:8.2f}ms" for b in backends) + f"  {speed:6.1f}x")


if __name__ == "__main__":
    main()
