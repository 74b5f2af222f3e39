"""Compare the compiled propagation kernels against the NumPy reference.

Times one forward and one forward+backward through the three-layer stack
on synthetic graphs of increasing size, for every backend built in this
environment.  Inputs are seeded, so both backends see identical work.

The interesting output is the crossover: the compiled loops win on the
small subgraphs that mask optimization hammers millions of times (no
sparse-operator construction, no BLAS dispatch overhead), while the
reference pulls ahead past a few hundred nodes where BLAS throughput
dominates.  Training touches the large regime only once per epoch, so
the default backend stays the compiled one.

Run from the repository root:

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --nodes 500,2000,8000 --repeats 30
"""

import argparse
import time

import numpy as np

from nsexplain.backend import available_backends
from nsexplain.model import HIDDEN_DIMS


def _synthetic_case(num_nodes, rng, feature_dim=10, num_classes=4):
    """Arc arrays for a random graph with roughly 2x nodes in edges."""
    num_edges = 2 * num_nodes
    seen = set()
    while len(seen) < num_edges:
        u, v = rng.integers(0, num_nodes, size=2)
        if u != v:
            seen.add((min(int(u), int(v)), max(int(u), int(v))))
    edges = np.array(sorted(seen))
    recv = np.concatenate([edges[:, 0], edges[:, 1]])
    send = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.argsort(recv, kind="stable")
    recv, send = recv[order], send[order]
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(recv, minlength=num_nodes), out=indptr[1:])
    arc_w = rng.uniform(0.2, 1.0, size=len(recv))
    X = rng.normal(size=(num_nodes, feature_dim))
    dims = (feature_dim, *HIDDEN_DIMS)
    weights = []
    for din, dout in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(size=(din, dout)) * 0.3)
        weights.append(rng.normal(size=dout) * 0.1)
    return recv, send, indptr, arc_w, X, weights


def _time(fn, repeats):
    """Median wall time over `repeats` calls, after one warmup."""
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def bench_case(impl, case, repeats):
    recv, send, indptr, arc_w, X, weights = case
    n = X.shape[0]
    val, diag, deg = impl.normalize_adjacency(recv, send, arc_w, n)
    f_args = (recv, send, indptr, val, diag, X, *weights, None, None, None)
    inter = impl.gcn_forward(*f_args)
    M1, P1, H1, M2, P2, H2, M3, P3, H3 = inter
    dH3 = np.ones_like(H3)
    W1, W2, W3 = weights[0], weights[2], weights[4]
    b_args = (
        recv, send, indptr, val, diag, deg, X, W1, W2, W3,
        M1, P1, H1, M2, P2, H2, M3, P3, None, None, None, dH3,
    )
    fwd = _time(lambda: impl.gcn_forward(*f_args), repeats)
    bwd = _time(lambda: impl.gcn_backward(*b_args), repeats)
    return fwd, bwd


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--nodes",
        default="30,100,300,1500",
        help="comma-separated graph sizes (default: 30,100,300,1500)",
    )
    parser.add_argument(
        "--repeats", type=int, default=20, help="timed calls per case (default: 20)"
    )
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.nodes.split(",") if s.strip()]
    backends = available_backends()
    print(f"backends: {', '.join(sorted(backends))}")
    print(f"{'nodes':>7} {'arcs':>7} {'backend':>9} {'forward':>11} {'fwd+bwd':>11} {'speedup':>8}")
    for n in sizes:
        case = _synthetic_case(n, np.random.default_rng(args.seed))
        rows = {}
        for name in sorted(backends):
            fwd, bwd = bench_case(backends[name], case, args.repeats)
            rows[name] = (fwd, fwd + bwd)
        base = rows.get("python", next(iter(rows.values())))
        for name, (fwd, tot) in sorted(rows.items()):
            speedup = base[1] / tot if tot else float("inf")
            print(
                f"{n:>7} {len(case[0]):>7} {name:>9} "
                f"{fwd * 1e3:>9.3f}ms {tot * 1e3:>9.3f}ms {speedup:>7.2f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
