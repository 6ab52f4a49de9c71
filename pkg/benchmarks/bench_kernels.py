"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Shapes match the temporal path of the default model (batch 4, 168 steps,
16 nodes, 16 channels). Exits non-zero if the two backends disagree.
"""
import argparse
import timeit

import numpy as np

from adagtcn.diffcore import _fallback

try:
    from adagtcn.diffcore import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    x = rng.normal(size=(4 * 16, 16, 168))
    for d, r in ((2, 1), (7, 1), (7, 2)):
        w = rng.normal(size=(3, 16, d))
        out_len = 168 - (d - 1) * r
        g = rng.normal(size=(x.shape[0], 3, out_len))
        yield f"conv fwd d={d} r={r}", "conv1d_forward", (x, w, r)
        yield f"conv bwd d={d} r={r}", "conv1d_backward", (x, w, g, r)
    scores = rng.normal(size=(4 * 16, 16))
    yield "topk k=4 (64x16)", "topk_rows", (scores, 4)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e .` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    status = 0
    for label, name, a in cases(rng):
        slow, fast = getattr(_fallback, name), getattr(_ckernels, name)
        ref, got = slow(*a), fast(*a)
        pairs = zip(ref, got) if isinstance(ref, tuple) else [(ref, got)]
        if not all(np.allclose(u, v, rtol=1e-10, atol=1e-10) for u, v in pairs):
            print(f"{label}: backends disagree")
            status = 1
        t_slow = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat)) * 1e3
        t_fast = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<20} {t_slow:>10.3f} {t_fast:>10.3f} {t_slow / t_fast:>7.1f}x")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
