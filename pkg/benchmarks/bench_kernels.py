"""Compare the numba and numpy LSTM recurrence kernels.

    python3 benchmarks/bench_kernels.py [--repeats N]

Shapes cover the per-utterance PVAD case (batch 1, hidden 64 / 256) and the
speaker-encoder minibatch case (batch 16, hidden 256).
"""

import argparse
import time

import numpy as np

from pvadbench import _kernels as K

SHAPES = [
    # (T, B, H)
    (400, 1, 64),
    (400, 1, 256),
    (48, 16, 256),
]


def _best(fn, repeats):
    fn()  # warm-up (includes JIT compile for numba)
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def run(repeats=5):
    if not hasattr(K, "lstm_forward_numba"):
        print("numba is not installed; only the numpy path is available")
        return []
    rows = []
    for T, B, H in SHAPES:
        rng = np.random.default_rng(0)
        xproj = rng.normal(size=(T, B, 4 * H))
        w = rng.normal(size=(H, 4 * H)) / np.sqrt(H)
        h0 = np.zeros((B, H))
        c0 = np.zeros((B, H))
        hs, cs, gates = K.lstm_forward_numpy(xproj, w, h0, c0)
        dhs = rng.normal(size=(T, B, H))

        def numba_bwd():
            dz, _, _ = K.lstm_backward_numba(dhs, gates, hs, cs, h0, c0, w)
            K._recurrent_weight_grad(dz, hs, h0)

        timings = {
            "fwd_numpy": _best(lambda: K.lstm_forward_numpy(xproj, w, h0, c0), repeats),
            "fwd_numba": _best(lambda: K.lstm_forward_numba(xproj, w, h0, c0), repeats),
            "bwd_numpy": _best(lambda: K.lstm_backward_numpy(dhs, gates, hs, cs, h0, c0, w), repeats),
            "bwd_numba": _best(numba_bwd, repeats),
        }
        rows.append(((T, B, H), timings))
    print(f"{'T,B,H':>14} {'fwd numpy':>10} {'fwd numba':>10} {'bwd numpy':>10} {'bwd numba':>10}  (ms)")
    for shape, t in rows:
        print(f"{','.join(map(str, shape)):>14} " + " ".join(f"{1e3 * t[k]:10.2f}" for k in
                                                          ("fwd_numpy", "fwd_numba", "bwd_numpy", "bwd_numba")))
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    run(ap.parse_args().repeats)
