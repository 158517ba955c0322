"""Benchmark the numba kernels against their numpy fallbacks.

Kernel microbenchmarks run both implementations side by side in-process.
``--train`` additionally times a short end-to-end training run per backend
in subprocesses (the backend is chosen at import time via LABELATTN_NO_NUMBA).

Usage: python benchmarks/bench_kernels.py [--repeats 200] [--train]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from labelattn import _kernels as K

RNG = np.random.default_rng(0)


def make_cases():
    small_pred = RNG.uniform(0, 1, size=320)            # batch 32 x 10 classes
    small_tgt = RNG.integers(0, 2, size=320).astype(np.float64)
    big_pred = RNG.uniform(0, 1, size=30_720)
    big_tgt = RNG.integers(0, 2, size=30_720).astype(np.float64)
    params = RNG.normal(size=13_000)
    grads = RNG.normal(size=13_000)
    m = RNG.normal(size=13_000) * 0.01
    v = np.abs(RNG.normal(size=13_000)) * 0.01
    weights = RNG.uniform(size=(32, 5))
    labels = RNG.integers(0, 2, size=(5, 32, 10)).astype(np.float64)
    gout = RNG.normal(size=(32, 10))
    rows = RNG.dirichlet(np.ones(10), size=10)
    cum = np.ascontiguousarray(np.cumsum(rows, axis=1))
    clean = RNG.integers(0, 10, size=1_000_000)
    uniforms = RNG.uniform(size=1_000_000)
    logits = RNG.normal(size=(32, 5))

    return [
        ("sigmoid [320]", "sigmoid", (small_pred,)),
        ("softmax2d [32x5]", "softmax2d", (logits,)),
        ("binarize [320]", "binarize", (small_pred, 50.0, 0.5)),
        ("bce_forward [320]", "bce_forward", (small_pred, small_tgt, 1e-7)),
        ("bce_forward [30k]", "bce_forward", (big_pred, big_tgt, 1e-7)),
        ("bce_grad_pred [320]", "bce_grad_pred", (small_pred, small_tgt, 1e-7)),
        ("bce_grad_target [320]", "bce_grad_target", (small_pred, small_tgt, 1e-7)),
        ("adam_update [13k]", "adam_update", (params, grads, m, v, 3, 1e-4, 0.9, 0.999, 1e-8)),
        ("weighted_label_fwd [32x5x10]", "weighted_label_fwd", (weights, labels)),
        ("weighted_label_grad [32x5x10]", "weighted_label_grad", (gout, labels)),
        ("corrupt_draw [1M]", "corrupt_draw", (clean, cum, uniforms)),
    ]


def time_call(fn, args, repeats):
    fn(*args)  # warm up (jit compile on the numba side)
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def bench_kernels(repeats):
    if "numba" not in K.IMPLEMENTATIONS:
        print("numba backend unavailable; nothing to compare")
        return
    np_impl = K.IMPLEMENTATIONS["numpy"]
    nb_impl = K.IMPLEMENTATIONS["numba"]
    print(f"{'kernel':32s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}", flush=True)
    for label, name, args in make_cases():
        reps = max(1, repeats // 50) if "1M" in label else repeats
        t_np = time_call(np_impl[name], args, reps)
        t_nb = time_call(nb_impl[name], args, reps)
        print(f"{label:32s} {t_np * 1e6:10.1f}us {t_nb * 1e6:10.1f}us "
              f"{t_np / t_nb:7.2f}x", flush=True)


TRAIN_SNIPPET = """
import time
import numpy as np
from labelattn import _kernels
from labelattn.annotators import AnnotatorSpec
from labelattn.data import SyntheticSpec, attach_annotators, synth_blobs
from labelattn.metatrain import MetaConfig, train_attention
from labelattn.model import classifier_init

spec = SyntheticSpec(n_classes=10, dim=32, samples_per_class=100, seed=3)
ds = attach_annotators(synth_blobs(spec),
                       [AnnotatorSpec("hammer_spammer", 0.3),
                        AnnotatorSpec("ordered_confusion", 0.5),
                        AnnotatorSpec("adversarial")], seed=3)
model = classifier_init((32, 128, 64), 10, rng=np.random.default_rng(0))
cfg = MetaConfig(epochs=2, seed=0)
train_attention(model, ds, cfg)  # warm up / compile
start = time.perf_counter()
train_attention(model, ds, cfg)
print(f"backend={_kernels.BACKEND}: {time.perf_counter() - start:.2f}s "
      f"for 2 epochs x 63 iterations, M=3")
"""


def bench_training():
    for disable in ("0", "1"):
        env = dict(os.environ, LABELATTN_NO_NUMBA=disable)
        subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--train", action="store_true",
                        help="also time a short end-to-end training run per backend")
    args = parser.parse_args()
    bench_kernels(args.repeats)
    if args.train:
        bench_training()


if __name__ == "__main__":
    main()
