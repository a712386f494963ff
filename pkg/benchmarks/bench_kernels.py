#!/usr/bin/env python3
"""Benchmark the numba and numpy kernel implementations against each other.

Covers each hot kernel at a pretraining-step-like shape, plus one end-to-end
masked-LM training step under both backends. Run:

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import time

import numpy as np

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from adaptlm import kernels as K  # noqa: E402


def bench(fn, *args, repeat=20, warmup=2):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def kernel_cases(rng, dtype=np.float32):
    b, heads, length, hidden, ff, vocab = 16, 4, 128, 256, 1024, 8000
    rows = b * length
    x = rng.standard_normal((rows, hidden)).astype(dtype)
    gamma = rng.standard_normal(hidden).astype(dtype)
    beta = rng.standard_normal(hidden).astype(dtype)
    dy = rng.standard_normal((rows, hidden)).astype(dtype)
    _, mean, rstd = K.np_layernorm_forward(x, gamma, beta, 1e-12)
    ff_x = rng.standard_normal((rows, ff)).astype(dtype)
    scores = rng.standard_normal((b, heads, length, length)).astype(dtype)
    key_mask = (rng.random((b, length)) > 0.1).astype(dtype)
    probs = K.np_attention_softmax(scores, key_mask)
    dprobs = rng.standard_normal(scores.shape).astype(dtype)
    logits = rng.standard_normal((rows // 4, vocab)).astype(dtype)
    targets = rng.integers(0, vocab, rows // 4)
    param = rng.standard_normal(hidden * hidden).astype(dtype)
    grad = rng.standard_normal(hidden * hidden).astype(dtype)
    m = np.zeros_like(param)
    v = np.zeros_like(param)
    ids = rng.integers(0, vocab, rows)
    table = np.zeros((vocab, hidden), dtype=dtype)

    return [
        ("gelu_forward", (ff_x,)),
        ("gelu_backward", (ff_x * 0.3, ff_x)),
        ("layernorm_forward", (x, gamma, beta, 1e-12)),
        ("layernorm_backward", (dy, x, gamma, mean, rstd)),
        ("attention_softmax", (scores, key_mask)),
        ("attention_softmax_backward", (dprobs, probs)),
        ("softmax_xent", (logits, targets)),
        ("adamw_update", (param, grad, m, v, 1e-3, 0.9, 0.999, 1e-6, 0.01, 0.1, 0.001)),
        ("embedding_grad", (ids, dy, table)),
    ]


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    print(f"{'kernel':28s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, args in cases:
        t_np = bench(getattr(K, "np_" + name), *args, repeat=repeat)
        if K.HAVE_NUMBA:
            t_nb = bench(getattr(K, "nb_" + name), *args, repeat=repeat)
            print(f"{name:28s} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms {t_np / t_nb:7.2f}x")
        else:
            print(f"{name:28s} {t_np * 1e3:9.3f}ms {'n/a':>10s} {'':>8s}")


def bench_training_step(repeat):
    from adaptlm.encoder import EncoderConfig, init_weights
    from adaptlm.pretrain import MaskingPolicy, apply_masking, mlm_step_grads
    from adaptlm.tokenizer import encode_pieces
    from adaptlm.vocab import Vocabulary

    entries = (["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
               + [f"w{i}" for i in range(800)])
    vocab = Vocabulary(tuple(entries))
    cfg = EncoderConfig(vocab_size=len(vocab), hidden=128, layers=2, heads=4,
                        ff_dim=512, max_positions=128, dropout=0.0, seed=0)
    weights = init_weights(cfg)
    rng = np.random.default_rng(1)
    batch = [encode_pieces([f"w{int(rng.integers(800))}" for _ in range(126)],
                           vocab, 128) for _ in range(16)]
    masked = apply_masking(batch, MaskingPolicy(seed=2), vocab)

    print(f"\nend-to-end masked-LM step (batch 16 x 128, hidden 128, 2 layers)")
    backends = ["numpy"] + (["numba"] if K.HAVE_NUMBA else [])
    for backend in backends:
        K.set_backend(backend)
        t = bench(lambda: mlm_step_grads(masked, weights), repeat=max(repeat // 4, 3))
        print(f"  {backend:6s} {t * 1e3:9.2f}ms/step")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    print(f"numba available: {K.HAVE_NUMBA}; active backend: {K.backend()}")
    bench_kernels(args.repeat)
    bench_training_step(args.repeat)
