"""Numpy fallback kernels for dense-net forward/backward passes.

The compiled extension (`_ckernels`) implements the same two functions with
identical semantics; `_backend` picks whichever is available at import time.
"""
import numpy as np

ACT_TANH = 0
ACT_RELU = 1


def forward(weights, biases, act, x):
    """Forward pass on a (batch, d_in) float64 matrix.

    Returns (output, cache) where cache is the list of layer inputs
    [a_0, ..., a_{L-1}] (a_0 is x itself) that backward() consumes.
    The final layer is linear; hidden layers use tanh or relu.
    """
    a = x
    cache = [a]
    last = len(weights) - 1
    for i in range(len(weights)):
        z = a @ weights[i] + biases[i]
        if i == last:
            return z, cache
        a = np.tanh(z) if act == ACT_TANH else np.maximum(z, 0.0)
        cache.append(a)
    # zero-layer nets are rejected at construction time
    raise AssertionError("empty network")


def backward(weights, act, cache, grad_out):
    """Backward pass from dL/d(output), shape (batch, d_out).

    Returns (weight grads, bias grads, dL/dx) with parameter gradients summed
    over the batch. Activation derivatives are taken from the cached
    post-activations (relu subgradient at 0 is 0).
    """
    n = len(weights)
    dws = [None] * n
    dbs = [None] * n
    g = grad_out
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            a = cache[i + 1]
            g = g * (1.0 - a * a) if act == ACT_TANH else g * (a > 0.0)
        dws[i] = cache[i].T @ g
        dbs[i] = g.sum(axis=0)
        g = g @ weights[i].T
    return dws, dbs, g
