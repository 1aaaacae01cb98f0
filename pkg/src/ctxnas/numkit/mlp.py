"""Dense multilayer perceptrons with explicit forward and backward passes.

Everything is float64. Parameters live in plain numpy arrays so optimizer
state and serialization stay trivial; there is no autodiff graph.
"""
import numpy as np

from ._backend import ACT_RELU, ACT_TANH, kernels

_ACT_CODES = {"tanh": ACT_TANH, "relu": ACT_RELU}


class Mlp:
    """Fully connected net: linear output, tanh or relu hidden layers.

    Weights init uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the given
    seed or Generator, so runs are reproducible.
    """

    def __init__(self, layer_dims, activation="tanh", rng=None):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ValueError(f"layer_dims must be >=2 positive ints, got {layer_dims}")
        if activation not in _ACT_CODES:
            raise ValueError(f"activation must be tanh or relu, got {activation!r}")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.layer_dims = dims
        self.activation = activation
        self._act = _ACT_CODES[activation]
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(d_in)
            self.weights.append(np.ascontiguousarray(rng.uniform(-bound, bound, (d_in, d_out))))
            self.biases.append(np.ascontiguousarray(rng.uniform(-bound, bound, d_out)))

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def param_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def param_list(self):
        """Flat [W0, b0, W1, b1, ...] view of the live parameter arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_param_list(self, params):
        if len(params) != 2 * len(self.weights):
            raise ValueError("parameter list length mismatch")
        for i in range(len(self.weights)):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValueError("parameter shape mismatch")
            # copy in place so existing references (optimizer state) stay live
            self.weights[i][...] = np.asarray(w, dtype=np.float64)
            self.biases[i][...] = np.asarray(b, dtype=np.float64)

    def copy(self):
        other = Mlp(self.layer_dims, self.activation, rng=0)
        other.set_param_list([p.copy() for p in self.param_list()])
        return other

    def _as_batch(self, x):
        arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        squeeze = arr.ndim == 1
        if squeeze:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[1] != self.in_dim:
            raise ValueError(
                f"input shape {np.shape(x)} incompatible with first layer dim {self.in_dim}"
            )
        return arr, squeeze

    def forward(self, x):
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x):
        """Returns (output, cache); feed the cache to backward_cached."""
        arr, squeeze = self._as_batch(x)
        y, cache = kernels.forward(self.weights, self.biases, self._act, arr)
        return (y[0] if squeeze else y), cache

    def backward_cached(self, cache, grad_out):
        """Gradients from a prior forward_cached; grad_out is dL/d(output).

        Returns (param_grads, input_grad): param_grads matches param_list()
        ordering and is summed over the batch; input_grad has the batch shape.
        """
        g = np.ascontiguousarray(np.asarray(grad_out, dtype=np.float64))
        squeeze = g.ndim == 1
        if squeeze:
            g = g.reshape(1, -1)
        if g.shape != (cache[0].shape[0], self.out_dim):
            raise ValueError(
                f"upstream gradient shape {np.shape(grad_out)} does not match "
                f"a ({cache[0].shape[0]}, {self.out_dim}) forward pass"
            )
        dws, dbs, dx = kernels.backward(self.weights, self._act, cache, g)
        grads = []
        for dw, db in zip(dws, dbs):
            grads.append(dw)
            grads.append(db)
        return grads, (dx[0] if squeeze else dx)

    def backward(self, x, grad_out):
        """Recompute the forward pass for x, then run backward_cached."""
        _, cache = self.forward_cached(x)
        return self.backward_cached(cache, grad_out)


def mlp_forward(net, x):
    """Forward pass; accepts a vector or a (batch, d_in) matrix."""
    return net.forward(x)


def mlp_backward(net, x, grad_out):
    """Parameter and input gradients of a scalar loss with upstream grad_out."""
    return net.backward(x, grad_out)
