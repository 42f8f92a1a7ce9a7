"""Dense feed-forward networks with manual backpropagation, plus Adam and SGD."""

import numpy as np

ACTIVATIONS = ("relu", "linear", "sigmoid", "tanh")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "linear":
        return z
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "linear":
        return np.ones_like(z)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    raise ValueError(f"unknown activation {name!r}")


class DenseNet:
    """Stack of affine layers; layer i maps sizes[i] -> sizes[i+1] and applies activations[i]."""

    def __init__(self, sizes, activations, rng=None, final_scale=None, params=None):
        sizes = [int(s) for s in sizes]
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.activations = list(activations)
        if params is not None:
            self.weights = [np.array(p, dtype=float) for p in params[0::2]]
            self.biases = [np.array(p, dtype=float) for p in params[1::2]]
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            self.weights, self.biases = [], []
            for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
                if i == len(sizes) - 2 and final_scale is not None:
                    lim = final_scale
                elif self.activations[i] == "relu":
                    lim = np.sqrt(6.0 / n_in)
                else:
                    lim = np.sqrt(6.0 / (n_in + n_out))
                self.weights.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
                self.biases.append(np.zeros(n_out))
        self._cache = None

    @classmethod
    def identity(cls, n):
        net = cls([n, n], ["linear"], params=[np.eye(n), np.zeros(n)])
        return net

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def set_params(self, params):
        for dst, src in zip(self.params(), params):
            dst[...] = src

    def copy(self):
        return DenseNet(self.sizes, self.activations, params=[p.copy() for p in self.params()])

    def forward(self, x):
        a = np.atleast_2d(np.asarray(x, dtype=float))
        inputs, pre, post = [], [], []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            inputs.append(a)
            z = a @ w + b
            a = _act(act, z)
            pre.append(z)
            post.append(a)
        self._cache = (inputs, pre, post)
        return a

    def backward(self, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters (same order as
        params()) and w.r.t. the input of the last forward call."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        inputs, pre, post = self._cache
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            dz = g * _act_grad(self.activations[i], pre[i], post[i])
            grads[2 * i] = inputs[i].T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            g = dz @ self.weights[i].T
        return grads, g

    def num_params(self):
        return sum(p.size for p in self.params())


def finite_difference_check(net, x, upstream, eps=1e-6, rtol=1e-4, atol=1e-8):
    """Compare backward() with central differences of sum(upstream * net(x)).

    Returns the worst relative error over parameters and inputs.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    net.forward(x)
    grads, gin = net.backward(upstream)

    def loss(inp):
        return float(np.sum(upstream * net.forward(inp)))

    worst = 0.0
    for p, g in zip(net.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss(x)
            flat[i] = old - eps
            dn = loss(x)
            flat[i] = old
            num = (up - dn) / (2 * eps)
            worst = max(worst, abs(num - gflat[i]) / max(atol, abs(num), abs(gflat[i])) if abs(num - gflat[i]) > atol else 0.0)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        num = (loss(xp) - loss(xm)) / (2 * eps)
        diff = abs(num - gin[idx])
        worst = max(worst, diff / max(atol, abs(num), abs(gin[idx])) if diff > atol else 0.0)
    return worst


class Adam:
    def __init__(self, params, lr=5e-5, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if self.lr != 0.0:
                p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v, "lr": self.lr, "betas": [self.b1, self.b2], "eps": self.eps}

    def load_state(self, st):
        self.t = int(st["t"])
        self.m = [np.array(a, dtype=float) for a in st["m"]]
        self.v = [np.array(a, dtype=float) for a in st["v"]]


class SGD:
    def __init__(self, params=None, lr=1e-2):
        self.lr = lr

    def step(self, params, grads):
        if self.lr == 0.0:
            return
        for p, g in zip(params, grads):
            p -= self.lr * g

    def state(self):
        return {"lr": self.lr}

    def load_state(self, st):
        pass
