"""Independent oracles shared by the unit and acceptance suites."""

import numpy as np

from cellfree.drl import Batch, DenseNet


def numeric_grads(net, x, upstream, h=1e-5):
    """Central differences of sum(upstream * net(x)) for every parameter and input."""
    def loss(inp):
        return float(np.sum(upstream * net.forward(inp)))

    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss(x)
            p[idx] = old - h
            dn = loss(x)
            p[idx] = old
            g[idx] = (up - dn) / (2 * h)
        out.append(g)
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        gx[idx] = (loss(xp) - loss(xm)) / (2 * h)
    return out, gx


def assert_grads_match(net, x, upstream, rtol=1e-4, atol=1e-7):
    net.forward(x)
    grads, gin = net.backward(upstream)
    num, numx = numeric_grads(net, x, upstream)
    for a, b in zip(grads + [gin], num + [numx]):
        assert np.allclose(a, b, rtol=rtol, atol=atol)


class WeightsOnlySGD:
    """Lookup-table mode: only the weight matrix of a one-hot linear net moves."""

    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        params[0] -= self.lr * grads[0]


# two states, two actions; action a moves to state a
REWARD = np.array([[1.0, 0.0], [0.3, 2.0]])
ZETA = 0.9


def value_iteration():
    q = np.zeros((2, 2))
    for _ in range(2000):
        q = REWARD + ZETA * q.max(axis=1)[None, :]
    return q


def tabular_batch(pairs, shift=0.0):
    eye = np.eye(2)
    s = np.array([p[0] for p in pairs])
    a = np.array([p[1] for p in pairs])
    return Batch(eye[s], np.zeros((len(pairs), 1)), a, REWARD[s, a] + shift, eye[a], np.arange(len(pairs)))


def table_net():
    return DenseNet([2, 2], ["linear"], params=[np.zeros((2, 2)), np.zeros(2)])
