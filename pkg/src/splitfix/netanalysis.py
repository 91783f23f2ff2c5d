"""
Certification of feedforward networks with averaged activations:
the theta_m constant, Lipschitz bounds sandwiched between ||W|| and
the per-layer norm product, an averagedness test, and the recurrent
(skip-connection) equilibrium iteration.
"""

import itertools
import json
import warnings

import numpy as np

from .linalg import as_matrix, as_vector, svd
from .operators import (FunctionDescriptor, prox, OperatorRef, averaged,
                        RegularityTag, NONEXPANSIVE, TagDegradation)
from .drivers import km_iterate

__all__ = [
    'FeedforwardNet', 'Certificate', 'theta', 'lipschitz_certificate',
    'averagedness_check', 'smallest_alpha', 'recurrent_iterate',
    'ACTIVATIONS',
]

THETA_CAP = 12  # 2^(m-1) term enumeration becomes unreasonable past this


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    # unimodal sigmoid, a proximity operator with range (-1/2, 1/2)
    return 1.0 / (1.0 + np.exp(-x)) - 0.5


def _softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


def _identity(x):
    return np.asarray(x, dtype=float).copy()


ACTIVATIONS = {
    'relu': _relu,
    'sigmoid': _sigmoid,
    'softmax': _softmax,
    'identity': _identity,
}


class FeedforwardNet:
    """Layered network T = T_m o ... o T_1 with T_i x = R_i(W_i x +
    b_i).

    layers is a list of (W_i, b_i, activation) with activation one of
    'relu', 'sigmoid', 'softmax', 'identity', or a FunctionDescriptor
    (applied through its prox at parameter 1).
    """

    def __init__(self, layers):
        if not layers:
            raise ValueError("need at least one layer")
        self.weights = []
        self.biases = []
        self.activations = []
        prev = None
        for W, b, act in layers:
            W = as_matrix(W)
            b = as_vector(b)
            if W.shape[0] != len(b):
                raise ValueError("bias dimension mismatch")
            if prev is not None and W.shape[1] != prev:
                raise ValueError("chained layer dimensions mismatch")
            prev = W.shape[0]
            self.weights.append(W)
            self.biases.append(b)
            if isinstance(act, FunctionDescriptor):
                self.activations.append(act)
            elif act in ACTIVATIONS:
                self.activations.append(act)
            else:
                raise ValueError("unknown activation %r" % (act,))

    @property
    def m(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def activate(self, i, z):
        act = self.activations[i]
        if isinstance(act, FunctionDescriptor):
            return np.asarray(prox(act, 1.0, z), dtype=float)
        return ACTIVATIONS[act](np.asarray(z, dtype=float))

    def layer(self, i, x):
        return self.activate(i, self.weights[i] @ np.asarray(x, dtype=float)
                             + self.biases[i])

    def __call__(self, x):
        y = np.asarray(x, dtype=float)
        for i in range(self.m):
            y = self.layer(i, y)
        return y

    def end_to_end(self):
        """The linear part W = W_m ... W_1."""
        W = self.weights[0]
        for Wi in self.weights[1:]:
            W = Wi @ W
        return W

    def to_json(self):
        layers = []
        for W, b, act in zip(self.weights, self.biases, self.activations):
            if isinstance(act, FunctionDescriptor):
                raise ValueError("custom activations are not serializable")
            layers.append({'W': W.tolist(), 'b': b.tolist(),
                           'activation': act})
        return json.dumps({'layers': layers})

    @staticmethod
    def from_json(s):
        d = json.loads(s) if isinstance(s, str) else dict(s)
        return FeedforwardNet([(l['W'], l['b'], l['activation'])
                               for l in d['layers']])


def _spectral_norm(M):
    # dense exact norm so the sandwich inequality holds to roundoff
    _, s, _ = svd(as_matrix(M))
    return float(s[0]) if len(s) else 0.0


def theta(net):
    """The constant theta_m: over every set of cut positions
    j_1 < ... < j_l in {1..m-1} (including none), the product of the
    spectral norms of the resulting segment products W_{j+1..j'}.
    theta_m / 2^(m-1) is a Lipschitz constant of the network.
    """
    m = net.m
    if m > THETA_CAP:
        raise ValueError("theta enumeration capped at m = %d; compose "
                         "certificates blockwise for deeper nets" % THETA_CAP)
    # seg[i][j] = W_{j} ... W_{i} for 0-based i <= j
    seg = {}
    for i in range(m):
        P = net.weights[i]
        seg[(i, i)] = P
        for j in range(i + 1, m):
            P = net.weights[j] @ P
            seg[(i, j)] = P
    norms = {k: _spectral_norm(P) for k, P in seg.items()}
    total = 0.0
    for l in range(m):
        for cuts in itertools.combinations(range(1, m), l):
            bounds = (0,) + cuts + (m,)
            term = 1.0
            for a, b in zip(bounds[:-1], bounds[1:]):
                term *= norms[(a, b - 1)]
            total += term
    return total


class Certificate:
    """Lipschitz certificate for a feedforward net."""

    __slots__ = ('theta_m', 'lipschitz_bound', 'lower_bound', 'upper_bound',
                 'tightened_bound', 'averaged_alpha')

    def __init__(self, theta_m, lipschitz_bound, lower_bound, upper_bound,
                 tightened_bound=None, averaged_alpha=None):
        self.theta_m = theta_m
        self.lipschitz_bound = lipschitz_bound
        self.lower_bound = lower_bound
        self.upper_bound = upper_bound
        self.tightened_bound = tightened_bound
        self.averaged_alpha = averaged_alpha

    def to_json(self):
        return json.dumps({
            'theta_m': self.theta_m,
            'lipschitz_bound': self.lipschitz_bound,
            'lower_bound': self.lower_bound,
            'upper_bound': self.upper_bound,
            'tightened_bound': self.tightened_bound,
            'averaged_alpha': self.averaged_alpha,
        }, sort_keys=True)


def lipschitz_certificate(net):
    """Certificate with bound theta_m/2^(m-1), sandwiched between
    ||W|| and the per-layer norm product; nets with all-nonnegative
    weights additionally get the tightened bound ||W|| itself."""
    m = net.m
    th = theta(net)
    bound = th / 2.0 ** (m - 1)
    lower = _spectral_norm(net.end_to_end())
    upper = 1.0
    for W in net.weights:
        upper *= _spectral_norm(W)
    scale = max(1.0, lower, upper)
    if lower > bound + 1e-10 * scale or bound > upper + 1e-10 * scale:
        raise AssertionError("sandwich inequality violated: %g, %g, %g"
                             % (lower, bound, upper))
    tightened = None
    if all(np.all(W >= 0) for W in net.weights):
        tightened = lower
    alpha = smallest_alpha(net) if net.in_dim == net.out_dim else None
    return Certificate(th, bound, lower, upper, tightened, alpha)


def _alpha_gap(net, alpha, th=None):
    m = net.m
    W = net.end_to_end()
    if th is None:
        th = theta(net)
    shifted = W - 2.0 ** m * (1.0 - alpha) * np.eye(W.shape[0])
    return (_spectral_norm(shifted) - _spectral_norm(W) + 2.0 * th
            - 2.0 ** m * alpha)


def averagedness_check(net, alpha):
    """Whether ||W - 2^m (1-alpha) Id|| - ||W|| + 2 theta_m <= 2^m
    alpha; requires a square end-to-end map."""
    if net.in_dim != net.out_dim:
        raise ValueError("averagedness test needs a square network")
    if not (0.5 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [1/2, 1]")
    return _alpha_gap(net, alpha) <= 1e-12 * 2.0 ** net.m


def smallest_alpha(net, tol=1e-9):
    """Smallest alpha in [1/2, 1] passing averagedness_check, found by
    bisection; None when even alpha = 1 fails."""
    if net.in_dim != net.out_dim:
        raise ValueError("averagedness test needs a square network")
    th = theta(net)
    slack = 1e-12 * 2.0 ** net.m
    g_hi = _alpha_gap(net, 1.0, th)
    if g_hi > slack:
        return None
    g_lo = _alpha_gap(net, 0.5, th)
    if g_lo <= slack:
        return 0.5
    if g_lo < g_hi:
        raise AssertionError("alpha gap is not monotone on [1/2, 1]")
    lo, hi = 0.5, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _alpha_gap(net, mid, th) <= slack:
            hi = mid
        else:
            lo = mid
    return hi


def recurrent_iterate(net, lam_schedule, x0, stop=None):
    """Recurrent run x_{n+1} = (1 - lambda_n) x_n + lambda_n T x_n for
    a square net; returns (trace, equilibrium layer states, per-layer
    prox-characterization residuals).

    The states satisfy x_1 = T_1 x_m (wrap-around) and x_i = T_i
    x_{i-1}; residual i is ||x_i - R_i(W_i x_{i-1} + b_i)|| with index
    0 read as m, so every entry but the last vanishes by construction
    and the last measures the fixed-point accuracy.
    """
    if net.in_dim != net.out_dim:
        raise ValueError("recurrent iteration needs a square network")
    alpha = smallest_alpha(net)
    if alpha is None:
        warnings.warn("no averagedness certificate; running in "
                      "nonexpansive mode without a convergence claim",
                      TagDegradation)
        T = OperatorRef(net, RegularityTag(NONEXPANSIVE))
    else:
        tag = averaged(alpha) if alpha < 1.0 else RegularityTag(NONEXPANSIVE)
        T = OperatorRef(net, tag)
    trace = km_iterate(T, lam_schedule, x0, stop)
    m = net.m
    states = [None] * m
    prev = trace.x  # x_0 is read as x_m
    for i in range(m):
        states[i] = net.layer(i, prev)
        prev = states[i]
    residuals = []
    for i in range(m):
        before = states[i - 1] if i > 0 else trace.x
        z = net.weights[i] @ before + net.biases[i]
        residuals.append(float(np.linalg.norm(states[i]
                                              - net.activate(i, z))))
    # wrap-around residual: the reported x_m against the KM limit
    residuals[-1] = max(residuals[-1],
                        float(np.linalg.norm(states[-1] - trace.x)))
    return trace, states, residuals
