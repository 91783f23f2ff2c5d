"""
Named problem solvers built on the drivers and splitting engines:
convex feasibility, penalized regression, graphical lasso, robust
PCA, matrix completion, projection and proximal cycles, Nash
equilibria, plug-and-play schemes, adjoint-mismatch analysis, and
recovery from nonlinear observations.
"""

import json
import math
import warnings

import numpy as np

from .linalg import LinMap, as_matrix, as_vector, operator_norm, sym_eig
from .operators import (SetDescriptor, FunctionDescriptor, OperatorRef,
                        MonotoneOp, RegularityTag, NONEXPANSIVE,
                        averaged, firmly_nonexpansive, project, set_contains,
                        prox,
                        func_value, soft_threshold, compose, combine,
                        forward_step, Constant, Explicit,
                        validate_relaxation_schedule, TagDegradation)
from .drivers import (StopRule, Rng, km_iterate, cyclic_iterate,
                      block_update_iterate, RoundRobin, _run,
                      CONVERGED)
from .splitting import (InclusionProblem, PrimalDualTrace, forward_backward,
                        block_update_fb)

__all__ = [
    'FeasibilitySpec', 'GameSpec', 'NetSpecLayeredDenoiser', 'MismatchSpec',
    'ObservationSpec', 'pocs', 'split_feasibility',
    'inconsistent_feasibility', 'lasso_logistic', 'lasso_objective',
    'graphical_lasso', 'robust_pca', 'matrix_completion', 'cycles',
    'nash_fbf', 'nash_dy', 'best_response_residual', 'nash_n45_game',
    'nash_bilinear_game', 'pnp_fb', 'pnp_dr', 'pnp_admm', 'mismatched_fb',
    'nonlinear_observation_solve', 'problem_from_json',
]


# -- specs --------------------------------------------------------------------

class FeasibilitySpec:
    """Feasibility data: target sets, optional per-set linear maps
    (split form), optional weights, optional hard-constraint set."""

    __slots__ = ('sets', 'maps', 'weights', 'hard')

    def __init__(self, sets, maps=None, weights=None, hard=None):
        if not sets:
            raise ValueError("need at least one set")
        self.sets = list(sets)
        self.maps = list(maps) if maps is not None else None
        if self.maps is not None and len(self.maps) != len(self.sets):
            raise ValueError("one map per set")
        if weights is not None:
            weights = [float(w) for w in weights]
            if any(w <= 0 for w in weights) or abs(sum(weights) - 1) > 1e-12:
                raise ValueError("weights must be positive and sum to 1")
        self.weights = weights
        self.hard = hard


class GameSpec:
    """An m-player game: per-player nonsmooth penalties psi_i, an
    optional joint coupling function f on the stacked profile,
    per-player partial gradients of the smooth losses, and the shared
    Lipschitz (delta) or cocoercivity (beta) constant of the stacked
    gradient map.

    grads[i] takes the list of player blocks and returns the partial
    gradient of player i's loss with respect to its own variable.
    losses[i], when given, evaluates player i's smooth loss at a
    profile (used by the best-response oracle).
    """

    __slots__ = ('psis', 'f', 'grads', 'delta', 'beta', 'dims', 'losses')

    def __init__(self, psis, grads, dims, f=None, delta=None, beta=None,
                 losses=None):
        if len(psis) != len(grads) or len(psis) != len(dims):
            raise ValueError("per-player lists must align")
        if delta is None and beta is None:
            raise ValueError("declare delta or beta for the coupling")
        if (delta is not None and delta < 0) or (beta is not None
                                                 and beta <= 0):
            raise ValueError("coupling constant must be positive")
        self.psis = list(psis)
        self.grads = list(grads)
        self.dims = [int(d) for d in dims]
        self.f = f
        self.delta = delta
        self.beta = beta
        self.losses = list(losses) if losses is not None else None

    @property
    def m(self):
        return len(self.psis)

    def grad_block(self, i, xs):
        return np.asarray(self.grads[i](xs), dtype=float)


class NetSpecLayeredDenoiser:
    """Plug-and-play data: a denoiser with a declared regularity tag
    and a smooth data-fit term given by its gradient and cocoercivity
    constant (the averagedness claim is the caller's)."""

    __slots__ = ('Q', 'grad', 'beta', 'f')

    def __init__(self, Q, grad, beta, f=None):
        if Q.tag is None:
            raise ValueError("the denoiser needs a regularity tag")
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.Q = Q
        self.grad = grad
        self.beta = float(beta)
        self.f = f


class MismatchSpec:
    """Adjoint-mismatch data: true forward map H, surrogate adjoint K
    (used in place of H*), Tikhonov weight kappa, observation y, and
    the regularizer f. L = K o H + kappa Id is assembled internally."""

    __slots__ = ('H', 'K', 'kappa', 'y', 'f', 'L')

    def __init__(self, H, K, kappa, y, f=None):
        if kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if K.in_dim != H.out_dim or K.out_dim != H.in_dim:
            raise ValueError("K must map the data space back to the "
                             "signal space")
        self.H = H
        self.K = K
        self.kappa = float(kappa)
        self.y = as_vector(y)
        self.f = f
        n = H.in_dim
        Hm, Km = H.to_matrix(), K.to_matrix()
        self.L = Km @ Hm + self.kappa * np.eye(n)


class ObservationSpec:
    """Nonlinear observations: per-k (R_k, S_k, r_k) with each
    S_k o R_k firmly nonexpansive, sampled at registration."""

    __slots__ = ('Rs', 'Ss', 'rs', 'dim')

    def __init__(self, items, dim, samples=200, seed=0, tol=1e-9):
        self.Rs = [it[0] for it in items]
        self.Ss = [it[1] for it in items]
        self.rs = [as_vector(it[2]) for it in items]
        self.dim = int(dim)
        gen = np.random.default_rng(seed)
        for k in range(len(self.Rs)):
            T = lambda x, k=k: np.asarray(
                self.Ss[k](np.asarray(self.Rs[k](x), dtype=float)),
                dtype=float)
            for _ in range(samples):
                x = gen.standard_normal(self.dim)
                y = gen.standard_normal(self.dim)
                d = T(x) - T(y)
                lhs = float(np.dot(d, d))
                rhs = float(np.dot(x - y, d))
                if lhs > rhs + tol * (1 + lhs):
                    raise ValueError("S_%d o R_%d failed the sampled firm "
                                     "nonexpansiveness check" % (k, k))


# -- feasibility ---------------------------------------------------------------

def _projector_ref(sd, dim=None):
    return OperatorRef(lambda x: project(sd, x), firmly_nonexpansive(), dim)


def pocs(spec, x0, stop=None, barycentric=False):
    """Projection onto convex sets: sequential sweeps by default, the
    simultaneous (barycentric) relaxation when requested.

    A sequential run over three or more sets that stalls with a
    nonvanishing sweep residual is flagged as inconsistent and the
    within-sweep cycle points are attached to the trace metadata.
    """
    ops = [_projector_ref(s) for s in spec.sets]
    if barycentric:
        weights = spec.weights or [1.0 / len(ops)] * len(ops)
        T = combine(weights, ops)
        return km_iterate(T, Constant(1.0), x0, stop)
    trace, limits = cyclic_iterate(ops, x0, stop)
    # the sweep converges to its own cycle whether or not the sets
    # intersect; inconsistency shows as a limit outside some set
    infeasible = not all(set_contains(s, trace.x, tol=1e-6)
                         for s in spec.sets)
    if len(ops) >= 3 and not trace.diverging and infeasible:
        warnings.warn("the sweep limit violates at least one set; the "
                      "instance looks inconsistent, reporting cycle "
                      "points", UserWarning)
        trace.metadata['cycle_points'] = limits
    return trace


def split_feasibility(C, D, L, x0, stop=None, gamma=None, lam_schedule=None):
    """Split feasibility: find x in C with Lx in D via
    x_{n+1} = x_n + lambda_n (proj_C(x_n - gamma L*(Lx_n -
    proj_D(Lx_n))) - x_n), gamma in (0, 2/||L||^2)."""
    nL = operator_norm(L, inflate=True)
    hi = 2.0 / nL ** 2
    if gamma is None:
        gamma = 0.5 * hi
    if not (0 < gamma < hi):
        raise ValueError("gamma must lie in (0, 2/||L||^2)")

    # Id - gamma L*(Id - proj_D)L is a forward step on a 1/||L||^2
    # cocoercive map
    B = MonotoneOp.from_map(
        lambda x: L.adjoint(L.forward(x) - project(D, L.forward(x))),
        beta=1.0 / nL ** 2)
    T = compose([_projector_ref(C), forward_step(B, gamma)])
    return km_iterate(T, lam_schedule or Constant(1.0), x0, stop)


def inconsistent_feasibility(C, targets, weights, x0, stop=None, gamma=None,
                             schedule=None, rng=None):
    """Hard-constrained least-squares feasibility: minimize the
    weighted mean squared distance of L_i x to D_i over x in C.

    Per iteration the active targets refresh t_i = x + gamma
    L_i*(proj_{D_i}(L_i x) - L_i x), the rest are recycled, and
    x_{n+1} = proj_C(sum w_i t_i); gamma in (0, 2/max ||L_i||^2).
    """
    Ls = [t[0] for t in targets]
    Ds = [t[1] for t in targets]
    norms = [operator_norm(L, inflate=True) for L in Ls]
    hi = 2.0 / max(n ** 2 for n in norms)
    if gamma is None:
        gamma = 0.5 * hi
    if not (0 < gamma < hi):
        raise ValueError("gamma must lie in (0, 2/max ||L_i||^2)")

    def target_op(L, D, g=gamma):
        def fn(x):
            lx = L.forward(x)
            return x + g * L.adjoint(project(D, lx) - lx)
        return OperatorRef(fn, averaged(0.5))

    Ts = [target_op(L, D) for L, D in zip(Ls, Ds)]
    T0 = _projector_ref(C)
    schedule = schedule or RoundRobin(len(Ts), block_size=len(Ts))
    return block_update_iterate(T0, Ts, weights, schedule, x0, stop=stop,
                                rng=rng)


# -- penalized regression ------------------------------------------------------

def lasso_objective(A, eta, alpha, loss='square'):
    """Objective callable for the penalized regression problem."""
    A = as_matrix(A)
    eta = as_vector(eta)

    def square(x):
        r = A @ x - eta
        return 0.5 * float(np.dot(r, r)) + alpha * float(np.abs(x).sum())

    def logistic(x):
        t = A @ x
        return (float(np.sum(np.logaddexp(0.0, t) - eta * t))
                + alpha * float(np.abs(x).sum()))

    if loss == 'square':
        return square
    if loss == 'logistic':
        return logistic
    raise ValueError("unknown loss %r" % (loss,))


def lasso_logistic(A, eta, alpha, loss='square', algorithm='block_fb',
                   x0=None, stop=None, schedule=None, rng=None, gamma=None):
    """Sparsity-penalized regression: squared or logistic loss over
    the design rows plus an l1 penalty; block-update forward-backward
    by default, plain forward-backward as the full-batch path."""
    A = as_matrix(A)
    eta = as_vector(eta)
    if alpha < 0:
        raise ValueError("the penalty weight must be nonnegative")
    if loss not in ('square', 'logistic'):
        raise ValueError("unknown loss %r" % (loss,))
    m, n = A.shape
    x0 = np.zeros(n) if x0 is None else as_vector(x0)
    objective = lasso_objective(A, eta, alpha, loss)
    curv = 1.0 if loss == 'square' else 0.25

    def full_grad(x):
        t = A @ x
        if loss == 'square':
            return A.T @ (t - eta)
        return A.T @ (1.0 / (1.0 + np.exp(-t)) - eta)

    f0 = FunctionDescriptor.l1(alpha)
    if algorithm == 'fb':
        delta = curv * operator_norm(LinMap.from_matrix(A),
                                     inflate=True) ** 2
        B = MonotoneOp.from_map(full_grad, beta=1.0 / delta)
        probm = InclusionProblem(MonotoneOp.from_function(f0), B)
        return forward_backward(probm, x0, stop, gamma=gamma,
                                objective=objective)
    if algorithm != 'block_fb':
        raise ValueError("unknown algorithm %r" % (algorithm,))

    # one block per design row; block gradients are rescaled by m so
    # the weighted average reproduces the full gradient
    def row_grad(i):
        a = A[i]
        if loss == 'square':
            return lambda x: m * a * (float(np.dot(a, x)) - eta[i])
        return lambda x: m * a * (1.0 / (1.0 + math.exp(-float(np.dot(a, x))))
                                  - eta[i])

    grads = [row_grad(i) for i in range(m)]
    deltas = [m * curv * float(np.dot(A[i], A[i])) for i in range(m)]
    weights = [1.0 / m] * m
    schedule = schedule or RoundRobin(m, block_size=m)
    if gamma is None:
        gamma = 1.0 / max(deltas)
    tr = block_update_fb(f0, grads, deltas, weights, schedule, gamma, x0,
                         stop=stop, rng=rng, objective=objective)
    return tr


# -- matrix estimation ---------------------------------------------------------

def graphical_lasso(O, chi, gamma, Y0=None, lam_schedule=None, stop=None):
    """Sparse inverse covariance selection: minimize <O, X> -
    ln det X + chi ||X||_1 over symmetric positive definite X by
    Douglas-Rachford on the spectral and entrywise proximal maps.

    Every reported iterate X_n is symmetric positive definite.
    """
    O = as_matrix(O)
    scale = max(1.0, float(np.abs(O).max()))
    if np.abs(O - O.T).max() > 1e-10 * scale:
        raise ValueError("O must be symmetric")
    if chi < 0 or gamma <= 0:
        raise ValueError("chi must be nonnegative and gamma positive")
    lam_schedule = lam_schedule or Constant(1.0)
    validate_relaxation_schedule(0.5, lam_schedule)
    Y0 = np.eye(O.shape[0]) if Y0 is None else as_matrix(Y0)
    sol = {}

    def logdet_prox(Y):
        S = 0.5 * (Y + Y.T) - gamma * O  # symmetrize to absorb roundoff
        mu, U = sym_eig(0.5 * (S + S.T))
        lifted = (mu + np.sqrt(mu ** 2 + 4.0 * gamma)) / 2.0
        return U @ np.diag(lifted) @ U.T

    def step(n, Y):
        X = logdet_prox(Y)
        Z = soft_threshold(2.0 * X - Y, gamma * chi)
        sol['X'] = X
        lam = lam_schedule.value(n, 0.5)
        return Y + lam * (Z - X), float(np.linalg.norm(Z - X))

    def objective(Y):
        X = sol['X']
        sign, logdet = np.linalg.slogdet(X)
        return (float(np.sum(O * X)) - float(logdet)
                + chi * float(np.abs(X).sum()))

    tr = _run(step, Y0, stop, objective=objective)
    tr.iterates = [logdet_prox(Y) for Y in tr.iterates]
    tr.x = logdet_prox(tr.x)
    return tr


def robust_pca(O, chi, gamma, lam_schedule=None, stop=None):
    """Sparse-plus-low-rank decomposition: minimize ||Y||_nuc +
    chi ||X||_1 subject to X + Y = O, by Douglas-Rachford on the
    product space of pairs.

    Returns (X, Y, trace); every reported pair satisfies X + Y = O
    exactly because the constraint projection is applied last.
    """
    O = as_matrix(O)
    if chi <= 0:
        raise ValueError("chi must be positive")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lam_schedule = lam_schedule or Constant(1.0)
    validate_relaxation_schedule(0.5, lam_schedule)
    l1 = FunctionDescriptor.l1(chi)
    nuc = FunctionDescriptor.nuclear(1.0)

    def proj_pair(X, Y):
        d = 0.5 * (O - X - Y)
        return X + d, Y + d

    sol = {}

    def step(n, state):
        SX, SY = state
        WX, WY = proj_pair(SX, SY)  # constraint resolvent
        ZX = prox(l1, gamma, 2.0 * WX - SX)
        ZY = prox(nuc, gamma, 2.0 * WY - SY)
        lam = lam_schedule.value(n, 0.5)
        sol['X'], sol['Y'] = WX, WY
        res = math.sqrt(float(np.sum((ZX - WX) ** 2))
                        + float(np.sum((ZY - WY) ** 2)))
        return [SX + lam * (ZX - WX), SY + lam * (ZY - WY)], res

    def objective(state):
        return func_value(nuc, sol['Y']) + func_value(l1, sol['X'])

    tr = _run(step, [O.copy(), np.zeros_like(O)], stop, objective=objective)
    tr.iterates = [proj_pair(SX, SY) for SX, SY in tr.iterates]
    X, Y = proj_pair(tr.x[0], tr.x[1])
    tr.x = [X, Y]
    return X, Y, tr


def matrix_completion(O, mask, chi, X0=None, gamma=None, lam=None,
                      stop=None):
    """Low-rank completion: minimize half the squared misfit on the
    observed entries plus chi times the nuclear norm, by
    forward-backward with the singular-value soft threshold."""
    O = as_matrix(O)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != O.shape:
        raise ValueError("mask must match the observation shape")
    if chi < 0:
        raise ValueError("chi must be nonnegative")
    if gamma is None:
        gamma = 1.0
    if not (0 < gamma < 2.0):
        raise ValueError("gamma must lie in (0, 2) since ||proj_V|| = 1")
    if lam is None:
        lam = 1.0
    nuc = FunctionDescriptor.nuclear(chi) if chi > 0 else None
    X0 = np.where(mask, O, 0.0) if X0 is None else as_matrix(X0)

    def objective(X):
        mis = 0.5 * float(np.sum((np.where(mask, X - O, 0.0)) ** 2))
        return mis + (func_value(nuc, X) if nuc is not None else 0.0)

    def step(n, X):
        U = X - gamma * np.where(mask, X - O, 0.0)
        P = prox(nuc, gamma, U) if nuc is not None else U
        return X + lam * (P - X), float(np.linalg.norm(P - X))

    return _run(step, X0, stop, objective=objective)


# -- cycles --------------------------------------------------------------------

def cycles(items, x0, stop=None):
    """Cycle of projections or proximal maps: returns (points, trace)
    with the points satisfying x_1 = T_1 x_2, ..., x_m = T_m x_1."""
    if len(items) < 2:
        raise ValueError("a cycle needs at least two operators")
    ops = []
    for it in items:
        if isinstance(it, SetDescriptor):
            ops.append(_projector_ref(it))
        elif isinstance(it, FunctionDescriptor):
            ops.append(OperatorRef(lambda x, fd=it: prox(fd, 1.0, x),
                                   firmly_nonexpansive()))
        else:
            raise ValueError("items must be set or function descriptors")
    trace, limits = cyclic_iterate(ops, x0, stop)
    return limits, trace


# -- Nash equilibria -----------------------------------------------------------

def _split_blocks(v, dims):
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    return [v[offs[i]:offs[i + 1]] for i in range(len(dims))]


def _joint_prox(game, gamma, blocks):
    if game.f is None:
        return [b.copy() for b in blocks]
    flat = prox(game.f, gamma, np.concatenate(blocks))
    return _split_blocks(np.asarray(flat, dtype=float), game.dims)


def nash_fbf(game, x0_blocks, v0_blocks, stop=None, gamma=None, eps=1e-3):
    """Nash equilibrium solver for Lipschitz couplings (no
    cocoercivity required), a forward-backward-forward scheme with a
    dual block per player.

    gamma in [eps, (1-eps)/(1+delta)] for the declared delta.
    """
    if game.delta is None:
        raise ValueError("nash_fbf needs the Lipschitz constant delta")
    delta = float(game.delta)
    lo, hi = eps, (1.0 - eps) / (1.0 + delta)
    if gamma is None:
        gamma = 0.5 * (lo + hi)
    if not (lo <= gamma <= hi):
        raise ValueError("gamma %g outside [%g, %g]" % (gamma, lo, hi))
    m = game.m

    def step(n, state):
        xs, vs = state[:m], state[m:]
        gx = [game.grad_block(i, xs) for i in range(m)]
        ys = [xs[i] - gamma * (gx[i] + vs[i]) for i in range(m)]
        ps = _joint_prox(game, gamma, ys)
        qs = [vs[i] + gamma * (xs[i] - prox(game.psis[i], 1.0 / gamma,
                                            vs[i] / gamma + xs[i]))
              for i in range(m)]
        gp = [game.grad_block(i, ps) for i in range(m)]
        xs_next = [xs[i] - ys[i] + ps[i] - gamma * (gp[i] + qs[i])
                   for i in range(m)]
        vs_next = [qs[i] + gamma * (ps[i] - xs[i]) for i in range(m)]
        res = math.sqrt(sum(float(np.sum((p - x) ** 2))
                            for p, x in zip(ps, xs))
                        + sum(float(np.sum((q - v) ** 2))
                              for q, v in zip(qs, vs)))
        return xs_next + vs_next, res

    tr = _run(step, [np.asarray(b, dtype=float) for b in x0_blocks]
              + [np.asarray(b, dtype=float) for b in v0_blocks], stop)
    xs, vs = tr.x[:m], tr.x[m:]
    tr.x = xs
    duals = [it[m:] for it in tr.iterates]
    tr.iterates = [it[:m] for it in tr.iterates]
    return PrimalDualTrace(tr, vs, duals)


def nash_dy(game, y0_blocks, stop=None, gamma=None, lam_schedule=None):
    """Nash equilibrium solver for cocoercive couplings via the
    three-operator (Davis-Yin) structure on the product space.

    x_{i,n} = prox_{gamma psi_i} y_{i,n}; z_n = prox_{gamma f}(2 x_n
    - y_n - gamma grad g(x_n)); y_{n+1} = y_n + lambda_n (z_n - x_n);
    gamma in (0, 2 beta).
    """
    if game.beta is None:
        raise ValueError("nash_dy needs the cocoercivity constant beta")
    beta = float(game.beta)
    if gamma is None:
        gamma = beta
    if not (0 < gamma < 2 * beta):
        raise ValueError("gamma must lie in (0, 2 beta)")
    alpha = 2.0 * beta / (4.0 * beta - gamma)
    lam_schedule = lam_schedule or Constant(1.0)
    validate_relaxation_schedule(alpha, lam_schedule)
    m = game.m

    def step(n, ys):
        xs = [prox(game.psis[i], gamma, ys[i]) for i in range(m)]
        gx = [game.grad_block(i, xs) for i in range(m)]
        zs = _joint_prox(game, gamma,
                         [2.0 * xs[i] - ys[i] - gamma * gx[i]
                          for i in range(m)])
        lam = lam_schedule.value(n, alpha)
        res = math.sqrt(sum(float(np.sum((z - x) ** 2))
                            for z, x in zip(zs, xs)))
        return [ys[i] + lam * (zs[i] - xs[i]) for i in range(m)], res

    tr = _run(step, [np.asarray(b, dtype=float) for b in y0_blocks], stop)
    tr.x = [prox(game.psis[i], gamma, tr.x[i]) for i in range(m)]
    return tr


def best_response_residual(game, profile, iters=200000):
    """Per-player optimality gaps h_i(x_i; rest) - min_x h_i(x; rest).

    Needs the per-player loss values on the GameSpec; the per-player
    minimization uses golden-section search in one dimension and a
    long proximal-gradient run otherwise.
    """
    if game.losses is None:
        raise ValueError("best-response oracle needs per-player losses")
    profile = [np.asarray(b, dtype=float) for b in profile]
    gaps = []
    for i in range(game.m):
        def h(xi):
            xi = np.atleast_1d(np.asarray(xi, dtype=float))
            pr = [xi if j == i else profile[j] for j in range(game.m)]
            val = float(game.losses[i](pr))
            try:
                val += func_value(game.psis[i], xi)
            except ValueError:
                pass
            if game.f is not None:
                val += func_value(game.f, np.concatenate(pr))
            return val

        cur = h(profile[i])
        if game.dims[i] == 1:
            best = _golden_min(h, float(profile[i][0]))
        else:
            best = _pg_min(game, i, profile, iters)
        gaps.append(max(0.0, cur - min(best, cur)))
    return gaps


def _golden_min(h, center, span=None, iters=200):
    span = span or (10.0 + 4.0 * abs(center))
    lo, hi = center - span, center + span
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = h(c), h(d)
    for _ in range(iters):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = h(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = h(d)
    return min(fc, fd)


def _pg_min(game, i, profile, iters):
    delta = game.delta if game.delta is not None else 1.0 / game.beta
    g = 1.0 / max(delta, 1e-12)
    xi = profile[i].copy()
    for _ in range(iters):
        pr = [xi if j == i else profile[j] for j in range(game.m)]
        xi_next = prox(game.psis[i], g, xi - g * game.grad_block(i, pr))
        if np.linalg.norm(xi_next - xi) <= 1e-14 * (1 + np.linalg.norm(xi)):
            xi = xi_next
            break
        xi = xi_next
    pr = [xi if j == i else profile[j] for j in range(game.m)]
    val = float(game.losses[i](pr))
    try:
        val += func_value(game.psis[i], xi)
    except ValueError:
        pass
    if game.f is not None:
        val += func_value(game.f, np.concatenate(pr))
    return val


def nash_n45_game(Ls, os, psis=None):
    """Ring-coupled quadratic game: player i's smooth loss is
    half the squared norm of L_i x_i + L_{i+1} x_{i+1} - o_i (indices
    wrap around); beta = 1/(2 max ||L_i||^2)."""
    m = len(Ls)
    Ls = [as_matrix(L) for L in Ls]
    os = [as_vector(o) for o in os]
    dims = [L.shape[1] for L in Ls]
    psis = psis or [FunctionDescriptor.zero() for _ in range(m)]
    norms = [float(np.linalg.norm(L, 2)) for L in Ls]
    beta = 1.0 / (2.0 * max(n ** 2 for n in norms))

    def grad(i):
        def g(xs):
            j = (i + 1) % m
            return Ls[i].T @ (Ls[i] @ xs[i] + Ls[j] @ xs[j] - os[i])
        return g

    def loss(i):
        def l(xs):
            j = (i + 1) % m
            r = Ls[i] @ xs[i] + Ls[j] @ xs[j] - os[i]
            return 0.5 * float(np.dot(r, r))
        return l

    return GameSpec(psis, [grad(i) for i in range(m)], dims, beta=beta,
                    losses=[loss(i) for i in range(m)])


def nash_bilinear_game(grad_phi1, grad_phi2, L, delta1, delta2, psis=None,
                       phi_vals=None):
    """Two-player zero-sum-style coupling: player 1 sees phi_1(x_1) +
    <x_1, L x_2>, player 2 sees phi_2(x_2) - <L x_1, x_2>; the stacked
    gradient is Lipschitz with max(delta_1, delta_2) + ||L||."""
    L = as_matrix(L)
    dims = [L.shape[1], L.shape[0]]
    psis = psis or [FunctionDescriptor.zero(), FunctionDescriptor.zero()]
    delta = max(float(delta1), float(delta2)) + float(np.linalg.norm(L, 2))

    def g1(xs):
        return np.asarray(grad_phi1(xs[0]), dtype=float) + L.T @ xs[1]

    def g2(xs):
        return np.asarray(grad_phi2(xs[1]), dtype=float) - L @ xs[0]

    losses = None
    if phi_vals is not None:
        losses = [
            lambda xs: float(phi_vals[0](xs[0])) + float(np.dot(xs[0], L.T @ xs[1])),
            lambda xs: float(phi_vals[1](xs[1])) - float(np.dot(L @ xs[0], xs[1])),
        ]
    return GameSpec(psis, [g1, g2], dims, delta=delta, losses=losses)


# -- plug-and-play -------------------------------------------------------------

def pnp_fb(spec, gamma, x0, lam_schedule=None, stop=None):
    """Plug-and-play forward-backward: y_n = x_n - gamma grad f(x_n);
    x_{n+1} = x_n + lambda_n (Q y_n - x_n)."""
    B = MonotoneOp.from_map(spec.grad, beta=spec.beta)
    fwd = forward_step(B, gamma)
    T = compose([spec.Q, fwd])  # degrades with a warning when untagged
    if lam_schedule is None:
        a = T.tag.averaged_constant()
        lam_schedule = Constant(1.0 if (a is not None and a < 1) else 0.5)
    return km_iterate(T, lam_schedule, x0, stop)


def pnp_dr(f, Q, gamma, y0, lam_schedule=None, stop=None, alpha=None):
    """Plug-and-play Douglas-Rachford: x_n = prox_{gamma f} y_n;
    y_{n+1} = y_n + lambda_n (Q(2 x_n - y_n) - x_n).

    The underlying operator is (2Q - Id)(2 prox - Id); lambda_n/2 must
    be an alpha-relaxation for its declared constant (alpha = 1, the
    nonexpansive reading, when Q is only known firmly nonexpansive).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if alpha is None:
        alpha = 1.0 if Q.tag.kind != 'contraction' else (1 + Q.tag.constant) / 2
    lam_schedule = lam_schedule or Constant(1.0)
    if isinstance(lam_schedule, Constant):
        halved = Constant(lam_schedule.lam / 2.0)
    elif isinstance(lam_schedule, Explicit):
        halved = Explicit([v / 2.0 for v in lam_schedule.values])
    else:
        raise ValueError("lam_schedule must be Constant or Explicit here")
    validate_relaxation_schedule(alpha, halved)
    sol = {}

    def step(n, y):
        x = prox(f, gamma, y)
        w = np.asarray(Q(2.0 * x - y), dtype=float)
        sol['x'] = x
        lam = lam_schedule.value(n, alpha)
        return y + lam * (w - x), float(np.linalg.norm(w - x))

    tr = _run(step, y0, stop)
    tr.x = prox(f, gamma, tr.x)
    return tr


def pnp_admm(f, Q, gamma, y0, z0, stop=None):
    """Plug-and-play ADMM: x_n = Q(y_n - z_n); y_{n+1} = prox_{gamma
    f}(x_n + z_n); z_{n+1} = z_n + x_n - y_{n+1}."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    sol = {}

    def step(n, state):
        y, z = state
        x = np.asarray(Q(y - z), dtype=float)
        y_next = prox(f, gamma, x + z)
        z_next = z + x - y_next
        sol['x'] = x
        res = math.sqrt(float(np.sum((x - y_next) ** 2))
                        + float(np.sum((y_next - y) ** 2)))
        return [y_next, z_next], res

    tr = _run(step, [np.asarray(y0, dtype=float),
                     np.asarray(z0, dtype=float)], stop)
    y, z = tr.x
    tr.x = np.asarray(Q(y - z), dtype=float)
    return tr


# -- adjoint mismatch ----------------------------------------------------------

def mismatched_fb(spec, x0=None, gamma=None, lam=1.0, stop=None, eps=1e-3):
    """Forward-backward with a surrogate adjoint: x_{n+1} = x_n +
    lambda (prox_{gamma f}((1 - gamma kappa) x_n - gamma K(H x_n - y))
    - x_n).

    Requires L = K o H + kappa Id to be cocoercive, certified by the
    minimum eigenvalue of (L + L*)/2. Returns (x_tilde, trace, report)
    with the matched solution x_hat, the paper bound, and, when f is
    absent, the exact difference relation.
    """
    L = spec.L
    n = L.shape[0]
    sym = 0.5 * (L + L.T)
    mu, _ = sym_eig(sym)
    zeta = float(mu.min())
    if zeta <= 0:
        raise ValueError("L + L* is not positive definite; the surrogate "
                         "scheme is not cocoercive")
    nL = float(np.linalg.norm(L, 2))
    beta = zeta / nL ** 2
    hi = 2.0 * beta / (1.0 + eps)
    if gamma is None:
        gamma = 0.5 * (eps * beta + hi)
    if not (0 < gamma < 2.0 * beta):
        raise ValueError("gamma must lie in (0, 2 beta)")
    x0 = np.zeros(n) if x0 is None else as_vector(x0)
    Hm = spec.H.to_matrix()
    Km = spec.K.to_matrix()
    f = spec.f
    b_mis = Km @ spec.y

    def step_with(M, b):
        def step(k, x):
            u = x - gamma * (M @ x - b)
            p = prox(f, gamma, u) if f is not None else u
            return x + lam * (p - x), float(np.linalg.norm(p - x))
        return step

    tr = _run(step_with(L, b_mis), x0, stop)
    x_tilde = tr.x
    # matched run: the exact adjoint H* in place of K
    L_true = Hm.T @ Hm + spec.kappa * np.eye(n)
    if f is None:
        x_hat = np.linalg.solve(L_true, Hm.T @ spec.y)
    else:
        tr_hat = _run(step_with(L_true, Hm.T @ spec.y), x0, stop)
        x_hat = tr_hat.x
    mismatch_vec = (Hm.T - Km) @ (Hm @ x_hat - spec.y)
    residual_term = float(np.linalg.norm(mismatch_vec))
    report = {
        'x_hat': x_hat,
        'diff_norm': float(np.linalg.norm(x_tilde - x_hat)),
        'residual_term': residual_term,
        'chi_half_reading': 1.0 / zeta,
        'bound_half_reading': residual_term / zeta,
        'chi_full_reading': 1.0 / float(np.min(np.linalg.eigvalsh(L + L.T))),
    }
    if f is None:
        # L x_tilde = K y and L_true x_hat = H* y give
        # L (x_tilde - x_hat) = (K - H*) y + (L_true - L) x_hat
        #                     = (H* - K)(H x_hat - y)
        report['exact_diff'] = np.linalg.solve(L, mismatch_vec)
    return x_tilde, tr, report


# -- nonlinear observations ----------------------------------------------------

def nonlinear_observation_solve(spec, x0, stop=None, mode='compose',
                                lam_schedule=None):
    """Recover x with R_k x = r_k for every k through the firmly
    nonexpansive surrogates T_k = S_k r_k + Id - S_k o R_k, composed
    and driven by KM (or swept cyclically)."""
    def make_T(k):
        Sk, Rk, rk = spec.Ss[k], spec.Rs[k], spec.rs[k]
        srk = np.asarray(Sk(rk), dtype=float)

        def fn(x):
            return srk + x - np.asarray(Sk(np.asarray(Rk(x), dtype=float)),
                                        dtype=float)
        return OperatorRef(fn, firmly_nonexpansive(), spec.dim)

    ops = [make_T(k) for k in range(len(spec.Rs))]
    if mode == 'cyclic' and len(ops) > 1:
        tr, _ = cyclic_iterate(ops, x0, stop)
        return tr
    T = ops[0] if len(ops) == 1 else compose(ops)
    return km_iterate(T, lam_schedule or Constant(1.0), x0, stop)


# -- problem files -------------------------------------------------------------

def problem_from_json(text):
    """Parse a problem file: {'problem': <kind>, ...numeric payload}.

    Returns (kind, payload dict with arrays/descriptors decoded).
    Kinds with callable ingredients (pnp, nash beyond the ring form,
    nonlinear_obs) are available through the demo path only.
    """
    d = json.loads(text)
    if 'problem' not in d:
        raise ValueError("missing 'problem' discriminator")
    kind = d['problem']
    out = {'problem': kind}
    if kind == 'feasibility':
        out['sets'] = [SetDescriptor.from_json(json.dumps(s))
                       for s in d['sets']]
        out['x0'] = as_vector(d.get('x0', np.zeros(1)))
        out['barycentric'] = bool(d.get('barycentric', False))
    elif kind in ('lasso', 'logistic'):
        out['A'] = as_matrix(d['A'])
        out['eta'] = as_vector(d['eta'])
        out['alpha'] = float(d['alpha'])
        out['loss'] = 'square' if kind == 'lasso' else 'logistic'
    elif kind == 'glasso':
        out['O'] = as_matrix(d['O'])
        out['chi'] = float(d['chi'])
    elif kind == 'rpca':
        out['O'] = as_matrix(d['O'])
        out['chi'] = float(d['chi'])
    elif kind == 'completion':
        out['O'] = as_matrix(d['O'])
        out['mask'] = np.asarray(d['mask'], dtype=bool)
        out['chi'] = float(d['chi'])
    elif kind == 'cycles':
        out['sets'] = [SetDescriptor.from_json(json.dumps(s))
                       for s in d['sets']]
        out['x0'] = as_vector(d.get('x0', np.zeros(1)))
    elif kind == 'nash':
        out['Ls'] = [as_matrix(L) for L in d['Ls']]
        out['os'] = [as_vector(o) for o in d['os']]
    elif kind == 'mismatch':
        out['H'] = as_matrix(d['H'])
        out['K'] = as_matrix(d['K'])
        out['kappa'] = float(d['kappa'])
        out['y'] = as_vector(d['y'])
    else:
        raise ValueError("unknown problem kind %r" % (kind,))
    return kind, out
