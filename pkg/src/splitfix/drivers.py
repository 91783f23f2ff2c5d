"""
Generic fixed-point iteration engines: Banach-Picard, Krasnosel'skii-
Mann (deterministic, perturbed, and randomized block variants),
composite and cyclic sweeps, block-update iterations, and hybrid
steepest descent. Every driver returns an IterTrace.
"""

import json
import math
import time

import numpy as np

from .operators import (CONTRACTION, LIPSCHITZ, validate_relaxation_schedule,
                        Constant)

__all__ = [
    'StopRule', 'IterTrace', 'Rng', 'BlockSchedule', 'RoundRobin',
    'RandomSubset', 'CONVERGED', 'MAX_ITERATIONS', 'PRECONDITION_VIOLATED',
    'banach_picard', 'km_iterate', 'composite_km', 'cyclic_iterate',
    'block_update_iterate', 'stochastic_km', 'random_block_km',
    'hybrid_steepest_descent',
]

CONVERGED = 'Converged'
MAX_ITERATIONS = 'MaxIterations'
PRECONDITION_VIOLATED = 'PreconditionViolated'

# norm growth beyond DIVERGENCE_FACTOR * (1 + ||x0||) raises the
# diverging flag (surfaces empty fixed-point sets without erroring)
DIVERGENCE_FACTOR = 1e8


class StopRule:
    """Iteration budget and tolerances.

    Parameters
    ----------
    max_iter : int
        Hard iteration cap, >= 1.
    residual_tol : float
        Convergence threshold on the per-iteration residual.
    stagnation_tol : float
        Secondary stop: quit when the relative step size
        ||x_{n+1}-x_n|| <= stagnation_tol * (1 + ||x_n||).
    divergence_factor : float
        The diverging-norm flag is raised (without erroring) once
        ||x_n|| exceeds divergence_factor * (1 + ||x_0||); surfaces
        empty fixed-point sets.
    """

    __slots__ = ('max_iter', 'residual_tol', 'stagnation_tol',
                 'divergence_factor')

    def __init__(self, max_iter=100000, residual_tol=1e-8,
                 stagnation_tol=1e-14, divergence_factor=DIVERGENCE_FACTOR):
        if max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if residual_tol <= 0 or stagnation_tol <= 0:
            raise ValueError("tolerances must be positive")
        if divergence_factor <= 0:
            raise ValueError("divergence_factor must be positive")
        self.max_iter = int(max_iter)
        self.residual_tol = float(residual_tol)
        self.stagnation_tol = float(stagnation_tol)
        self.divergence_factor = float(divergence_factor)


class Rng:
    """Seeded deterministic generator handle; one per run."""

    __slots__ = ('seed', 'gen')

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.gen = np.random.default_rng(self.seed)

    @staticmethod
    def coerce(rng):
        if isinstance(rng, Rng):
            return rng
        return Rng(rng if rng is not None else 0)


class IterTrace:
    """Record of one driver run.

    iterates holds thinned snapshots (every max(1, max_iter/1000)
    iterations plus the final point); residuals are kept densely.
    """

    __slots__ = ('iterates', 'residuals', 'objectives', 'status',
                 'wall_ms', 'diverging', 'metadata', 'x', 'n_iter', 'seed')

    def __init__(self, iterates, residuals, objectives, status, wall_ms,
                 diverging, metadata, x, n_iter, seed=None):
        self.iterates = iterates
        self.residuals = residuals
        self.objectives = objectives
        self.status = status
        self.wall_ms = wall_ms
        self.diverging = diverging
        self.metadata = metadata
        self.x = x
        self.n_iter = n_iter
        self.seed = seed

    def to_csv(self):
        """Trace CSV: iter,residual,objective,wall_ms.

        The wall_ms column is left empty per row; timing lives on the
        trace object so that identical seeds yield byte-identical CSV.
        """
        lines = ['iter,residual,objective,wall_ms']
        for n, r in enumerate(self.residuals):
            obj = ''
            if self.objectives is not None:
                obj = repr(float(self.objectives[n]))
            lines.append("%d,%s,%s," % (n, repr(float(r)), obj))
        return "\n".join(lines) + "\n"

    def summary_json(self):
        return json.dumps({
            'status': self.status,
            'iterations': self.n_iter,
            'final_residual': float(self.residuals[-1]) if len(self.residuals) else None,
            'diverging': bool(self.diverging),
            'seed': self.seed,
            'wall_ms': self.wall_ms,
        }, sort_keys=True)


class _Recorder:
    """Shared bookkeeping: thinning, stops, divergence guard, timing."""

    def __init__(self, stop, x0, objective=None, metadata=None, seed=None,
                 check_stagnation=True):
        self.stop = stop
        # randomized activation can leave an iterate unchanged without
        # being anywhere near a fixed point; those drivers opt out
        self.check_stagnation = check_stagnation
        self.stride = max(1, stop.max_iter // 1000)
        self.iterates = [_copy_state(x0)]
        self.residuals = []
        self.objective = objective
        self.objectives = [] if objective is not None else None
        self.metadata = dict(metadata or {})
        self.seed = seed
        self.diverging = False
        self.guard = stop.divergence_factor * (1.0 + _norm(x0))
        self.t0 = time.perf_counter()

    def record(self, n, x_prev, x_next, res):
        self.residuals.append(res)
        if self.objectives is not None:
            self.objectives.append(self.objective(x_next))
        if (n + 1) % self.stride == 0:
            self.iterates.append(_copy_state(x_next))
        if _norm(x_next) > self.guard:
            self.diverging = True
            return 'diverged'
        if res <= self.stop.residual_tol:
            return 'converged'
        if self.check_stagnation:
            step = _norm_diff(x_next, x_prev)
            if step <= self.stop.stagnation_tol * (1.0 + _norm(x_prev)):
                self.metadata['stagnated'] = True
                return 'stagnated'
        return None

    def finish(self, x, n_iter, status):
        wall_ms = (time.perf_counter() - self.t0) * 1000.0
        if len(self.iterates) == 0 or not _same(self.iterates[-1], x):
            self.iterates.append(_copy_state(x))
        return IterTrace(self.iterates, np.array(self.residuals),
                         None if self.objectives is None else np.array(self.objectives),
                         status, wall_ms, self.diverging, self.metadata,
                         _copy_state(x), n_iter, seed=self.seed)


def _norm(x):
    if isinstance(x, (list, tuple)):
        return math.sqrt(sum(float(np.sum(np.asarray(b) ** 2)) for b in x))
    return float(np.linalg.norm(x))


def _norm_diff(a, b):
    if isinstance(a, (list, tuple)):
        return math.sqrt(sum(float(np.sum((p - q) ** 2))
                             for p, q in zip(a, b)))
    return float(np.linalg.norm(a - b))


def _same(a, b):
    if isinstance(a, (list, tuple)) != isinstance(b, (list, tuple)):
        return False
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(np.array_equal(p, q)
                                        for p, q in zip(a, b))
    return np.array_equal(a, b)


def _copy_state(x):
    if isinstance(x, (list, tuple)):
        return [np.array(b, dtype=float, copy=True) for b in x]
    return np.array(x, dtype=float, copy=True)


def _run(step, x0, stop, objective=None, metadata=None, seed=None,
         check_stagnation=True):
    """Drive step(n, x) -> (x_next, residual) under a StopRule."""
    stop = stop or StopRule()
    rec = _Recorder(stop, _copy_state(x0), objective, metadata, seed,
                    check_stagnation=check_stagnation)
    x = _copy_state(x0)
    status = MAX_ITERATIONS
    n = 0
    for n in range(stop.max_iter):
        x_next, res = step(n, x)
        why = rec.record(n, x, x_next, res)
        x = x_next
        if why == 'converged':
            status = CONVERGED
            break
        if why in ('diverged', 'stagnated'):
            break
    return rec.finish(x, n + 1, status)


# -- drivers -----------------------------------------------------------------

def banach_picard(T, x0, stop=None):
    """Picard iteration x_{n+1} = T x_n for a strict contraction.

    The tag must be Contraction(delta) (or Lipschitz with constant
    < 1); the unique fixed point is approached at rate delta^n.
    """
    tag = T.tag
    if tag.kind == LIPSCHITZ and tag.constant < 1.0:
        pass
    elif tag.kind == CONTRACTION:
        pass
    else:
        raise ValueError("banach_picard requires a contraction tag")

    def step(n, x):
        x_next = np.asarray(T(x), dtype=float)
        return x_next, float(np.linalg.norm(x_next - x))

    return _run(step, x0, stop)


def km_iterate(T, schedule, x0, stop=None):
    """Krasnosel'skii-Mann: x_{n+1} = x_n + lambda_n (T x_n - x_n).

    T must carry an averaged constant alpha (nonexpansive tags run
    with alpha = 1); the schedule must pass
    validate_relaxation_schedule for that alpha.
    """
    alpha = T.tag.averaged_constant()
    if alpha is None:
        if T.tag.lipschitz_constant() == 1.0:
            alpha = 1.0
        else:
            raise ValueError("km_iterate requires an averaged or "
                             "nonexpansive tag")
    validate_relaxation_schedule(alpha, schedule)

    def step(n, x):
        Tx = np.asarray(T(x), dtype=float)
        lam = schedule.value(n, alpha)
        return x + lam * (Tx - x), float(np.linalg.norm(Tx - x))

    return _run(step, x0, stop)


def composite_km(T1_seq, T2_seq, lam_seq, x0, stop=None, eps=1e-3):
    """Relaxed two-operator composition x_{n+1} = x_n + lambda_n
    (T1_n(T2_n x_n) - x_n).

    Sequences may be single OperatorRefs (stationary case, the
    supported convergence regime) or callables n -> OperatorRef with
    alpha_{i,n} <= 1/(1+eps). lambda_n must lie in
    [eps, (1-eps)(1+eps alpha_n)/alpha_n] where alpha_n combines the
    two averagedness constants.
    """
    def at(seq, n):
        return seq(n) if callable(seq) and not hasattr(seq, 'tag') else seq

    def lam_at(n):
        if callable(lam_seq):
            return float(lam_seq(n))
        if hasattr(lam_seq, 'value'):
            return float(lam_seq.value(n, None))
        return float(lam_seq)

    def step(n, x):
        T1, T2 = at(T1_seq, n), at(T2_seq, n)
        a1 = T1.tag.averaged_constant()
        a2 = T2.tag.averaged_constant()
        if a1 is None or a2 is None:
            raise ValueError("composite_km requires averaged tags")
        cap = 1.0 / (1.0 + eps)
        if a1 > cap + 1e-15 or a2 > cap + 1e-15:
            raise ValueError("averagedness constants exceed 1/(1+eps)")
        alpha_n = (a1 + a2 - 2 * a1 * a2) / (1 - a1 * a2)
        lam = lam_at(n)
        hi = (1 - eps) * (1 + eps * alpha_n) / alpha_n
        if not (eps <= lam <= hi + 1e-15):
            raise ValueError("lambda %g outside [%g, %g] at n=%d"
                             % (lam, eps, hi, n))
        y = np.asarray(T1(np.asarray(T2(x), dtype=float)), dtype=float)
        return x + lam * (y - x), float(np.linalg.norm(y - x))

    return _run(step, x0, stop)


def cyclic_iterate(ops, x0, stop=None):
    """Cyclic sweeps x_{n+1} = T_1(T_2(... T_m x_n)) for averaged
    operators with alpha_i < 1.

    Returns (trace, limits) where limits[0] is the sweep limit and
    limits[i] chases the within-sweep chain: limits[m-1] = T_m
    limits[0], limits[m-2] = T_{m-1} limits[m-1], and so on.
    """
    if not ops:
        raise ValueError("need at least one operator")
    for T in ops:
        a = T.tag.averaged_constant()
        if a is None or a >= 1.0:
            raise ValueError("cyclic_iterate requires alpha_i < 1")

    def step(n, x):
        y = x
        for T in reversed(ops):
            y = np.asarray(T(y), dtype=float)
        return y, float(np.linalg.norm(y - x))

    trace = _run(step, x0, stop)
    m = len(ops)
    limits = [None] * m
    limits[0] = trace.x
    cur = trace.x
    for i in range(m - 1, 0, -1):
        cur = np.asarray(ops[i](cur), dtype=float)
        limits[i] = cur
    return trace, limits


class BlockSchedule:
    """Base for index-subset schedules with a coverage window M."""

    m = None
    window = None

    def next(self, rng):
        raise NotImplementedError


class RoundRobin(BlockSchedule):
    """Deterministic cyclic activation of block_size indices at a time."""

    def __init__(self, m, block_size=1):
        if not (1 <= block_size <= m):
            raise ValueError("block_size must be in [1, m]")
        self.m = int(m)
        self.block_size = int(block_size)
        self.window = math.ceil(m / block_size)
        self._pos = 0

    def next(self, rng):
        idx = [(self._pos + j) % self.m for j in range(self.block_size)]
        self._pos = (self._pos + self.block_size) % self.m
        return sorted(set(idx))


class RandomSubset(BlockSchedule):
    """Independent Bernoulli activation with a forced-coverage fallback.

    Index i is force-included once it has gone window-1 draws without
    activation, so any window consecutive subsets cover {0..m-1}.
    """

    def __init__(self, m, probs, window):
        probs = [float(p) for p in (probs if hasattr(probs, '__len__')
                                    else [probs] * m)]
        if len(probs) != m:
            raise ValueError("one probability per index")
        if any(not (0 < p <= 1) for p in probs):
            raise ValueError("activation probabilities must be in (0, 1]")
        if window < 1:
            raise ValueError("window must be >= 1")
        self.m = int(m)
        self.probs = probs
        self.window = int(window)
        self._last = [-1] * m
        self._n = 0

    def next(self, rng):
        gen = Rng.coerce(rng).gen
        draws = gen.uniform(size=self.m)
        subset = [i for i in range(self.m) if draws[i] < self.probs[i]]
        chosen = set(subset)
        for i in range(self.m):
            if i not in chosen and self._n - self._last[i] >= self.window - 1:
                chosen.add(i)
        for i in chosen:
            self._last[i] = self._n
        self._n += 1
        return sorted(chosen)


def block_update_iterate(T0, Ts, weights, schedule, x0, t_init=None,
                         stop=None, rng=None):
    """Block-update iteration: refresh t_{i,n} = T_i x_n for i in the
    active subset, recycle the rest, then x_{n+1} = T0(sum w_i t_{i,n}).

    Weights must be positive and sum to 1; the schedule's window
    coverage is re-checked while running and a violation ends the run
    with status PreconditionViolated.
    """
    weights = [float(w) for w in weights]
    if len(weights) != len(Ts):
        raise ValueError("one weight per operator")
    if any(w <= 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
        raise ValueError("weights must be positive and sum to 1")
    rng = Rng.coerce(rng)
    m = len(Ts)
    x0 = np.asarray(x0, dtype=float)
    t = ([np.asarray(ti, dtype=float).copy() for ti in t_init]
         if t_init is not None else [np.asarray(T(x0), dtype=float)
                                     for T in Ts])
    history = []
    violated = [False]

    def step(n, x):
        active = schedule.next(rng)
        history.append(set(active))
        if len(history) >= schedule.window:
            seen = set().union(*history[-schedule.window:])
            if seen != set(range(m)):
                violated[0] = True
                return x.copy(), float('inf')
        for i in active:
            t[i] = np.asarray(Ts[i](x), dtype=float)
        avg = sum(w * ti for w, ti in zip(weights, t))
        x_next = np.asarray(T0(avg), dtype=float)
        return x_next, float(np.linalg.norm(x_next - x))

    stop = stop or StopRule()
    rec = _Recorder(stop, x0, seed=rng.seed,
                    check_stagnation=isinstance(schedule, RoundRobin)
                    and schedule.block_size == schedule.m)
    x = x0.copy()
    status = MAX_ITERATIONS
    n = 0
    for n in range(stop.max_iter):
        x_next, res = step(n, x)
        if violated[0]:
            status = PRECONDITION_VIOLATED
            break
        why = rec.record(n, x, x_next, res)
        x = x_next
        if why == 'converged':
            status = CONVERGED
            break
        if why in ('diverged', 'stagnated'):
            break
    return rec.finish(x, n + 1, status)


def stochastic_km(T, schedule, error_source, x0, rng, stop=None,
                  declared_summable=True):
    """Perturbed KM: x_{n+1} = x_n + lambda_n (T x_n + e_n - x_n).

    error_source(n, gen) returns the additive perturbation e_n. The
    summability condition on the errors cannot be checked at runtime;
    the caller's declaration is recorded in the trace metadata.
    """
    alpha = T.tag.averaged_constant()
    if alpha is None:
        if T.tag.lipschitz_constant() == 1.0:
            alpha = 1.0
        else:
            raise ValueError("stochastic_km requires an averaged or "
                             "nonexpansive tag")
    validate_relaxation_schedule(alpha, schedule)
    rng = Rng.coerce(rng)
    meta = {'summability_declared': bool(declared_summable)}
    if not declared_summable:
        meta['undeclared_summability'] = True

    def step(n, x):
        Tx = np.asarray(T(x), dtype=float)
        e = np.asarray(error_source(n, rng.gen), dtype=float)
        lam = schedule.value(n, alpha)
        return x + lam * (Tx + e - x), float(np.linalg.norm(Tx - x))

    return _run(step, x0, stop, metadata=meta, seed=rng.seed)


def random_block_km(T, schedule, activation_probs, x0_blocks, rng,
                    stop=None, eps=1e-3):
    """Randomized block-coordinate KM on a product space.

    T maps a list of coordinate vectors to the list of updated
    coordinates; per iteration each coordinate i is activated with
    probability p_i > 0 (independent of history) and moves by
    lambda_n (T_i(x_n) - x_{i,n}); inactive coordinates are frozen.
    lambda_n must stay in [eps, 1/alpha - eps].
    """
    alpha = T.tag.averaged_constant()
    if alpha is None:
        if T.tag.lipschitz_constant() == 1.0:
            alpha = 1.0
        else:
            raise ValueError("random_block_km requires an averaged or "
                             "nonexpansive tag")
    probs = [float(p) for p in activation_probs]
    if any(p <= 0 for p in probs):
        raise ValueError("all activation probabilities must be positive")
    if any(p > 1 for p in probs):
        raise ValueError("activation probabilities must be <= 1")
    rng = Rng.coerce(rng)
    lo, hi = eps, 1.0 / alpha - eps
    if lo > hi:
        raise ValueError("empty lambda band for this alpha and eps")

    def step(n, x):
        lam = schedule.value(n, alpha)
        if not (lo <= lam <= hi + 1e-15):
            raise ValueError("lambda %g outside [%g, %g]" % (lam, lo, hi))
        Tx = T(x)
        draws = rng.gen.uniform(size=len(x))
        x_next = []
        for i, (xi, ti) in enumerate(zip(x, Tx)):
            if draws[i] < probs[i]:
                x_next.append(xi + lam * (np.asarray(ti, dtype=float) - xi))
            else:
                x_next.append(xi.copy())
        res = math.sqrt(sum(float(np.sum((np.asarray(ti) - xi) ** 2))
                            for ti, xi in zip(Tx, x)))
        return x_next, res

    return _run(step, [np.asarray(b, dtype=float) for b in x0_blocks],
                stop, seed=rng.seed, check_stagnation=False)


def hybrid_steepest_descent(T, grad_g, alpha_seq, x0, stop=None):
    """x_{n+1} = T x_n - alpha_n grad_g(T x_n): steers the KM limit to
    the minimizer of a strongly convex g over Fix T.

    alpha_seq is either the pair ('builtin', a) meaning a/(n+1)
    (validated: a in (0, 1]) or a callable n -> alpha_n in [0, 1]
    whose summability conditions are the caller's responsibility.
    """
    if isinstance(alpha_seq, tuple) and alpha_seq[0] == 'builtin':
        a = float(alpha_seq[1])
        if not (0 < a <= 1):
            raise ValueError("builtin schedule needs a in (0, 1]")
        alpha_at = lambda n: a / (n + 1.0)
    elif callable(alpha_seq):
        alpha_at = alpha_seq
    else:
        raise ValueError("alpha_seq must be ('builtin', a) or callable")

    def step(n, x):
        an = float(alpha_at(n))
        if not (0 <= an <= 1):
            raise ValueError("alpha_n must lie in [0, 1]")
        y = np.asarray(T(x), dtype=float)
        x_next = y - an * np.asarray(grad_g(y), dtype=float)
        return x_next, float(np.linalg.norm(x_next - x))

    return _run(step, x0, stop)
