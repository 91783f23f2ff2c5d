"""
Monotone operator splitting methods: Douglas-Rachford,
forward-backward, forward-backward-forward, Davis-Yin, primal-dual
variants with and without preconditioning or linear-operator
inversion, projective splitting, ADMM, and the stochastic and
block-coordinate forms.
"""

import math

import numpy as np

from .linalg import LinMap, as_matrix, as_vector, operator_norm, sym_eig
from .operators import (MonotoneOp, Constant, prox, func_value,
                        validate_relaxation_schedule)
from .drivers import (StopRule, IterTrace, Rng, RoundRobin, _run, _Recorder,
                      CONVERGED, MAX_ITERATIONS, PRECONDITION_VIOLATED)

__all__ = [
    'InclusionProblem', 'CompositeProblem', 'SystemProblem',
    'PrimalDualTrace', 'douglas_rachford', 'tseng_fbf', 'forward_backward',
    'davis_yin', 'three_op_primal_dual', 'product_space_lift',
    'composite_dy', 'mlfb_primal_dual', 'preconditioned_fb_pd',
    'projective_split', 'admm', 'stochastic_fb', 'block_coordinate_dr',
    'block_coordinate_fb', 'block_update_fb', 'kkt_residual',
]


class InclusionProblem:
    """Find x with 0 in Ax + Bx (+ Cx).

    A and B are MonotoneOps; C, when present, is a single-valued
    monotone map carrying its Lipschitz (delta) or cocoercivity (beta)
    constant.
    """

    __slots__ = ('A', 'B', 'C')

    def __init__(self, A, B, C=None):
        for op in (A, B):
            if not isinstance(op, MonotoneOp):
                raise ValueError("A and B must be MonotoneOps")
        if C is not None and C.eval is None:
            raise ValueError("C must be single-valued")
        self.A = A
        self.B = B
        self.C = C


class CompositeProblem:
    """Find x with 0 in Ax + sum L_k*(B_k + C_k)(L_k x).

    blocks is a list of (B_k, L_k, C_k) with C_k optional; the C_k
    share one Lipschitz constant delta or cocoercivity constant beta,
    passed explicitly.
    """

    __slots__ = ('A', 'Bs', 'Ls', 'Cs', 'delta', 'beta', 'dim')

    def __init__(self, A, blocks, delta=None, beta=None):
        if not blocks:
            raise ValueError("need at least one block")
        self.A = A
        self.Bs = [b[0] for b in blocks]
        self.Ls = [b[1] for b in blocks]
        self.Cs = [b[2] if len(b) > 2 else None for b in blocks]
        self.delta = delta
        self.beta = beta
        self.dim = self.Ls[0].in_dim
        for L in self.Ls:
            if L.in_dim != self.dim:
                raise ValueError("inconsistent primal dimensions")
            if operator_norm(L) == 0:
                raise ValueError("zero linear factor L_k")


class SystemProblem:
    """Coupled system: for each i, 0 in A_i x_i + sum_k L_{k,i}* v_k
    with v_k in B_k(sum_i L_{k,i} x_i).

    Lgrid[k][i] is a LinMap or None (treated as the zero coupling).
    The caller asserts the Kuhn-Tucker set is nonempty.
    """

    __slots__ = ('As', 'Bs', 'Lgrid', 'dims', 'codims')

    def __init__(self, As, Bs, Lgrid):
        self.As = list(As)
        self.Bs = list(Bs)
        self.Lgrid = [list(row) for row in Lgrid]
        if len(self.Lgrid) != len(self.Bs):
            raise ValueError("one grid row per B_k")
        for row in self.Lgrid:
            if len(row) != len(self.As):
                raise ValueError("one grid column per A_i")
        self.dims = [None] * len(self.As)
        self.codims = [None] * len(self.Bs)
        for k, row in enumerate(self.Lgrid):
            for i, L in enumerate(row):
                if L is None:
                    continue
                if self.dims[i] is None:
                    self.dims[i] = L.in_dim
                elif self.dims[i] != L.in_dim:
                    raise ValueError("inconsistent dimension for block %d" % i)
                if self.codims[k] is None:
                    self.codims[k] = L.out_dim
                elif self.codims[k] != L.out_dim:
                    raise ValueError("inconsistent codomain for row %d" % k)
        if any(d is None for d in self.dims) or any(c is None
                                                    for c in self.codims):
            raise ValueError("every block needs at least one coupling")


class PrimalDualTrace:
    """A primal IterTrace together with the dual iterate history."""

    __slots__ = ('primal', 'dual', 'duals', 'kkt')

    def __init__(self, primal, dual, duals=None, kkt=None):
        self.primal = primal
        self.dual = dual
        self.duals = duals
        self.kkt = kkt

    @property
    def x(self):
        return self.primal.x

    @property
    def status(self):
        return self.primal.status


def kkt_residual(A, Bs, Ls, x, vs, gamma=1.0):
    """Resolvent-based Kuhn-Tucker residual for a primal-dual pair.

    Measures -sum L_k* v_k in Ax via ||J_{gamma A}(x - gamma sum
    L_k* v_k) - x|| and each L_k x in B_k^{-1} v_k via
    ||J_{gamma B_k}(L_k x + gamma v_k) - L_k x||; both vanish exactly
    at solutions.
    """
    x = np.asarray(x, dtype=float)
    pull = sum(L.adjoint(v) for L, v in zip(Ls, vs))
    rp = float(np.linalg.norm(A.resolvent(gamma)(x - gamma * pull) - x))
    rd = 0.0
    for B, L, v in zip(Bs, Ls, vs):
        lx = L.forward(x)
        rd += float(np.sum((B.resolvent(gamma)(lx + gamma * v) - lx) ** 2))
    return rp, math.sqrt(rd)


# -- two and three operator methods ------------------------------------------

def douglas_rachford(prob, gamma, y0, lam_schedule=None, stop=None,
                     objective=None):
    """Douglas-Rachford splitting for 0 in Ax + Bx.

    x_n = J_{gamma B} y_n; z_n = J_{gamma A}(2x_n - y_n);
    y_{n+1} = y_n + lambda_n (z_n - x_n). The reported solution is
    x_n; lambda_n must be a 1/2-relaxation sequence.
    """
    if prob.C is not None:
        raise ValueError("douglas_rachford handles two operators; use "
                         "davis_yin when C is present")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lam_schedule = lam_schedule or Constant(1.0)
    validate_relaxation_schedule(0.5, lam_schedule)
    JA = prob.A.resolvent(gamma)
    JB = prob.B.resolvent(gamma)
    last = {}

    def step(n, y):
        x = np.asarray(JB(y), dtype=float)
        z = np.asarray(JA(2.0 * x - y), dtype=float)
        last['x'] = x
        return y + lam_schedule.value(n, 0.5) * (z - x), float(np.linalg.norm(z - x))

    obj = (lambda y: objective(np.asarray(JB(y), dtype=float))) if objective else None
    tr = _run(step, y0, stop, objective=obj)
    tr.x = np.asarray(JB(tr.x), dtype=float)
    return tr


def tseng_fbf(prob, x0, stop=None, gamma=None, eps=1e-3, objective=None):
    """Forward-backward-forward splitting for 0 in Ax + Bx with a
    single-valued delta-Lipschitz B.

    y_n = x_n - gamma_n B x_n; z_n = J_{gamma_n A} y_n;
    x_{n+1} = x_n - y_n + z_n - gamma_n B z_n; gamma_n in
    [eps, (1-eps)/delta].
    """
    B = prob.B
    if B.eval is None or B.delta is None:
        raise ValueError("tseng_fbf needs a single-valued B with a "
                         "Lipschitz constant")
    delta = float(B.delta)
    if delta > 0:
        lo, hi = eps, (1.0 - eps) / delta
        if gamma is None:
            gamma = 0.5 * (lo + hi)
        if not (lo <= gamma <= hi):
            raise ValueError("gamma %g outside [%g, %g]" % (gamma, lo, hi))
    elif gamma is None:
        gamma = 1.0

    def step(n, x):
        JA = prob.A.resolvent(gamma)
        y = x - gamma * np.asarray(B.eval(x), dtype=float)
        z = np.asarray(JA(y), dtype=float)
        r = z - gamma * np.asarray(B.eval(z), dtype=float)
        return x - y + r, float(np.linalg.norm(z - x))

    return _run(step, x0, stop,
                objective=objective)


def forward_backward(prob, x0, stop=None, gamma=None, lam=None, eps=1e-3,
                     objective=None):
    """Forward-backward splitting for 0 in Ax + Bx with a
    beta-cocoercive single-valued B.

    u_n = x_n - gamma B x_n; x_{n+1} = x_n + lambda (J_{gamma A} u_n
    - x_n); gamma in [eps, 2 beta/(1+eps)], lambda in
    [eps, (1-eps)(2 + eps - gamma/(2 beta))].
    """
    B = prob.B
    if B.eval is None or B.beta is None:
        raise ValueError("forward_backward needs a single-valued B with a "
                         "cocoercivity constant")
    beta = float(B.beta)
    lo, hi = eps, 2.0 * beta / (1.0 + eps)
    if gamma is None:
        gamma = 0.5 * (lo + hi)
    if not (lo <= gamma <= hi):
        raise ValueError("gamma %g outside [%g, %g]" % (gamma, lo, hi))
    lam_hi = (1.0 - eps) * (2.0 + eps - gamma / (2.0 * beta))
    if lam is None:
        lam = min(1.0, lam_hi)
    if not (eps <= lam <= lam_hi):
        raise ValueError("lambda %g outside [%g, %g]" % (lam, eps, lam_hi))
    JA = prob.A.resolvent(gamma)

    def step(n, x):
        u = x - gamma * np.asarray(B.eval(x), dtype=float)
        p = np.asarray(JA(u), dtype=float)
        return x + lam * (p - x), float(np.linalg.norm(p - x))

    return _run(step, x0, stop, objective=objective)


def davis_yin(prob, gamma, y0, lam_schedule=None, stop=None, objective=None):
    """Davis-Yin splitting for 0 in Ax + Bx + Cx with a
    beta-cocoercive single-valued C.

    x_n = J_{gamma B} y_n; z_n = J_{gamma A}(2x_n - y_n - gamma C
    x_n); y_{n+1} = y_n + lambda_n (z_n - x_n) with gamma in
    (0, 2 beta) and lambda_n an alpha-relaxation for
    alpha = 2 beta/(4 beta - gamma).
    """
    C = prob.C if prob.C is not None else MonotoneOp.zero()
    if C.eval is None:
        raise ValueError("C must be single-valued")
    beta = C.beta
    if beta is not None:
        if not (0 < gamma < 2 * beta):
            raise ValueError("gamma must lie in (0, 2 beta)")
        alpha = 2.0 * beta / (4.0 * beta - gamma)
    else:
        # C = 0 is a valid degenerate case (plain Douglas-Rachford)
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        alpha = 0.5
    lam_schedule = lam_schedule or Constant(1.0)
    validate_relaxation_schedule(alpha, lam_schedule)
    JA = prob.A.resolvent(gamma)
    JB = prob.B.resolvent(gamma)

    def step(n, y):
        x = np.asarray(JB(y), dtype=float)
        z = np.asarray(JA(2.0 * x - y - gamma * np.asarray(C.eval(x), dtype=float)),
                       dtype=float)
        return y + lam_schedule.value(n, alpha) * (z - x), float(np.linalg.norm(z - x))

    obj = (lambda y: objective(np.asarray(JB(y), dtype=float))) if objective else None
    tr = _run(step, y0, stop, objective=obj)
    tr.x = np.asarray(JB(tr.x), dtype=float)
    return tr


def three_op_primal_dual(prob, x0, u0, stop=None, gamma=None, eps=1e-3):
    """Primal-dual method for 0 in Ax + Bx + Cx with set-valued A, B
    and delta-Lipschitz single-valued C; no cocoercivity needed.

    Per iteration: y_n = x_n - gamma (C x_n + u_n); p_n =
    J_{gamma A} y_n; q_n = u_n + gamma (x_n - J_{B/gamma}(u_n/gamma +
    x_n)); x_{n+1} = x_n - y_n + p_n - gamma (C p_n + q_n); u_{n+1} =
    q_n + gamma (p_n - x_n); gamma in [eps, (1-eps)/(1+delta)]. The
    dual limit u solves 0 in -(A+C)^{-1}(-u) + B^{-1} u.
    """
    C = prob.C if prob.C is not None else MonotoneOp.zero()
    delta = float(C.delta if C.delta is not None else 0.0)
    lo, hi = eps, (1.0 - eps) / (1.0 + delta)
    if gamma is None:
        gamma = 0.5 * (lo + hi)
    if not (lo <= gamma <= hi):
        raise ValueError("gamma %g outside [%g, %g]" % (gamma, lo, hi))
    JA = prob.A.resolvent(gamma)
    JBg = prob.B.resolvent(1.0 / gamma)

    def step(n, state):
        x, u = state
        Cx = np.asarray(C.eval(x), dtype=float)
        y = x - gamma * (Cx + u)
        p = np.asarray(JA(y), dtype=float)
        q = u + gamma * (x - np.asarray(JBg(u / gamma + x), dtype=float))
        x_next = x - y + p - gamma * (np.asarray(C.eval(p), dtype=float) + q)
        u_next = q + gamma * (p - x)
        res = math.sqrt(float(np.sum((x_next - x) ** 2))
                        + float(np.sum((u_next - u) ** 2)))
        return [x_next, u_next], res

    tr = _run(step, [np.asarray(x0, dtype=float), np.asarray(u0, dtype=float)],
              stop)
    x, u = tr.x[0], tr.x[1]
    tr.x = x
    duals = [it[1] for it in tr.iterates]
    tr.iterates = [it[0] for it in tr.iterates]
    # primal membership -u - Cx in Ax; dual membership u in Bx
    Cx = np.asarray(C.eval(x), dtype=float)
    rp = float(np.linalg.norm(np.asarray(JA(x - gamma * (u + Cx)), dtype=float) - x))
    JB1 = prob.B.resolvent(gamma)
    rd = float(np.linalg.norm(np.asarray(JB1(x + gamma * u), dtype=float) - x))
    return PrimalDualTrace(tr, u, duals, kkt={'primal': rp, 'dual': rd})


# -- product space machinery --------------------------------------------------

def product_space_lift(blocks):
    """Lift per-block (B_k, C_k, L_k) data to the product space.

    Returns (B, C, L, V): B with the blockwise resolvent, C the
    stacked single-valued map, L the stacked LinMap x -> (L_k x)
    concatenated, and V the custom-projector descriptor for
    range L, realized by least squares through Q = sum L_k* L_k.
    """
    from .operators import SetDescriptor
    Bs = [b[0] for b in blocks]
    Cs = [b[1] for b in blocks]
    Ls = [b[2] for b in blocks]
    n = Ls[0].in_dim
    dims = [L.out_dim for L in Ls]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def split(y):
        y = np.asarray(y, dtype=float)
        return [y[offs[k]:offs[k + 1]] for k in range(len(Ls))]

    def stack_fwd(x):
        return np.concatenate([L.forward(x) for L in Ls])

    def stack_adj(y):
        parts = split(y)
        return sum(L.adjoint(p) for L, p in zip(Ls, parts))

    L = LinMap(stack_fwd, stack_adj, in_dim=n, out_dim=int(offs[-1]))
    Qmat = sum(as_matrix(np.column_stack(
        [Lk.adjoint(Lk.forward(np.eye(n)[:, j])) for j in range(n)]))
        for Lk in Ls)
    mu, _ = sym_eig(Qmat)
    if mu.min() <= 1e-10 * max(1.0, mu.max()):
        raise ValueError("Q = sum L_k* L_k is singular")

    def proj_V(y):
        x = np.linalg.solve(Qmat, stack_adj(y))
        return stack_fwd(x)

    V = SetDescriptor.custom(proj_V)

    def B_factory(g):
        res = [Bk.resolvent(g) for Bk in Bs]
        return lambda y: np.concatenate(
            [np.asarray(r(p), dtype=float)
             for r, p in zip(res, split(y))])

    B = MonotoneOp(resolvent_factory=B_factory)

    def C_eval(y):
        return np.concatenate(
            [np.asarray(Ck.eval(p), dtype=float) if Ck is not None
             else np.zeros_like(p)
             for Ck, p in zip(Cs, split(y))])

    C = MonotoneOp.from_map(C_eval)
    return B, C, L, V


def composite_dy(prob, gamma, y0_blocks, lam_schedule=None, stop=None,
                 objective=None):
    """Davis-Yin in the lifted product space for 0 in sum L_k*(B_k +
    C_k)(L_k x) (A = 0), requiring Q = sum L_k* L_k invertible.

    Blockwise: p_{n,k} = J_{gamma B_k} y_{n,k}; x_n = Q^{-1} sum L_k*
    p_{n,k}; c_n = Q^{-1} sum L_k* C_k p_{n,k}; z_n = x_n - s_n -
    gamma c_n; y_{n+1,k} = y_{n,k} + lambda_n (L_k(x_n + z_n) -
    p_{n,k}); s_{n+1} = s_n + lambda_n z_n.
    """
    if prob.A is not None:
        raise ValueError("composite_dy requires A = 0")
    beta = prob.beta
    if beta is None or not (0 < gamma < 2 * beta):
        raise ValueError("gamma must lie in (0, 2 beta)")
    alpha = 2.0 * beta / (4.0 * beta - gamma)
    lam_schedule = lam_schedule or Constant(1.0)
    validate_relaxation_schedule(alpha, lam_schedule)
    Ls, Bs, Cs = prob.Ls, prob.Bs, prob.Cs
    n = prob.dim
    Qmat = sum(np.column_stack([Lk.adjoint(Lk.forward(np.eye(n)[:, j]))
                                for j in range(n)]) for Lk in Ls)
    mu, _ = sym_eig(Qmat)
    if mu.min() <= 1e-10 * max(1.0, mu.max()):
        raise ValueError("Q = sum L_k* L_k is singular")
    Js = [Bk.resolvent(gamma) for Bk in Bs]
    y0 = [np.asarray(b, dtype=float) for b in y0_blocks]
    s0 = np.linalg.solve(Qmat, sum(L.adjoint(y) for L, y in zip(Ls, y0)))
    sol = {}

    def step(n_iter, state):
        ys, s = state[:-1], state[-1]
        ps = [np.asarray(J(y), dtype=float) for J, y in zip(Js, ys)]
        x = np.linalg.solve(Qmat, sum(L.adjoint(p) for L, p in zip(Ls, ps)))
        c = np.linalg.solve(Qmat, sum(
            L.adjoint(np.asarray(C.eval(p), dtype=float)) if C is not None
            else np.zeros(n)
            for L, C, p in zip(Ls, Cs, ps)))
        z = x - s - gamma * c
        lam = lam_schedule.value(n_iter, alpha)
        ys_next = [y + lam * (L.forward(x + z) - p)
                   for y, L, p in zip(ys, Ls, ps)]
        s_next = s + lam * z
        sol['x'] = x
        res = math.sqrt(sum(float(np.sum((L.forward(x + z) - p) ** 2))
                            for L, p in zip(Ls, ps)))
        return ys_next + [s_next], res

    obj = (lambda st: objective(sol['x'])) if objective else None
    tr = _run(step, y0 + [s0], stop, objective=obj)
    ys = tr.x[:-1]
    ps = [np.asarray(J(y), dtype=float) for J, y in zip(Js, ys)]
    tr.x = np.linalg.solve(Qmat, sum(L.adjoint(p) for L, p in zip(Ls, ps)))
    return tr


def mlfb_primal_dual(prob, x0, v0_blocks, stop=None, gamma=None, eps=1e-3):
    """Monotone Lipschitz forward-backward primal-dual iteration for
    0 in Ax + sum L_k*(B_k + C_k)(L_k x); performs no linear-operator
    inversions.

    chi = sqrt(sum ||L_k||^2)(1 + delta sqrt(sum ||L_k||^2)) and
    gamma_n in [eps, (1-eps)/chi]. The resolvents of the B_k are
    taken at parameter 1/gamma_n.
    """
    Ls, Bs, Cs = prob.Ls, prob.Bs, prob.Cs
    delta = float(prob.delta if prob.delta is not None else 0.0)
    sL = math.sqrt(sum(operator_norm(L, inflate=True) ** 2 for L in Ls))
    chi = sL * (1.0 + delta * sL)
    lo, hi = eps, (1.0 - eps) / chi
    if gamma is None:
        gamma = 0.5 * (lo + hi)
    if not (lo <= gamma <= hi):
        raise ValueError("gamma %g outside [%g, %g]" % (gamma, lo, hi))
    JA = prob.A.resolvent(gamma)
    JBs = [Bk.resolvent(1.0 / gamma) for Bk in Bs]

    def C_at(k, y):
        Ck = Cs[k]
        return (np.asarray(Ck.eval(y), dtype=float) if Ck is not None
                else np.zeros_like(y))

    def step(n, state):
        x, vs = state[0], state[1:]
        u = x - gamma * sum(L.adjoint(C_at(k, L.forward(x)) + v)
                            for k, (L, v) in enumerate(zip(Ls, vs)))
        p = np.asarray(JA(u), dtype=float)
        vs_next, zs = [], []
        for k, (L, v) in enumerate(zip(Ls, vs)):
            y = v + gamma * L.forward(x)
            z = y - gamma * np.asarray(JBs[k](y / gamma), dtype=float)
            s = z + gamma * L.forward(p)
            vs_next.append(v - y + s)
            zs.append(z)
        r = p - gamma * sum(L.adjoint(C_at(k, L.forward(p)) + z)
                            for k, (L, z) in enumerate(zip(Ls, zs)))
        x_next = x - u + r
        res = math.sqrt(float(np.sum((p - x) ** 2)) + sum(
            float(np.sum((vn - v) ** 2)) for vn, v in zip(vs_next, vs)))
        return [x_next] + vs_next, res

    tr = _run(step, [np.asarray(x0, dtype=float)]
              + [np.asarray(v, dtype=float) for v in v0_blocks], stop)
    x, vs = tr.x[0], tr.x[1:]
    tr.x = x
    duals = [it[1:] for it in tr.iterates]
    tr.iterates = [it[0] for it in tr.iterates]
    rp, rd = kkt_residual(prob.A, Bs, Ls, x, vs, gamma=gamma)
    return PrimalDualTrace(tr, vs, duals, kkt={'primal': rp, 'dual': rd})


def preconditioned_fb_pd(prob, W, sigma, x0, v0_blocks, stop=None, lam=None,
                         eps=1e-3):
    """Preconditioned forward-backward primal-dual iteration for
    0 in sum L_k*(B_k + C_k)(L_k x) (A = 0) with beta-cocoercive C_k.

    W is symmetric positive definite; requires kappa = ||L o W o L*||
    < min(1/sigma, 2 beta); lambda in [eps, (1-eps)(2 + eps -
    kappa/(2 beta))].
    """
    if prob.A is not None:
        raise ValueError("preconditioned_fb_pd requires A = 0")
    beta = prob.beta
    if beta is None:
        raise ValueError("needs the shared cocoercivity constant beta")
    W = as_matrix(W)
    mu, _ = sym_eig(W)
    if mu.min() <= 1e-10 * max(1.0, mu.max()):
        raise ValueError("W must be positive definite")
    Ls, Bs, Cs = prob.Ls, prob.Bs, prob.Cs
    dims = [L.out_dim for L in Ls]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def lwl_fwd(y):
        parts = [y[offs[k]:offs[k + 1]] for k in range(len(Ls))]
        x = W @ sum(L.adjoint(p) for L, p in zip(Ls, parts))
        return np.concatenate([L.forward(x) for L in Ls])

    LWL = LinMap(lwl_fwd, lwl_fwd, in_dim=int(offs[-1]),
                 out_dim=int(offs[-1]))
    kappa = operator_norm(LWL, inflate=True)
    if kappa >= min(1.0 / sigma, 2.0 * beta):
        raise ValueError("kappa = %g violates kappa < min(1/sigma, 2 beta)"
                         % kappa)
    lam_hi = (1.0 - eps) * (2.0 + eps - kappa / (2.0 * beta))
    if lam is None:
        lam = min(1.0, lam_hi)
    if not (eps <= lam <= lam_hi):
        raise ValueError("lambda %g outside [%g, %g]" % (lam, eps, lam_hi))
    JBs = [Bk.resolvent(1.0 / sigma) for Bk in Bs]

    def C_at(k, y):
        Ck = Cs[k]
        return (np.asarray(Ck.eval(y), dtype=float) if Ck is not None
                else np.zeros_like(y))

    def step(n, state):
        x, vs = state[0], state[1:]
        ss = [C_at(k, L.forward(x)) for k, L in enumerate(Ls)]
        z = x - W @ sum(L.adjoint(s + v) for L, s, v in zip(Ls, ss, vs))
        vs_next, ys = [], []
        for k, (L, v) in enumerate(zip(Ls, vs)):
            w = v + sigma * L.forward(z)
            y = w - sigma * np.asarray(JBs[k](w / sigma), dtype=float)
            vs_next.append(v + lam * (y - v))
            ys.append(y)
        u = x - W @ sum(L.adjoint(s + y) for L, s, y in zip(Ls, ss, ys))
        x_next = x + lam * (u - x)
        res = math.sqrt(float(np.sum((u - x) ** 2)) + sum(
            float(np.sum((y - v) ** 2)) for y, v in zip(ys, vs)))
        return [x_next] + vs_next, res

    tr = _run(step, [np.asarray(x0, dtype=float)]
              + [np.asarray(v, dtype=float) for v in v0_blocks], stop)
    x, vs = tr.x[0], tr.x[1:]
    tr.x = x
    duals = [it[1:] for it in tr.iterates]
    tr.iterates = [it[0] for it in tr.iterates]
    A0 = MonotoneOp.zero()
    rp, rd = kkt_residual(A0, Bs, Ls, x, vs, gamma=1.0)
    return PrimalDualTrace(tr, vs, duals, kkt={'primal': rp, 'dual': rd})


def projective_split(prob, x0_blocks, v0_blocks, stop=None,
                     primal_schedule=None, dual_schedule=None, gammas=None,
                     mus=None, eps=1e-3, rng=None):
    """Projective splitting on a coupled system: each iteration builds
    a separating half-space from freshly evaluated (or recycled)
    resolvent points and projects the primal-dual pair onto it.

    gammas[i] and mus[k] must lie in [eps, 1/eps]; the activation
    schedules must start with full activation (I_0 = I, K_0 = K) and
    honor their coverage windows.
    """
    m, q = len(prob.As), len(prob.Bs)
    gammas = [1.0] * m if gammas is None else [float(g) for g in gammas]
    mus = [1.0] * q if mus is None else [float(u) for u in mus]
    for g in gammas + mus:
        if not (eps <= g <= 1.0 / eps):
            raise ValueError("step parameters must lie in [eps, 1/eps]")
    rng = Rng.coerce(rng)
    xs = [np.asarray(b, dtype=float) for b in x0_blocks]
    vs = [np.asarray(b, dtype=float) for b in v0_blocks]
    JAs = [A.resolvent(g) for A, g in zip(prob.As, gammas)]
    JBs = [B.resolvent(u) for B, u in zip(prob.Bs, mus)]

    def L_at(k, i):
        return prob.Lgrid[k][i]

    a = [x.copy() for x in xs]
    astar = [np.zeros_like(x) for x in xs]
    b = [v.copy() for v in vs]
    bstar = [v.copy() for v in vs]

    def step(n, state):
        xs = state[:m]
        vs = state[m:]
        active_i = (primal_schedule.next(rng) if primal_schedule and n > 0
                    else list(range(m)))
        active_k = (dual_schedule.next(rng) if dual_schedule and n > 0
                    else list(range(q)))
        for i in active_i:
            lstar = sum(L_at(k, i).adjoint(vs[k]) for k in range(q)
                        if L_at(k, i) is not None)
            a[i] = np.asarray(JAs[i](xs[i] - gammas[i] * lstar), dtype=float)
            astar[i] = (xs[i] - a[i]) / gammas[i] - lstar
        for k in active_k:
            lk = sum(L_at(k, i).forward(xs[i]) for i in range(m)
                     if L_at(k, i) is not None)
            b[k] = np.asarray(JBs[k](lk + mus[k] * vs[k]), dtype=float)
            bstar[k] = vs[k] + (lk - b[k]) / mus[k]
        tstar = [astar[i] + sum(L_at(k, i).adjoint(bstar[k])
                                for k in range(q) if L_at(k, i) is not None)
                 for i in range(m)]
        t = [b[k] - sum(L_at(k, i).forward(a[i]) for i in range(m)
                        if L_at(k, i) is not None)
             for k in range(q)]
        tau = (sum(float(np.dot(ts, ts)) for ts in tstar)
               + sum(float(np.dot(tk, tk)) for tk in t))
        if tau > 0:
            num = (sum(float(np.dot(xs[i], tstar[i]))
                       - float(np.dot(a[i], astar[i])) for i in range(m))
                   + sum(float(np.dot(t[k], vs[k]))
                         - float(np.dot(b[k], bstar[k])) for k in range(q)))
            theta = max(0.0, num) / tau
        else:
            theta = 0.0
        xs_next = [xs[i] - theta * tstar[i] for i in range(m)]
        vs_next = [vs[k] - theta * t[k] for k in range(q)]
        # optimality residual: resolvent points coincide with the
        # current primal/coupled iterates exactly at Kuhn-Tucker pairs
        res = math.sqrt(
            sum(float(np.sum((a[i] - xs[i]) ** 2)) for i in range(m))
            + sum(float(np.sum((b[k] - sum(
                L_at(k, i).forward(xs[i]) for i in range(m)
                if L_at(k, i) is not None)) ** 2)) for k in range(q)))
        return xs_next + vs_next, res

    tr = _run(step, xs + vs, stop, seed=rng.seed)
    xs_f, vs_f = tr.x[:m], tr.x[m:]
    tr.x = xs_f[0] if m == 1 else xs_f
    duals = [it[m:] for it in tr.iterates]
    tr.iterates = [it[:m] for it in tr.iterates]
    return PrimalDualTrace(tr, vs_f[0] if q == 1 else vs_f, duals)


def admm(f, g, L, gamma, y0, z0, stop=None, aug_prox=None, objective=None):
    """Alternating-direction method of multipliers for
    minimize f(x) + g(Lx) with L* L invertible.

    x_n = argmin gamma f(x) + ||Lx - (y_n - z_n)||^2/2; d_n = L x_n;
    y_{n+1} = prox_{gamma g}(d_n + z_n); z_{n+1} = z_n + d_n -
    y_{n+1}. The augmented prox is closed-form for quadratic f (one
    cached factorization); any other f needs a caller-supplied oracle.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    n_in = L.in_dim
    Lmat = L.to_matrix()
    LtL = Lmat.T @ Lmat
    mu, _ = sym_eig(LtL)
    if mu.min() <= 1e-10 * max(1.0, mu.max()):
        raise ValueError("L* L must be invertible")
    if aug_prox is None:
        if f.variant != 'quadraticfit':
            raise ValueError("closed-form augmented prox only for "
                             "quadratic f; supply aug_prox")
        H, yy, kappa = f.payload['H'], f.payload['y'], f.payload['kappa']
        M = gamma * (H.T @ H + kappa * np.eye(n_in)) + LtL
        rhs0 = gamma * (H.T @ yy)
        factor = np.linalg.cholesky(M)

        def aug_prox(r):
            w = np.linalg.solve(factor, rhs0 + Lmat.T @ r)
            return np.linalg.solve(factor.T, w)

    sol = {}

    def step(n, state):
        y, z = state
        x = np.asarray(aug_prox(y - z), dtype=float)
        d = L.forward(x)
        y_next = prox(g, gamma, d + z)
        z_next = z + d - y_next
        sol['x'] = x
        res = math.sqrt(float(np.sum((d - y_next) ** 2))
                        + float(np.sum((y_next - y) ** 2)))
        return [y_next, z_next], res

    obj = (lambda st: objective(sol['x'])) if objective else None
    tr = _run(step, [np.asarray(y0, dtype=float),
                     np.asarray(z0, dtype=float)], stop, objective=obj)
    y, z = tr.x
    tr.x = np.asarray(aug_prox(y - z), dtype=float)
    return tr


# -- stochastic and block-coordinate variants ---------------------------------

def stochastic_fb(f, grad_estimator, gamma, lam_seq, x0, rng, stop=None,
                  delta=None, declared_variance=True):
    """Stochastic forward-backward: x_{n+1} = x_n + lambda_n
    (prox_{gamma f}(x_n - gamma u_n) - x_n) with u_n the sampled
    gradient estimate.

    gamma must lie in (0, 2/delta) for the declared Lipschitz
    constant of the full gradient; lambda_n in (0, 1]. The variance
    conditions are the caller's declaration, recorded in metadata.
    """
    if delta is not None and not (0 < gamma < 2.0 / delta):
        raise ValueError("gamma must lie in (0, 2/delta)")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rng = Rng.coerce(rng)
    meta = {'variance_conditions_declared': bool(declared_variance)}

    def lam_at(n):
        if callable(lam_seq):
            return float(lam_seq(n))
        if hasattr(lam_seq, 'value'):
            return float(lam_seq.value(n, 1.0))
        return float(lam_seq)

    def step(n, x):
        u = np.asarray(grad_estimator(x, rng.gen), dtype=float)
        lam = lam_at(n)
        if not (0 < lam <= 1):
            raise ValueError("lambda_n must lie in (0, 1]")
        p = prox(f, gamma, x - gamma * u)
        return x + lam * (p - x), float(np.linalg.norm(p - x))

    return _run(step, x0, stop, metadata=meta, seed=rng.seed,
                check_stagnation=False)


class _VProjector:
    """Least-squares projector onto V = {(x, y) : y_k = sum_i L_{k,i}
    x_i} built from a dense stacked coupling matrix."""

    def __init__(self, Lgrid, dims, codims):
        self.dims = dims
        self.codims = codims
        self.xoffs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        self.yoffs = np.concatenate([[0], np.cumsum(codims)]).astype(int)
        M = np.zeros((int(self.yoffs[-1]), int(self.xoffs[-1])))
        for k, row in enumerate(Lgrid):
            for i, L in enumerate(row):
                if L is None:
                    continue
                M[self.yoffs[k]:self.yoffs[k + 1],
                  self.xoffs[i]:self.xoffs[i + 1]] = L.to_matrix()
        self.M = M
        self.G = np.eye(M.shape[1]) + M.T @ M

    def __call__(self, xs, ys):
        a = np.concatenate(xs)
        bvec = np.concatenate(ys)
        xhat = np.linalg.solve(self.G, a + self.M.T @ bvec)
        yhat = self.M @ xhat
        xs_out = [xhat[self.xoffs[i]:self.xoffs[i + 1]]
                  for i in range(len(self.dims))]
        ys_out = [yhat[self.yoffs[k]:self.yoffs[k + 1]]
                  for k in range(len(self.codims))]
        return xs_out, ys_out


def block_coordinate_dr(fs, gs, Lgrid, gamma, lam_seq, activation_probs,
                        x0_blocks, y0_blocks, rng, stop=None, z0_blocks=None,
                        w0_blocks=None, eps=1e-3, objective=None):
    """Random block-coordinate Douglas-Rachford on the consensus space
    V = {(x, y) : y_k = sum_i L_{k,i} x_i}.

    Active primal coordinates move their projection state z_i then
    relax through prox_{gamma f_i}; dual coordinates do the same with
    prox_{gamma g_k}. lambda_n in [eps, 2 - eps]; all activation
    probabilities must be positive. The solution sequence is (z, w).
    """
    m, q = len(fs), len(gs)
    probs = [float(p) for p in activation_probs]
    if len(probs) != m + q:
        raise ValueError("need one activation probability per coordinate")
    if any(p <= 0 for p in probs):
        raise ValueError("all activation probabilities must be positive")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rng = Rng.coerce(rng)
    dims = [len(np.asarray(b)) for b in x0_blocks]
    codims = [len(np.asarray(b)) for b in y0_blocks]
    projV = _VProjector(Lgrid, dims, codims)

    def lam_at(n):
        if callable(lam_seq):
            lam = float(lam_seq(n))
        elif hasattr(lam_seq, 'value'):
            lam = float(lam_seq.value(n, 0.5))
        else:
            lam = float(lam_seq)
        if not (eps <= lam <= 2.0 - eps):
            raise ValueError("lambda_n must lie in [eps, 2 - eps]")
        return lam

    xs = [np.asarray(b, dtype=float).copy() for b in x0_blocks]
    ys = [np.asarray(b, dtype=float).copy() for b in y0_blocks]
    zs = ([np.asarray(b, dtype=float).copy() for b in z0_blocks]
          if z0_blocks is not None else [x.copy() for x in xs])
    ws = ([np.asarray(b, dtype=float).copy() for b in w0_blocks]
          if w0_blocks is not None else [y.copy() for y in ys])
    sol = {}

    def step(n, state):
        xs = state[:m]
        ys = state[m:m + q]
        zs = state[m + q:2 * m + q]
        ws = state[2 * m + q:]
        lam = lam_at(n)
        qx, qy = projV(xs, ys)
        draws = rng.gen.uniform(size=m + q)
        xs_n, zs_n = [], []
        for i in range(m):
            if draws[i] < probs[i]:
                z_new = zs[i] + (qx[i] - zs[i])
                x_new = xs[i] + lam * (prox(fs[i], gamma, 2 * z_new - xs[i])
                                       - z_new)
            else:
                z_new, x_new = zs[i].copy(), xs[i].copy()
            zs_n.append(z_new)
            xs_n.append(x_new)
        ys_n, ws_n = [], []
        for k in range(q):
            if draws[m + k] < probs[m + k]:
                w_new = ws[k] + (qy[k] - ws[k])
                y_new = ys[k] + lam * (prox(gs[k], gamma, 2 * w_new - ys[k])
                                       - w_new)
            else:
                w_new, y_new = ws[k].copy(), ys[k].copy()
            ws_n.append(w_new)
            ys_n.append(y_new)
        # full (activation-independent) fixed-point residual
        res = math.sqrt(
            sum(float(np.sum((prox(fs[i], gamma, 2 * qx[i] - xs[i])
                              - qx[i]) ** 2)) for i in range(m))
            + sum(float(np.sum((prox(gs[k], gamma, 2 * qy[k] - ys[k])
                                - qy[k]) ** 2)) for k in range(q)))
        sol['z'], sol['w'] = qx, qy
        return xs_n + ys_n + zs_n + ws_n, res

    obj = (lambda st: objective(np.concatenate(sol['z']))) if objective else None
    tr = _run(step, xs + ys + zs + ws, stop, objective=obj, seed=rng.seed,
              check_stagnation=False)
    tr.metadata['w'] = [np.asarray(b) for b in tr.x[2 * m + q:]]
    tr.x = (tr.x[m + q] if m == 1
            else [np.asarray(b) for b in tr.x[m + q:2 * m + q]])
    return tr


def block_coordinate_fb(fs, grad_gs, Lgrid, gammas, lam, activation_probs,
                        x0_blocks, rng, stop=None, delta=None, eps=1e-3,
                        objective=None):
    """Random block-coordinate forward-backward: active coordinate i
    takes a gradient step through the couplings then a prox of f_i.

    gammas gives the per-coordinate step (scalar, list, or callable
    (i, n) -> gamma), each required to stay <= (2 - eps)/delta for
    the declared full-gradient Lipschitz constant.
    """
    m, q = len(fs), len(grad_gs)
    probs = [float(p) for p in activation_probs]
    if len(probs) != m or any(p <= 0 for p in probs):
        raise ValueError("need one positive activation probability per "
                         "coordinate")
    rng = Rng.coerce(rng)

    def gamma_at(i, n):
        if callable(gammas):
            g = float(gammas(i, n))
        elif hasattr(gammas, '__len__'):
            g = float(gammas[i])
        else:
            g = float(gammas)
        if g <= 0:
            raise ValueError("gamma must be positive")
        if delta is not None and g > (2.0 - eps) / delta:
            raise ValueError("gamma %g exceeds (2 - eps)/delta" % g)
        return g

    def grads_at(xs):
        lks = [sum(L.forward(xs[j]) for j, L in enumerate(row)
                   if L is not None) for row in Lgrid]
        gk = [np.asarray(grad_gs[k](lks[k]), dtype=float) for k in range(q)]
        pulls = []
        for i in range(m):
            pull = np.zeros_like(xs[i])
            for k, row in enumerate(Lgrid):
                if row[i] is not None:
                    pull = pull + row[i].adjoint(gk[k])
            pulls.append(pull)
        return pulls

    def step(n, xs):
        pulls = grads_at(xs)
        draws = rng.gen.uniform(size=m)
        xs_n = []
        full_sq = 0.0
        for i in range(m):
            g = gamma_at(i, n)
            r = xs[i] - g * pulls[i]
            p = prox(fs[i], g, r)
            full_sq += float(np.sum((p - xs[i]) ** 2))
            if draws[i] < probs[i]:
                xs_n.append(xs[i] + lam * (p - xs[i]))
            else:
                xs_n.append(xs[i].copy())
        return xs_n, math.sqrt(full_sq)

    obj = (lambda xs: objective(np.concatenate(xs))) if objective else None
    tr = _run(step, [np.asarray(b, dtype=float) for b in x0_blocks], stop,
              objective=obj, seed=rng.seed, check_stagnation=False)
    return tr


def block_update_fb(f0, grads, deltas, weights, schedule, gamma, x0,
                    t_init=None, stop=None, rng=None, objective=None):
    """Forward-backward with block gradient updates: refresh
    t_{i,n} = x_n - gamma grad f_i(x_n) for the active blocks, recycle
    the rest, then x_{n+1} = prox_{gamma f_0}(sum w_i t_{i,n}).

    gamma must lie in (0, 2/max delta_i); the schedule's coverage
    window is enforced while running.
    """
    m = len(grads)
    weights = [float(w) for w in weights]
    if len(weights) != m or any(w <= 0 for w in weights):
        raise ValueError("weights must be positive, one per block")
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    dmax = max(float(d) for d in deltas)
    if not (0 < gamma < 2.0 / dmax):
        raise ValueError("gamma must lie in (0, 2/max delta_i)")
    rng = Rng.coerce(rng)
    x0 = np.asarray(x0, dtype=float)
    t = ([np.asarray(ti, dtype=float).copy() for ti in t_init]
         if t_init is not None
         else [x0 - gamma * np.asarray(g(x0), dtype=float) for g in grads])
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
            t[i] = x - gamma * np.asarray(grads[i](x), dtype=float)
        x_next = prox(f0, gamma, sum(w * ti for w, ti in zip(weights, t)))
        return x_next, float(np.linalg.norm(x_next - x))

    stop = stop or StopRule()
    rec = _Recorder(stop, x0, objective, seed=rng.seed,
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
