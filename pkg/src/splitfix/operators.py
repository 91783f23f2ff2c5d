"""
Regularity-tagged operators, the closed-form projection/prox catalog,
and the averagedness/cocoercivity calculus consumed by every iteration
driver and splitting method.
"""

import json
import warnings

import numpy as np

from .linalg import as_vector, as_matrix, sym_eig, svd, operator_norm

__all__ = [
    'RegularityTag', 'OperatorRef', 'SetDescriptor', 'FunctionDescriptor',
    'MonotoneOp', 'project', 'prox', 'prox_conjugate', 'func_value',
    'soft_threshold', 'relax', 'compose', 'combine', 'forward_step',
    'lipschitz_to_averaged', 'cocoercive_sum', 'three_composite', 'reflect',
    'residual', 'Constant', 'Explicit', 'SqrtBand',
    'validate_relaxation_schedule', 'TagDegradation',
]

LIPSCHITZ = 'lipschitz'
NONEXPANSIVE = 'nonexpansive'
AVERAGED = 'averaged'
FIRMLY_NONEXPANSIVE = 'firmly_nonexpansive'
COCOERCIVE = 'cocoercive'
CONTRACTION = 'contraction'


class TagDegradation(UserWarning):
    """Raised as a warning when a calculus rule loses a finite constant."""


class RegularityTag:
    """An operator regularity class with its constant.

    kind is one of 'lipschitz', 'nonexpansive', 'averaged',
    'firmly_nonexpansive', 'cocoercive', 'contraction'. The weaken
    lattice follows the usual implications: firmly nonexpansive is
    1/2-averaged, averaged is nonexpansive, nonexpansive is
    1-Lipschitz, beta-cocoercive is (1/beta)-Lipschitz.
    """

    __slots__ = ('kind', 'constant')

    def __init__(self, kind, constant=None):
        if kind == AVERAGED:
            if constant is None or not (0 < constant < 1):
                raise ValueError("averaged constant must be in (0,1)")
        elif kind == CONTRACTION:
            if constant is None or not (0 < constant < 1):
                raise ValueError("contraction constant must be in (0,1)")
        elif kind in (LIPSCHITZ, COCOERCIVE):
            if constant is None or constant <= 0:
                raise ValueError("%s constant must be positive" % kind)
        elif kind in (NONEXPANSIVE, FIRMLY_NONEXPANSIVE):
            constant = None
        else:
            raise ValueError("unknown regularity kind %r" % (kind,))
        self.kind = kind
        self.constant = constant

    def __repr__(self):
        if self.constant is None:
            return "RegularityTag(%r)" % self.kind
        return "RegularityTag(%r, %g)" % (self.kind, self.constant)

    def __eq__(self, other):
        return (isinstance(other, RegularityTag)
                and self.kind == other.kind
                and self.constant == other.constant)

    # -- weaken lattice ----------------------------------------------------

    def averaged_constant(self):
        """The alpha for which the operator is alpha-averaged, or None."""
        if self.kind == FIRMLY_NONEXPANSIVE:
            return 0.5
        if self.kind == AVERAGED:
            return self.constant
        return None

    def lipschitz_constant(self):
        """A Lipschitz constant implied by the tag, or None."""
        if self.kind in (FIRMLY_NONEXPANSIVE, AVERAGED, NONEXPANSIVE):
            return 1.0
        if self.kind == COCOERCIVE:
            return 1.0 / self.constant
        if self.kind in (LIPSCHITZ, CONTRACTION):
            return self.constant
        return None

    def weaken(self, kind):
        """Coerce down the implication lattice; raises if not implied."""
        if kind == self.kind:
            return self
        if kind == AVERAGED and self.kind == FIRMLY_NONEXPANSIVE:
            return RegularityTag(AVERAGED, 0.5)
        if kind == NONEXPANSIVE and self.averaged_constant() is not None:
            return RegularityTag(NONEXPANSIVE)
        if kind == LIPSCHITZ:
            delta = self.lipschitz_constant()
            if delta is not None:
                return RegularityTag(LIPSCHITZ, delta)
        raise ValueError("cannot weaken %s to %s" % (self.kind, kind))


def firmly_nonexpansive():
    return RegularityTag(FIRMLY_NONEXPANSIVE)


def averaged(alpha):
    return RegularityTag(AVERAGED, alpha)


class OperatorRef:
    """An evaluable map together with its regularity tag."""

    __slots__ = ('fn', 'tag', 'dim')

    def __init__(self, fn, tag, dim=None):
        self.fn = fn
        self.tag = tag
        self.dim = dim

    def __call__(self, x):
        return self.fn(x)

    @staticmethod
    def identity(dim=None):
        return OperatorRef(lambda x: np.array(x, dtype=float, copy=True),
                           firmly_nonexpansive(), dim)


# -- set catalog -------------------------------------------------------------

class SetDescriptor:
    """A nonempty closed convex set with a closed-form projector.

    Variants: box, halfspace, hyperplane, l2ball, affine, custom.
    """

    def __init__(self, variant, **payload):
        self.variant = variant
        self.payload = payload
        if variant == 'box':
            lo = as_vector(payload['lo'])
            hi = as_vector(payload['hi'])
            if np.any(lo > hi):
                raise ValueError("empty box (lo > hi)")
            self.payload = {'lo': lo, 'hi': hi}
        elif variant in ('halfspace', 'hyperplane'):
            a = as_vector(payload['a'])
            if np.linalg.norm(a) == 0:
                raise ValueError("normal vector must be nonzero")
            self.payload = {'a': a, 'b': float(payload['b'])}
        elif variant == 'l2ball':
            r = float(payload['radius'])
            if r < 0:
                raise ValueError("radius must be nonnegative")
            self.payload = {'center': as_vector(payload['center']),
                            'radius': r}
        elif variant == 'affine':
            A = as_matrix(payload['A'])
            c = as_vector(payload['c'])
            # precompute the pseudoinverse and verify Ax = c is solvable
            pinv = np.linalg.pinv(A)
            if np.linalg.norm(A @ (pinv @ c) - c) > 1e-8 * (1 + np.linalg.norm(c)):
                raise ValueError("inconsistent affine system")
            self.payload = {'A': A, 'c': c, 'pinv': pinv}
        elif variant == 'custom':
            self.payload = {'projector': payload['projector']}
        else:
            raise ValueError("unknown set variant %r" % (variant,))

    @staticmethod
    def box(lo, hi):
        return SetDescriptor('box', lo=lo, hi=hi)

    @staticmethod
    def halfspace(a, b):
        return SetDescriptor('halfspace', a=a, b=b)

    @staticmethod
    def hyperplane(a, b):
        return SetDescriptor('hyperplane', a=a, b=b)

    @staticmethod
    def l2ball(center, radius):
        return SetDescriptor('l2ball', center=center, radius=radius)

    @staticmethod
    def affine(A, c):
        return SetDescriptor('affine', A=A, c=c)

    @staticmethod
    def custom(projector):
        return SetDescriptor('custom', projector=projector)

    @staticmethod
    def singleton(c):
        c = as_vector(c)
        return SetDescriptor('box', lo=c, hi=c)

    def to_json(self):
        p = self.payload
        if self.variant == 'custom':
            raise ValueError("custom projectors are not serializable")
        if self.variant == 'box':
            data = {'lo': p['lo'].tolist(), 'hi': p['hi'].tolist()}
        elif self.variant in ('halfspace', 'hyperplane'):
            data = {'a': p['a'].tolist(), 'b': p['b']}
        elif self.variant == 'l2ball':
            data = {'center': p['center'].tolist(), 'radius': p['radius']}
        else:
            data = {'A': p['A'].tolist(), 'c': p['c'].tolist()}
        return json.dumps({'variant': self.variant, **data})

    @staticmethod
    def from_json(s):
        d = json.loads(s) if isinstance(s, str) else dict(s)
        variant = d.pop('variant')
        return SetDescriptor(variant, **d)


def project(sd, x):
    """Projection onto the set described by sd."""
    x = as_vector(x)
    p = sd.payload
    if sd.variant == 'box':
        return np.clip(x, p['lo'], p['hi'])
    if sd.variant == 'halfspace':
        a, b = p['a'], p['b']
        excess = float(np.dot(a, x)) - b
        if excess <= 0:
            return x.copy()
        return x - (excess / float(np.dot(a, a))) * a
    if sd.variant == 'hyperplane':
        a, b = p['a'], p['b']
        return x - ((float(np.dot(a, x)) - b) / float(np.dot(a, a))) * a
    if sd.variant == 'l2ball':
        c, r = p['center'], p['radius']
        d = x - c
        nd = np.linalg.norm(d)
        if nd <= r:
            return x.copy()
        return c + (r / nd) * d
    if sd.variant == 'affine':
        A, c, pinv = p['A'], p['c'], p['pinv']
        return x - pinv @ (A @ x - c)
    return as_vector(sd.payload['projector'](x))


def set_contains(sd, x, tol=1e-9):
    """Membership check up to tol (distance-based)."""
    return np.linalg.norm(project(sd, x) - as_vector(x)) <= tol


# -- function catalog --------------------------------------------------------

def soft_threshold(x, t):
    """Componentwise soft threshold; |x| = t maps exactly to 0."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


class FunctionDescriptor:
    """A proper lsc convex function with a closed-form prox.

    Variants: l1, sqnormhalf, quadraticfit, neglogdet, nuclear,
    indicator, separablescalar, custom.
    """

    def __init__(self, variant, **payload):
        self.variant = variant
        if variant == 'l1':
            w = float(payload.get('weight', 1.0))
            if w < 0:
                raise ValueError("l1 weight must be nonnegative")
            self.payload = {'weight': w}
        elif variant == 'sqnormhalf':
            self.payload = {}
        elif variant == 'quadraticfit':
            H = as_matrix(payload['H'])
            y = as_vector(payload['y'])
            kappa = float(payload.get('kappa', 0.0))
            if kappa < 0:
                raise ValueError("kappa must be nonnegative")
            self.payload = {'H': H, 'y': y, 'kappa': kappa}
        elif variant == 'neglogdet':
            self.payload = {}
        elif variant == 'nuclear':
            w = float(payload.get('weight', 1.0))
            if w < 0:
                raise ValueError("nuclear weight must be nonnegative")
            self.payload = {'weight': w}
        elif variant == 'indicator':
            self.payload = {'set': payload['set']}
        elif variant == 'separablescalar':
            # scalar_prox(gamma, xi) -> prox of the coordinate function
            self.payload = {'scalar_prox': payload['scalar_prox'],
                            'scalar_value': payload.get('scalar_value')}
        elif variant == 'custom':
            # prox_factory(gamma) -> callable, value optional
            self.payload = {'prox_factory': payload['prox_factory'],
                            'value': payload.get('value')}
        else:
            raise ValueError("unknown function variant %r" % (variant,))

    @staticmethod
    def l1(weight=1.0):
        return FunctionDescriptor('l1', weight=weight)

    @staticmethod
    def sqnormhalf():
        return FunctionDescriptor('sqnormhalf')

    @staticmethod
    def quadraticfit(H, y, kappa=0.0):
        return FunctionDescriptor('quadraticfit', H=H, y=y, kappa=kappa)

    @staticmethod
    def neglogdet():
        return FunctionDescriptor('neglogdet')

    @staticmethod
    def nuclear(weight=1.0):
        return FunctionDescriptor('nuclear', weight=weight)

    @staticmethod
    def indicator(sd):
        return FunctionDescriptor('indicator', set=sd)

    @staticmethod
    def separable_scalar(scalar_prox, scalar_value=None):
        return FunctionDescriptor('separablescalar', scalar_prox=scalar_prox,
                                  scalar_value=scalar_value)

    @staticmethod
    def custom(prox_factory, value=None):
        return FunctionDescriptor('custom', prox_factory=prox_factory,
                                  value=value)

    @staticmethod
    def zero():
        return FunctionDescriptor('custom',
                                  prox_factory=lambda g: (lambda x: np.asarray(x, dtype=float).copy()),
                                  value=lambda x: 0.0)

    def to_json(self):
        p = self.payload
        if self.variant == 'l1':
            data = {'weight': p['weight']}
        elif self.variant == 'sqnormhalf':
            data = {}
        elif self.variant == 'quadraticfit':
            data = {'H': p['H'].tolist(), 'y': p['y'].tolist(),
                    'kappa': p['kappa']}
        elif self.variant == 'neglogdet':
            data = {}
        elif self.variant == 'nuclear':
            data = {'weight': p['weight']}
        elif self.variant == 'indicator':
            data = {'set': json.loads(p['set'].to_json())}
        else:
            raise ValueError("custom callables are not serializable")
        return json.dumps({'variant': self.variant, **data})

    @staticmethod
    def from_json(s):
        d = json.loads(s) if isinstance(s, str) else dict(s)
        variant = d.pop('variant')
        if variant == 'indicator':
            return FunctionDescriptor('indicator',
                                      set=SetDescriptor.from_json(json.dumps(d['set'])))
        return FunctionDescriptor(variant, **d)


def prox(fd, gamma, x):
    """Proximal point of fd at x with parameter gamma > 0."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    p = fd.payload
    if fd.variant == 'l1':
        return soft_threshold(np.asarray(x, dtype=float), gamma * p['weight'])
    if fd.variant == 'sqnormhalf':
        return np.asarray(x, dtype=float) / (1.0 + gamma)
    if fd.variant == 'quadraticfit':
        H, y, kappa = p['H'], p['y'], p['kappa']
        x = as_vector(x)
        n = len(x)
        A = np.eye(n) + gamma * (H.T @ H + kappa * np.eye(n))
        return np.linalg.solve(A, x + gamma * (H.T @ y))
    if fd.variant == 'neglogdet':
        X = as_matrix(x)
        scale = max(1.0, float(np.abs(X).max()))
        if np.abs(X - X.T).max() > 1e-10 * scale:
            raise ValueError("neglogdet prox requires a symmetric input")
        mu, U = sym_eig(X)
        clamped = (mu + np.sqrt(mu ** 2 + 4.0 * gamma)) / 2.0
        return U @ np.diag(clamped) @ U.T
    if fd.variant == 'nuclear':
        X = as_matrix(x)
        U, s, V = svd(X)
        return U @ np.diag(soft_threshold(s, gamma * p['weight'])) @ V.T
    if fd.variant == 'indicator':
        return project(p['set'], x)
    if fd.variant == 'separablescalar':
        x = np.asarray(x, dtype=float)
        sp = p['scalar_prox']
        return np.array([sp(gamma, xi) for xi in x.ravel()]).reshape(x.shape)
    return np.asarray(p['prox_factory'](gamma)(x), dtype=float)


def prox_conjugate(fd, gamma, x):
    """prox of the conjugate function via the extended Moreau identity.

    prox_{gamma f*}(x) = x - gamma prox_{f/gamma}(x/gamma).
    At gamma = 1 this is the Moreau identity prox_f + prox_{f*} = Id.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    return x - gamma * prox(fd, 1.0 / gamma, x / gamma)


def func_value(fd, x):
    """Evaluate fd at x when a closed form exists (inf for indicators
    off the set); raises for custom descriptors lacking a value."""
    p = fd.payload
    if fd.variant == 'l1':
        return p['weight'] * float(np.abs(np.asarray(x)).sum())
    if fd.variant == 'sqnormhalf':
        return 0.5 * float(np.sum(np.asarray(x) ** 2))
    if fd.variant == 'quadraticfit':
        H, y, kappa = p['H'], p['y'], p['kappa']
        r = H @ as_vector(x) - y
        return 0.5 * float(np.dot(r, r)) + 0.5 * kappa * float(np.dot(x, x))
    if fd.variant == 'neglogdet':
        X = as_matrix(x)
        sign, logdet = np.linalg.slogdet(X)
        if sign <= 0:
            return np.inf
        return -float(logdet)
    if fd.variant == 'nuclear':
        _, s, _ = svd(as_matrix(x))
        return p['weight'] * float(s.sum())
    if fd.variant == 'indicator':
        return 0.0 if set_contains(p['set'], x) else np.inf
    if fd.variant == 'separablescalar' and p['scalar_value'] is not None:
        return float(sum(p['scalar_value'](xi)
                         for xi in np.asarray(x, dtype=float).ravel()))
    if fd.variant == 'custom' and p['value'] is not None:
        return float(p['value'](x))
    raise ValueError("no closed-form value for %r" % (fd.variant,))


# -- maximally monotone operators -------------------------------------------

class MonotoneOp:
    """A maximally monotone operator represented by its resolvent factory.

    resolvent_factory(gamma) returns the evaluable map J_{gamma A}.
    Single-valued operators may also carry a direct eval and a
    cocoercivity (beta) or Lipschitz (delta) constant.
    """

    __slots__ = ('resolvent_factory', 'eval', 'beta', 'delta')

    def __init__(self, resolvent_factory=None, eval=None, beta=None,
                 delta=None):
        if resolvent_factory is None and eval is None:
            raise ValueError("need a resolvent factory or a direct eval")
        self.resolvent_factory = resolvent_factory
        self.eval = eval
        self.beta = beta
        self.delta = delta

    def resolvent(self, gamma):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.resolvent_factory is None:
            raise ValueError("operator has no resolvent oracle")
        return self.resolvent_factory(gamma)

    @staticmethod
    def from_function(fd):
        return MonotoneOp(resolvent_factory=lambda g: (lambda x: prox(fd, g, x)))

    @staticmethod
    def from_set(sd):
        # normal cone operator; resolvent is the projector at every gamma
        return MonotoneOp(resolvent_factory=lambda g: (lambda x: project(sd, x)))

    @staticmethod
    def from_map(fn, beta=None, delta=None):
        """Single-valued monotone map applied forward only."""
        return MonotoneOp(eval=fn, beta=beta, delta=delta)

    @staticmethod
    def from_linear(M, beta=None, delta=None):
        """Single-valued monotone linear map; resolvent by direct solve."""
        A = as_matrix(M)
        n = A.shape[0]

        def factory(g):
            B = np.eye(n) + g * A
            return lambda x: np.linalg.solve(B, as_vector(x))

        return MonotoneOp(resolvent_factory=factory,
                          eval=lambda x: A @ as_vector(x),
                          beta=beta, delta=delta)

    @staticmethod
    def zero():
        return MonotoneOp(resolvent_factory=lambda g: (lambda x: np.asarray(x, dtype=float).copy()),
                          eval=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                          beta=None, delta=0.0)


# -- averagedness calculus ---------------------------------------------------

def relax(T, lam):
    """Id + lam (T - Id) for an Averaged(alpha) operand.

    lam in (0, 1/alpha); lam = 1/alpha is allowed and yields a
    Nonexpansive result.
    """
    alpha = T.tag.averaged_constant()
    if alpha is None:
        raise ValueError("relax requires an averaged tag")
    if not (0 < lam <= 1.0 / alpha):
        raise ValueError("lambda must lie in (0, 1/alpha]")
    la = lam * alpha

    def fn(x, T=T, lam=lam):
        x = np.asarray(x, dtype=float)
        return x + lam * (T(x) - x)

    tag = RegularityTag(NONEXPANSIVE) if la >= 1.0 else averaged(la)
    return OperatorRef(fn, tag, T.dim)


def compose(ops):
    """Composition T_1 o ... o T_m with the averagedness constant
    alpha = 1 / (1 + 1 / sum alpha_i/(1-alpha_i))."""
    if not ops:
        raise ValueError("need at least one operator")
    if len(ops) == 1:
        return ops[0]
    alphas = [T.tag.averaged_constant() for T in ops]
    degraded = any(a is None or a >= 1.0 for a in alphas)

    def fn(x, ops=tuple(ops)):
        y = np.asarray(x, dtype=float)
        for T in reversed(ops):
            y = T(y)
        return y

    if degraded:
        for T in ops:
            if T.tag.averaged_constant() is None:
                T.tag.weaken(NONEXPANSIVE)  # raises if not even nonexpansive
        warnings.warn("composition with an untagged-constant operand; "
                      "result tagged nonexpansive only", TagDegradation)
        return OperatorRef(fn, RegularityTag(NONEXPANSIVE), ops[0].dim)
    s = sum(a / (1.0 - a) for a in alphas)
    alpha = 1.0 / (1.0 + 1.0 / s)
    return OperatorRef(fn, averaged(alpha), ops[0].dim)


def combine(weights, ops):
    """Convex combination sum w_i T_i, averaged with sum w_i alpha_i."""
    weights = [float(w) for w in weights]
    if len(weights) != len(ops) or not ops:
        raise ValueError("weights and operators must align")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    alphas = [T.tag.averaged_constant() for T in ops]
    if any(a is None for a in alphas):
        raise ValueError("combine requires averaged tags")

    def fn(x, ops=tuple(ops), weights=tuple(weights)):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, T in zip(weights, ops):
            out = out + w * T(x)
        return out

    alpha = sum(w * a for w, a in zip(weights, alphas))
    if all(T.tag.kind == FIRMLY_NONEXPANSIVE for T in ops):
        tag = firmly_nonexpansive()
    elif alpha == 0.5:
        tag = averaged(0.5)
    else:
        tag = averaged(alpha)
    return OperatorRef(fn, tag, ops[0].dim)


def forward_step(B, gamma):
    """Id - gamma B for a beta-cocoercive single-valued B; the result
    is gamma/(2 beta)-averaged."""
    if B.eval is None:
        raise ValueError("forward step needs a single-valued operator")
    if B.beta is None:
        raise ValueError("forward step needs a cocoercivity constant")
    if not (0 < gamma < 2 * B.beta):
        raise ValueError("gamma must lie in (0, 2 beta)")

    def fn(x, B=B, gamma=gamma):
        x = np.asarray(x, dtype=float)
        return x - gamma * B.eval(x)

    return OperatorRef(fn, averaged(gamma / (2.0 * B.beta)))


def lipschitz_to_averaged(T):
    """Retag a delta-Lipschitz operator with delta < 1 as
    (delta+1)/2-averaged."""
    if T.tag.kind not in (LIPSCHITZ, CONTRACTION):
        raise ValueError("expected a Lipschitz or contraction tag")
    delta = T.tag.constant
    if delta >= 1.0:
        raise ValueError("requires delta < 1")
    return OperatorRef(T.fn, averaged((delta + 1.0) / 2.0), T.dim)


def cocoercive_sum(Ls, Ts):
    """sum L_k* T_k L_k for beta_k-cocoercive T_k.

    Ts is a list of (OperatorRef-or-callable, beta_k). The composite is
    cocoercive with beta = 1 / sum(||L_k||^2 / beta_k), and firmly
    nonexpansive when every T_k is and sum ||L_k||^2 <= 1.
    """
    if len(Ls) != len(Ts) or not Ls:
        raise ValueError("operator lists must align")
    norms = []
    for L in Ls:
        nL = operator_norm(L)
        if nL == 0:
            raise ValueError("zero linear factor")
        norms.append(nL)
    betas = [b for _, b in Ts]
    if any(b <= 0 for b in betas):
        raise ValueError("cocoercivity constants must be positive")
    beta = 1.0 / sum(n ** 2 / b for n, b in zip(norms, betas))

    def fn(x, Ls=tuple(Ls), Ts=tuple(Ts)):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for L, (T, _) in zip(Ls, Ts):
            out = out + L.adjoint(T(L.forward(x)))
        return out

    all_fne = all(isinstance(T, OperatorRef)
                  and T.tag.kind == FIRMLY_NONEXPANSIVE for T, _ in Ts)
    if all_fne and sum(n ** 2 for n in norms) <= 1.0 + 1e-12:
        tag = firmly_nonexpansive()
    else:
        tag = RegularityTag(COCOERCIVE, beta)
    return OperatorRef(fn, tag), beta


def three_composite(T1, T2, T3):
    """T1 o (T2 - Id + T3 o T2) + Id - T2 with T1, T2 firmly
    nonexpansive and T3 alpha3-averaged; the result is
    1/(2-alpha3)-averaged."""
    for T in (T1, T2):
        if T.tag.kind != FIRMLY_NONEXPANSIVE:
            raise ValueError("T1 and T2 must be firmly nonexpansive")
    alpha3 = T3.tag.averaged_constant()
    if alpha3 is None:
        raise ValueError("T3 must carry an averaged tag")

    def fn(x, T1=T1, T2=T2, T3=T3):
        x = np.asarray(x, dtype=float)
        u = T2(x)
        return T1(u - x + T3(u)) + x - u

    return OperatorRef(fn, averaged(1.0 / (2.0 - alpha3)), T1.dim)


def reflect(T):
    """2T - Id for a firmly nonexpansive T; nonexpansive."""
    if T.tag.kind != FIRMLY_NONEXPANSIVE:
        raise ValueError("reflection requires a firmly nonexpansive tag")

    def fn(x, T=T):
        x = np.asarray(x, dtype=float)
        return 2.0 * T(x) - x

    return OperatorRef(fn, RegularityTag(NONEXPANSIVE), T.dim)


def residual(T, x):
    """Fixed-point residual ||Tx - x||."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(T(x) - x))


# -- relaxation schedules ----------------------------------------------------

class Constant:
    """lambda_n = lam for all n."""

    def __init__(self, lam):
        self.lam = float(lam)

    def value(self, n, alpha):
        return self.lam


class Explicit:
    """A finite, explicitly listed schedule (cycled past its end)."""

    def __init__(self, values):
        self.values = [float(v) for v in values]
        if not self.values:
            raise ValueError("empty schedule")

    def value(self, n, alpha):
        return self.values[min(n, len(self.values) - 1)]


class SqrtBand:
    """lambda_n = 1/alpha - eps/sqrt(n+1), the upper edge of the
    eps/sqrt(n+1) band around (0, 1/alpha)."""

    def __init__(self, eps=1e-2):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)

    def value(self, n, alpha):
        return 1.0 / alpha - self.eps / np.sqrt(n + 1.0)


def validate_relaxation_schedule(alpha, schedule, horizon=10000):
    """Check that schedule is an alpha-relaxation sequence.

    Requires lambda_n in (0, 1/alpha) (raises otherwise) and a
    divergent sum of lambda_n (1 - alpha lambda_n). Constant and
    SqrtBand schedules are decided analytically; Explicit ones use the
    documented heuristic: partial sum over the horizon >= horizon**0.4.
    """
    if not (0 < alpha <= 1):
        raise ValueError("alpha must be in (0, 1]")
    if isinstance(schedule, Constant):
        lam = schedule.lam
        if not (0 < lam < 1.0 / alpha):
            raise ValueError("lambda outside (0, 1/alpha)")
        return lam * (1 - alpha * lam) > 0
    if isinstance(schedule, SqrtBand):
        lam0 = schedule.value(0, alpha)
        if not (0 < lam0 < 1.0 / alpha):
            raise ValueError("lambda outside (0, 1/alpha)")
        # sum of lam_n (1 - alpha lam_n) >= sum eps/sqrt(n+1) * alpha * c,
        # divergent for every eps > 0 small enough to keep lam_0 positive
        return True
    if isinstance(schedule, Explicit):
        total = 0.0
        for n in range(horizon):
            lam = schedule.value(n, alpha)
            if not (0 < lam < 1.0 / alpha):
                raise ValueError("lambda outside (0, 1/alpha) at n=%d" % n)
            total += lam * (1 - alpha * lam)
        if total < horizon ** 0.4:
            raise ValueError("explicit relaxation schedule fails the "
                             "divergent-sum heuristic")
        return True
    raise ValueError("unknown schedule type %r" % (type(schedule),))
