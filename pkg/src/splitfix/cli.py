"""
Command line front end: solve problem files, run canned demos,
certify networks, and validate problem schemas.

Every report writes a solution JSON, a trace CSV, a run-summary JSON,
and a residual-curve figure next to the CSV.

Exit codes: 0 on completion (including MaxIterations, reported in the
summary status field), 2 on schema errors, 3 on step-size or
relaxation band violations.
"""

import argparse
import json
import os
import sys

import numpy as np

from .linalg import LinMap
from .operators import (SetDescriptor, FunctionDescriptor, OperatorRef,
                        firmly_nonexpansive, Constant, prox)
from .drivers import StopRule, Rng
from .applications import (FeasibilitySpec, MismatchSpec, pocs, cycles,
                           lasso_logistic, graphical_lasso, robust_pca,
                           matrix_completion, nash_n45_game, nash_dy,
                           mismatched_fb, pnp_fb, problem_from_json)
from .netanalysis import FeedforwardNet, lipschitz_certificate
from . import applications

__all__ = ['main']

DEMOS = ('pocs-three-sets', 'cycles', 'glasso', 'rpca', 'nash-n45',
         'mismatch-scalar', 'pnp-fb')


def _configure_threads():
    """SPLITFIX_THREADS=0 (or 1) pins the BLAS pools to one thread."""
    raw = os.environ.get('SPLITFIX_THREADS')
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise SchemaError("SPLITFIX_THREADS must be an integer")
    if n <= 1:
        for var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS',
                    'MKL_NUM_THREADS'):
            os.environ[var] = '1'
    return n


class SchemaError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, np.integer)):
        return float(x)
    return x


def _render_figure(trace, path):
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    r = np.asarray(trace.residuals, dtype=float)
    r = np.where(r > 0, r, np.nan)
    ax.semilogy(np.arange(len(r)), r)
    ax.set_xlabel('iteration')
    ax.set_ylabel('residual')
    ax.set_title('residual decay (%s)' % trace.status)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _write_report(out_dir, trace, solution, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, 'trace.csv')
    with open(csv_path, 'w', newline='') as fh:
        fh.write(trace.to_csv())
    with open(os.path.join(out_dir, 'summary.json'), 'w') as fh:
        fh.write(trace.summary_json())
    payload = {'solution': _jsonable(solution)}
    if extra:
        payload.update(_jsonable(extra))
    with open(os.path.join(out_dir, 'solution.json'), 'w') as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    _render_figure(trace, os.path.join(out_dir, 'residuals.png'))
    return csv_path


def _set_dim(sd):
    p = sd.payload
    if sd.variant == 'box':
        return len(p['lo'])
    if sd.variant in ('halfspace', 'hyperplane'):
        return len(p['a'])
    if sd.variant == 'l2ball':
        return len(p['center'])
    if sd.variant == 'affine':
        return p['A'].shape[1]
    raise SchemaError("cannot infer dimension for a custom set")


def _stop_from_args(args):
    return StopRule(max_iter=args.max_iter, residual_tol=args.tol)


def _solve_payload(kind, payload, args):
    stop = _stop_from_args(args)
    gamma = args.gamma
    lam = getattr(args, 'lam', None)
    if kind == 'feasibility':
        sets = payload['sets']
        x0 = payload['x0']
        if len(x0) != _set_dim(sets[0]):
            x0 = np.zeros(_set_dim(sets[0]))
        tr = pocs(FeasibilitySpec(sets), x0, stop=stop,
                  barycentric=payload['barycentric'])
        return tr, tr.x, None
    if kind in ('lasso', 'logistic'):
        tr = lasso_logistic(payload['A'], payload['eta'], payload['alpha'],
                            loss=payload['loss'], stop=stop, gamma=gamma,
                            rng=Rng(args.seed))
        return tr, tr.x, None
    if kind == 'glasso':
        tr = graphical_lasso(payload['O'], payload['chi'], gamma or 1.0,
                             stop=stop,
                             lam_schedule=Constant(lam) if lam else None)
        return tr, tr.x, None
    if kind == 'rpca':
        X, Y, tr = robust_pca(payload['O'], payload['chi'], gamma or 1.0,
                              stop=stop,
                              lam_schedule=Constant(lam) if lam else None)
        return tr, {'sparse': X, 'lowrank': Y}, None
    if kind == 'completion':
        tr = matrix_completion(payload['O'], payload['mask'],
                               payload['chi'], gamma=gamma, lam=lam,
                               stop=stop)
        return tr, tr.x, None
    if kind == 'cycles':
        sets = payload['sets']
        x0 = payload['x0']
        if len(x0) != _set_dim(sets[0]):
            x0 = np.zeros(_set_dim(sets[0]))
        points, tr = cycles(sets, x0, stop=stop)
        return tr, points, None
    if kind == 'nash':
        game = nash_n45_game(payload['Ls'], payload['os'])
        y0 = [np.zeros(d) for d in game.dims]
        tr = nash_dy(game, y0, stop=stop, gamma=gamma,
                     lam_schedule=Constant(lam) if lam else None)
        return tr, tr.x, None
    if kind == 'mismatch':
        spec = MismatchSpec(LinMap.from_matrix(payload['H']),
                            LinMap.from_matrix(payload['K']),
                            payload['kappa'], payload['y'])
        x_tilde, tr, report = mismatched_fb(spec, stop=stop, gamma=gamma)
        return tr, x_tilde, {'bias_report': report}
    raise SchemaError("problem kind %r has no solve path; use a demo"
                      % (kind,))


# -- demos ---------------------------------------------------------------------

def _demo(name, args):
    stop = _stop_from_args(args)
    if name == 'pocs-three-sets':
        sets = [SetDescriptor.halfspace([1.0, 0.0], 1.0),
                SetDescriptor.halfspace([0.0, 1.0], 1.0),
                SetDescriptor.l2ball([0.0, 0.0], 1.2)]
        tr = pocs(FeasibilitySpec(sets), np.array([3.0, -2.0]), stop=stop)
        return tr, tr.x, None
    if name == 'cycles':
        points, tr = cycles([SetDescriptor.box([0.0], [1.0]),
                             SetDescriptor.box([2.0], [3.0])],
                            np.array([5.0]), stop=stop)
        return tr, points, None
    if name == 'glasso':
        O = np.array([[2.0, 0.3], [0.3, 4.0]])
        tr = graphical_lasso(O, 0.1, args.gamma or 1.0, stop=stop)
        return tr, tr.x, None
    if name == 'rpca':
        gen = np.random.default_rng(args.seed)
        u = gen.standard_normal(6)
        low = np.outer(u, u)
        sparse = np.zeros((6, 6))
        sparse[1, 4] = 5.0
        sparse[3, 0] = -4.0
        X, Y, tr = robust_pca(low + sparse, 0.5, args.gamma or 1.0,
                              stop=stop)
        return tr, {'sparse': X, 'lowrank': Y}, None
    if name == 'nash-n45':
        Ls = [np.array([[1.0]]), np.array([[2.0]])]
        os_ = [np.array([1.0]), np.array([-1.0])]
        game = nash_n45_game(Ls, os_,
                             psis=[FunctionDescriptor.sqnormhalf(),
                                   FunctionDescriptor.sqnormhalf()])
        tr = nash_dy(game, [np.zeros(1), np.zeros(1)], stop=stop,
                     gamma=args.gamma)
        return tr, tr.x, None
    if name == 'mismatch-scalar':
        spec = MismatchSpec(LinMap.from_matrix([[2.0]]),
                            LinMap.from_matrix([[1.5]]),
                            1.0, [2.0])
        x_tilde, tr, report = mismatched_fb(spec, stop=stop,
                                            gamma=args.gamma)
        return tr, x_tilde, {'bias_report': report}
    if name == 'pnp-fb':
        # denoise a soft-threshold-regular signal against quadratic data
        target = np.array([1.0, 0.0, -2.0, 0.0])
        Q = OperatorRef(lambda x: np.sign(x) * np.maximum(np.abs(x) - 0.05,
                                                          0.0),
                        firmly_nonexpansive(), 4)
        spec = applications.NetSpecLayeredDenoiser(
            Q, lambda x: x - target, beta=1.0)
        tr = pnp_fb(spec, args.gamma or 1.0, np.zeros(4), stop=stop)
        return tr, tr.x, None
    raise SchemaError("unknown demo %r (choose from %s)"
                      % (name, ', '.join(DEMOS)))


# -- entry point ---------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(prog='splitfix',
                                description='fixed-point and operator '
                                            'splitting toolkit')
    sub = p.add_subparsers(dest='command', required=True)

    def common(sp):
        sp.add_argument('--tol', type=float, default=1e-8)
        sp.add_argument('--max-iter', type=int, default=100000)
        sp.add_argument('--seed', type=int, default=0)
        sp.add_argument('--gamma', type=float, default=None)
        sp.add_argument('--lambda', dest='lam', type=float, default=None)
        sp.add_argument('--out', default='.')

    sp = sub.add_parser('solve', help='solve a problem file')
    sp.add_argument('problem_file')
    common(sp)

    sp = sub.add_parser('demo', help='run a canned demo')
    sp.add_argument('name', choices=DEMOS)
    common(sp)

    sp = sub.add_parser('analyze-net', help='certify a network file')
    sp.add_argument('net_file')
    sp.add_argument('--out', default='.')

    sp = sub.add_parser('validate', help='check a problem file schema')
    sp.add_argument('problem_file')
    return p


def _is_band_violation(msg):
    msg = msg.lower()
    return any(w in msg for w in ('gamma', 'lambda', 'outside', 'band',
                                  'must lie in', 'relaxation'))


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        threads = _configure_threads()
    except SchemaError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2

    try:
        if args.command == 'validate':
            with open(args.problem_file) as fh:
                problem_from_json(fh.read())
            print("ok")
            return 0

        if args.command == 'analyze-net':
            with open(args.net_file) as fh:
                net = FeedforwardNet.from_json(fh.read())
            cert = lipschitz_certificate(net)
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, 'certificate.json')
            with open(path, 'w') as fh:
                fh.write(cert.to_json())
            print(cert.to_json())
            return 0

        if args.command == 'solve':
            with open(args.problem_file) as fh:
                text = fh.read()
            try:
                kind, payload = problem_from_json(text)
            except (ValueError, KeyError, json.JSONDecodeError) as e:
                print("schema error: %s" % e, file=sys.stderr)
                return 2
            trace, solution, extra = _solve_payload(kind, payload, args)
        else:  # demo
            trace, solution, extra = _demo(args.name, args)

        extra = dict(extra or {})
        if threads is not None:
            extra['threads'] = threads
        csv_path = _write_report(args.out, trace, solution, extra)
        print("status: %s  iterations: %d  trace: %s"
              % (trace.status, trace.n_iter, csv_path))
        return 0
    except SchemaError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except ValueError as e:
        if _is_band_violation(str(e)):
            print("precondition violated: %s" % e, file=sys.stderr)
            return 3
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
