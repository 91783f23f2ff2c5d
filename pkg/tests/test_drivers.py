import numpy as np
import pytest

from splitfix.operators import (OperatorRef, RegularityTag, SetDescriptor,
                                project, Constant, Explicit,
                                firmly_nonexpansive, averaged)
from splitfix.drivers import (StopRule, Rng, RoundRobin, RandomSubset,
                              CONVERGED, MAX_ITERATIONS,
                              PRECONDITION_VIOLATED, banach_picard,
                              km_iterate, composite_km, cyclic_iterate,
                              block_update_iterate, stochastic_km,
                              random_block_km, hybrid_steepest_descent)


def _contraction():
    return OperatorRef(lambda x: 0.5 * np.asarray(x, dtype=float) + 1.0,
                       RegularityTag('contraction', 0.5), 1)


def _rotation(theta=np.pi / 2):
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return OperatorRef(lambda x: R @ np.asarray(x, dtype=float),
                       RegularityTag('nonexpansive'), 2)


# -- stop rules and traces -----------------------------------------------------

def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule(max_iter=0)
    with pytest.raises(ValueError):
        StopRule(residual_tol=0.0)
    with pytest.raises(ValueError):
        StopRule(divergence_factor=0.0)


def test_trace_csv_format():
    tr = banach_picard(_contraction(), np.array([10.0]),
                       StopRule(max_iter=50))
    text = tr.to_csv()
    lines = text.split('\n')
    assert lines[0] == 'iter,residual,objective,wall_ms'
    assert text.endswith('\n') and '\r' not in text
    # wall_ms column stays empty so identical runs are byte-identical
    assert lines[1].endswith(',')
    assert tr.wall_ms > 0
    summary = tr.summary_json()
    assert '"status"' in summary and '"final_residual"' in summary


def test_trace_thinning():
    tr = banach_picard(OperatorRef(lambda x: 0.99 * np.asarray(x, dtype=float),
                                   RegularityTag('contraction', 0.99), 1),
                       np.array([1.0]),
                       StopRule(max_iter=2000, residual_tol=1e-300))
    # dense residuals, thinned iterates (stride max_iter//1000 + endpoints)
    assert len(tr.residuals) == 2000
    assert len(tr.iterates) <= 2000 // (2000 // 1000) + 3


# -- banach --------------------------------------------------------------------

def test_banach_contraction_rate():
    tr = banach_picard(_contraction(), np.array([10.0]))
    assert tr.status == CONVERGED
    assert np.allclose(tr.x, 2.0, atol=1e-7)


def test_banach_requires_contraction_tag():
    with pytest.raises(ValueError):
        banach_picard(_rotation(), np.zeros(2))


# -- km ------------------------------------------------------------------------

def test_km_rotation_converges_to_zero():
    tr = km_iterate(_rotation(), Constant(0.5), np.array([3.0, 4.0]))
    assert tr.status == CONVERGED
    assert np.linalg.norm(tr.x) < 1e-7


def test_km_rejects_invalid_schedule():
    T = OperatorRef(lambda x: x, averaged(0.5), 2)
    with pytest.raises(ValueError):
        km_iterate(T, Constant(2.0), np.zeros(2))


def test_km_requires_averaged_or_nonexpansive():
    T = OperatorRef(lambda x: 2.0 * np.asarray(x, dtype=float),
                    RegularityTag('lipschitz', 2.0), 1)
    with pytest.raises(ValueError):
        km_iterate(T, Constant(0.5), np.ones(1))


def test_km_divergence_flag():
    # firmly nonexpansive with empty fixed point set: x -> (x+sqrt(x^2+4))/2
    T = OperatorRef(lambda x: (x + np.sqrt(x ** 2 + 4.0)) / 2.0,
                    firmly_nonexpansive(), 1)
    tr = km_iterate(T, Constant(1.0), np.array([0.0]),
                    StopRule(max_iter=10000, divergence_factor=10.0))
    assert tr.diverging
    assert tr.status == MAX_ITERATIONS
    assert tr.n_iter < 10000


def test_stagnation_reports_metadata():
    # translation step that is negligible relative to the iterate scale
    T = OperatorRef(lambda x: x + 1e-4, RegularityTag('nonexpansive'), 1)
    tr = km_iterate(T, Constant(0.5), np.array([1e10]),
                    StopRule(max_iter=1000))
    assert tr.status == MAX_ITERATIONS
    assert tr.metadata.get('stagnated') is True


# -- composite km --------------------------------------------------------------

def test_composite_km_converges():
    b1 = SetDescriptor.box([0.0], [1.0])
    b2 = SetDescriptor.box([0.5], [3.0])
    T1 = OperatorRef(lambda x: project(b1, x), firmly_nonexpansive(), 1)
    T2 = OperatorRef(lambda x: project(b2, x), firmly_nonexpansive(), 1)
    tr = composite_km(T1, T2, lambda n: 1.0, np.array([5.0]))
    assert tr.status == CONVERGED
    assert np.allclose(tr.x, 1.0, atol=1e-8)


def test_composite_km_lambda_band():
    T = OperatorRef(lambda x: np.asarray(x, dtype=float),
                    firmly_nonexpansive(), 1)
    # alpha_n = 2/3 for two 1/2-averaged factors; lambda far above band
    with pytest.raises(ValueError):
        composite_km(T, T, lambda n: 2.0, np.ones(1),
                     StopRule(max_iter=5))
    with pytest.raises(ValueError):
        composite_km(T, OperatorRef(lambda x: x, averaged(0.9999), 1),
                     lambda n: 1.0, np.ones(1), StopRule(max_iter=5))


# -- cyclic --------------------------------------------------------------------

def test_cyclic_limits_chain():
    b1 = SetDescriptor.box([0.0], [1.0])
    b2 = SetDescriptor.box([2.0], [3.0])
    ops = [OperatorRef(lambda x: project(b1, x), firmly_nonexpansive(), 1),
           OperatorRef(lambda x: project(b2, x), firmly_nonexpansive(), 1)]
    tr, limits = cyclic_iterate(ops, np.array([10.0]))
    assert np.allclose(limits[0], 1.0, atol=1e-8)
    assert np.allclose(limits[1], 2.0, atol=1e-8)
    # the chain relations hold exactly at the reported points
    assert np.allclose(ops[1](limits[0]), limits[1])
    assert np.allclose(ops[0](limits[1]), limits[0])


def test_cyclic_requires_strictly_averaged():
    with pytest.raises(ValueError):
        cyclic_iterate([_rotation()], np.zeros(2))


# -- block update --------------------------------------------------------------

def _target_ops():
    # averaging toward two anchors: fixed point of the averaged update
    a1, a2 = np.array([0.0, 0.0]), np.array([2.0, 2.0])
    T1 = OperatorRef(lambda x: 0.5 * (np.asarray(x, dtype=float) + a1),
                     firmly_nonexpansive(), 2)
    T2 = OperatorRef(lambda x: 0.5 * (np.asarray(x, dtype=float) + a2),
                     firmly_nonexpansive(), 2)
    return [T1, T2]


def test_block_update_matches_full_batch():
    Ts = _target_ops()
    T0 = OperatorRef.identity(2)
    full = block_update_iterate(T0, Ts, [0.5, 0.5], RoundRobin(2, 2),
                                np.array([9.0, -3.0]))
    alt = block_update_iterate(T0, Ts, [0.5, 0.5], RoundRobin(2, 1),
                               np.array([9.0, -3.0]))
    assert full.status == CONVERGED and alt.status == CONVERGED
    assert np.allclose(full.x, alt.x, atol=1e-6)
    assert np.allclose(full.x, [1.0, 1.0], atol=1e-7)


def test_block_update_coverage_violation():
    class Stuck:
        m = 2
        window = 2

        def next(self, rng):
            return [0]

    tr = block_update_iterate(OperatorRef.identity(2), _target_ops(),
                              [0.5, 0.5], Stuck(), np.zeros(2))
    assert tr.status == PRECONDITION_VIOLATED


def test_block_update_weight_validation():
    with pytest.raises(ValueError):
        block_update_iterate(OperatorRef.identity(2), _target_ops(),
                             [0.7, 0.7], RoundRobin(2, 2), np.zeros(2))


# -- schedules ----------------------------------------------------------------

def test_round_robin_covers():
    s = RoundRobin(3, 1)
    seen = set()
    for _ in range(s.window):
        seen.update(s.next(None))
    assert seen == {0, 1, 2}


def test_random_subset_forced_coverage():
    s = RandomSubset(3, [0.05, 0.05, 0.05], window=4)
    rng = Rng(0)
    hist = [set(s.next(rng)) for _ in range(100)]
    for start in range(len(hist) - 4):
        assert set().union(*hist[start:start + 4]) == {0, 1, 2}


def test_random_subset_validation():
    with pytest.raises(ValueError):
        RandomSubset(2, [0.0, 1.0], window=2)
    with pytest.raises(ValueError):
        RandomSubset(2, [0.5], window=2)


# -- stochastic and randomized -------------------------------------------------

def test_stochastic_km_with_summable_errors():
    T = _rotation()
    err = lambda n, gen: gen.normal(size=2) / (n + 1.0) ** 2
    tr = stochastic_km(T, Constant(0.5), err, np.array([3.0, 4.0]), rng=7)
    assert tr.metadata['summability_declared'] is True
    assert np.linalg.norm(tr.x) < 1e-4
    tr2 = stochastic_km(T, Constant(0.5), err, np.array([3.0, 4.0]), rng=7,
                        declared_summable=False)
    assert tr2.metadata['undeclared_summability'] is True


def test_stochastic_km_reproducible():
    T = _rotation()
    err = lambda n, gen: gen.normal(size=2) / (n + 1.0) ** 2
    a = stochastic_km(T, Constant(0.5), err, np.array([3.0, 4.0]), rng=7)
    b = stochastic_km(T, Constant(0.5), err, np.array([3.0, 4.0]), rng=7)
    assert a.to_csv() == b.to_csv()


def test_random_block_km_converges_and_bands():
    T = OperatorRef(
        lambda xs: [0.5 * xs[0] + 0.5, 0.5 * xs[1] - 0.5],
        averaged(0.5), None)
    tr = random_block_km(T, Constant(1.0), [0.8, 0.6],
                         [np.zeros(1), np.zeros(1)], rng=3)
    assert tr.status == CONVERGED
    assert np.allclose(tr.x[0], 1.0, atol=1e-7)
    assert np.allclose(tr.x[1], -1.0, atol=1e-7)
    with pytest.raises(ValueError):
        random_block_km(T, Constant(1.9999), [0.8, 0.6],
                        [np.zeros(1), np.zeros(1)], rng=3,
                        stop=StopRule(max_iter=3))
    with pytest.raises(ValueError):
        random_block_km(T, Constant(1.0), [0.0, 0.6],
                        [np.zeros(1), np.zeros(1)], rng=3)


# -- hybrid steepest descent ---------------------------------------------------

def test_hybrid_steepest_descent_selects_minimizer():
    # Fix T = [0,1]^2 box; minimize ||x - (2, 0.3)||^2/2 over it
    box = SetDescriptor.box([0.0, 0.0], [1.0, 1.0])
    T = OperatorRef(lambda x: project(box, x), firmly_nonexpansive(), 2)
    c = np.array([2.0, 0.3])
    tr = hybrid_steepest_descent(T, lambda x: x - c, ('builtin', 1.0),
                                 np.array([5.0, 5.0]),
                                 StopRule(max_iter=200000,
                                          residual_tol=1e-12))
    assert np.allclose(tr.x, [1.0, 0.3], atol=1e-4)


def test_hybrid_steepest_descent_validation():
    T = OperatorRef.identity(1)
    with pytest.raises(ValueError):
        hybrid_steepest_descent(T, lambda x: x, ('builtin', 2.0),
                                np.zeros(1))
    with pytest.raises(ValueError):
        hybrid_steepest_descent(T, lambda x: x, 'nope', np.zeros(1))
    with pytest.raises(ValueError):
        hybrid_steepest_descent(T, lambda x: x, lambda n: 2.0, np.zeros(1),
                                StopRule(max_iter=2))
