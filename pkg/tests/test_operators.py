import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitfix.linalg import LinMap
from splitfix.operators import (RegularityTag, OperatorRef, SetDescriptor,
                                FunctionDescriptor, MonotoneOp, project,
                                prox, prox_conjugate, func_value,
                                soft_threshold, relax, compose, combine,
                                forward_step, lipschitz_to_averaged,
                                cocoercive_sum, three_composite, reflect,
                                residual, Constant, Explicit, SqrtBand,
                                validate_relaxation_schedule, TagDegradation,
                                set_contains, firmly_nonexpansive, averaged)


# -- regularity tags -----------------------------------------------------------

def test_tag_validation():
    with pytest.raises(ValueError):
        RegularityTag('averaged', 1.0)
    with pytest.raises(ValueError):
        RegularityTag('contraction', 1.5)
    with pytest.raises(ValueError):
        RegularityTag('cocoercive', 0.0)
    with pytest.raises(ValueError):
        RegularityTag('warped')


def test_tag_lattice():
    fne = RegularityTag('firmly_nonexpansive')
    assert fne.averaged_constant() == 0.5
    assert fne.lipschitz_constant() == 1.0
    assert fne.weaken('averaged').constant == 0.5
    assert fne.weaken('nonexpansive').kind == 'nonexpansive'
    coco = RegularityTag('cocoercive', 4.0)
    assert coco.lipschitz_constant() == 0.25
    assert coco.averaged_constant() is None
    with pytest.raises(ValueError):
        coco.weaken('nonexpansive')
    con = RegularityTag('contraction', 0.3)
    assert con.weaken('lipschitz').constant == 0.3


# -- projections ---------------------------------------------------------------

def test_project_box():
    sd = SetDescriptor.box([0.0, -1.0], [1.0, 1.0])
    assert np.allclose(project(sd, [2.0, -3.0]), [1.0, -1.0])
    assert np.allclose(project(sd, [0.5, 0.0]), [0.5, 0.0])


def test_project_halfspace_and_hyperplane():
    hs = SetDescriptor.halfspace([1.0, 1.0], 1.0)
    assert np.allclose(project(hs, [0.0, 0.0]), [0.0, 0.0])  # interior
    assert np.allclose(project(hs, [2.0, 2.0]), [0.5, 0.5])
    hp = SetDescriptor.hyperplane([1.0, 1.0], 1.0)
    assert np.allclose(project(hp, [0.0, 0.0]), [0.5, 0.5])
    assert np.allclose(project(hp, [2.0, 2.0]), [0.5, 0.5])


def test_project_ball_and_affine():
    ball = SetDescriptor.l2ball([1.0, 0.0], 2.0)
    assert np.allclose(project(ball, [1.0, 1.0]), [1.0, 1.0])
    assert np.allclose(project(ball, [5.0, 0.0]), [3.0, 0.0])
    aff = SetDescriptor.affine([[1.0, 1.0]], [2.0])
    p = project(aff, [0.0, 0.0])
    assert np.allclose(p, [1.0, 1.0])
    with pytest.raises(ValueError):
        SetDescriptor.affine([[1.0, 0.0], [1.0, 0.0]], [0.0, 1.0])


def test_singleton_and_contains():
    s = SetDescriptor.singleton([2.0, 3.0])
    assert np.allclose(project(s, [0.0, 0.0]), [2.0, 3.0])
    assert set_contains(s, [2.0, 3.0])
    assert not set_contains(s, [2.0, 3.1])


def test_empty_box_raises():
    with pytest.raises(ValueError):
        SetDescriptor.box([1.0], [0.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=2),
       st.lists(st.floats(-10, 10), min_size=2, max_size=2))
def test_projector_firmly_nonexpansive(xs, ys):
    # ||Px-Py||^2 <= <x-y, Px-Py> for the ball projector
    sd = SetDescriptor.l2ball([0.0, 0.0], 1.0)
    x, y = np.array(xs), np.array(ys)
    px, py = project(sd, x), project(sd, y)
    d = px - py
    assert float(d @ d) <= float((x - y) @ d) + 1e-10


# -- prox catalog --------------------------------------------------------------

def test_soft_threshold_tie_to_zero():
    assert soft_threshold(np.array([1.0, -1.0, 2.0]), 1.0).tolist() == \
        [0.0, 0.0, 1.0]


def test_prox_l1():
    fd = FunctionDescriptor.l1(2.0)
    out = prox(fd, 0.5, [3.0, -0.5, 1.0])
    assert np.allclose(out, [2.0, 0.0, 0.0])
    assert func_value(fd, [1.0, -2.0]) == pytest.approx(6.0)


def test_prox_sqnormhalf():
    fd = FunctionDescriptor.sqnormhalf()
    assert np.allclose(prox(fd, 3.0, [4.0, -8.0]), [1.0, -2.0])
    assert func_value(fd, [3.0, 4.0]) == pytest.approx(12.5)


def test_prox_quadraticfit():
    H = [[1.0, 0.0], [0.0, 2.0]]
    fd = FunctionDescriptor.quadraticfit(H, [1.0, 2.0])
    # (I + H^T H) p = x + H^T y with x = (1, 1): p = (1, 1)
    assert np.allclose(prox(fd, 1.0, [1.0, 1.0]), [1.0, 1.0])
    assert func_value(fd, [1.0, 1.0]) == pytest.approx(0.0)


def test_prox_neglogdet():
    fd = FunctionDescriptor.neglogdet()
    out = prox(fd, 1.0, np.diag([1.0, -1.0]))
    want = np.diag([(1 + np.sqrt(5.0)) / 2, (-1 + np.sqrt(5.0)) / 2])
    assert np.allclose(out, want)
    with pytest.raises(ValueError):
        prox(fd, 1.0, np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert func_value(fd, np.eye(2)) == pytest.approx(0.0)
    assert func_value(fd, np.diag([1.0, -1.0])) == np.inf


def test_prox_nuclear():
    fd = FunctionDescriptor.nuclear(1.0)
    out = prox(fd, 1.0, np.diag([3.0, 1.0]))
    assert np.allclose(np.sort(np.linalg.svd(out)[1]), [0.0, 2.0])
    assert func_value(fd, np.diag([3.0, 1.0])) == pytest.approx(4.0)


def test_prox_indicator_is_projection():
    sd = SetDescriptor.box([0.0], [1.0])
    fd = FunctionDescriptor.indicator(sd)
    for g in (0.1, 1.0, 50.0):
        assert np.allclose(prox(fd, g, [7.0]), [1.0])
    assert func_value(fd, [0.5]) == 0.0
    assert func_value(fd, [2.0]) == np.inf


def test_prox_separable_scalar_matches_l1():
    soft = lambda g, t: np.sign(t) * max(abs(t) - g, 0.0)
    fd = FunctionDescriptor.separable_scalar(soft, scalar_value=abs)
    x = np.array([3.0, -0.2, 1.0])
    assert np.allclose(prox(fd, 1.0, x), prox(FunctionDescriptor.l1(), 1.0, x))
    assert func_value(fd, x) == pytest.approx(4.2)


def test_prox_conjugate_l1_clips():
    # conjugate of w|.| is the indicator of the inf-ball of radius w
    fd = FunctionDescriptor.l1(1.0)
    out = prox_conjugate(fd, 1.0, np.array([3.0, -0.2]))
    assert np.allclose(out, [1.0, -0.2])
    out = prox_conjugate(fd, 7.0, np.array([3.0, -0.2]))
    assert np.allclose(out, [1.0, -0.2])


def test_prox_gamma_must_be_positive():
    with pytest.raises(ValueError):
        prox(FunctionDescriptor.l1(), 0.0, [1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=3))
def test_moreau_identity_property(xs):
    x = np.array(xs)
    for fd in (FunctionDescriptor.l1(0.7), FunctionDescriptor.sqnormhalf(),
               FunctionDescriptor.indicator(SetDescriptor.box(
                   [-1.0] * 3, [2.0] * 3))):
        lhs = prox(fd, 1.0, x) + prox_conjugate(fd, 1.0, x)
        assert np.allclose(lhs, x, atol=1e-10)


# -- monotone operators --------------------------------------------------------

def test_from_linear_resolvent():
    A = MonotoneOp.from_linear([[1.0, 0.0], [0.0, 3.0]])
    J = A.resolvent(1.0)
    assert np.allclose(J([2.0, 4.0]), [1.0, 1.0])
    assert np.allclose(A.eval([1.0, 1.0]), [1.0, 3.0])


def test_from_set_resolvent_is_projector_at_every_gamma():
    sd = SetDescriptor.box([0.0], [1.0])
    A = MonotoneOp.from_set(sd)
    for g in (0.01, 1.0, 100.0):
        assert np.allclose(A.resolvent(g)([5.0]), [1.0])


def test_zero_operator():
    Z = MonotoneOp.zero()
    assert np.allclose(Z.resolvent(2.0)([1.0, -1.0]), [1.0, -1.0])
    assert np.allclose(Z.eval([1.0, -1.0]), [0.0, 0.0])


def test_resolvent_gamma_positive():
    with pytest.raises(ValueError):
        MonotoneOp.zero().resolvent(-1.0)
    with pytest.raises(ValueError):
        MonotoneOp.from_map(lambda x: x).resolvent(1.0)


# -- calculus ------------------------------------------------------------------

def _fne_op():
    sd = SetDescriptor.l2ball([0.0, 0.0], 1.0)
    return OperatorRef(lambda x: project(sd, x), firmly_nonexpansive(), 2)


def test_compose_two_fne_is_two_thirds():
    T = compose([_fne_op(), _fne_op()])
    assert T.tag.averaged_constant() == pytest.approx(2.0 / 3.0)


def test_compose_degrades_with_warning():
    N = OperatorRef(lambda x: -np.asarray(x, dtype=float),
                    RegularityTag('nonexpansive'), 2)
    with pytest.warns(TagDegradation):
        T = compose([_fne_op(), N])
    assert T.tag.kind == 'nonexpansive'


def test_relax_constants():
    T = relax(_fne_op(), 1.5)
    assert T.tag.averaged_constant() == pytest.approx(0.75)
    T = relax(_fne_op(), 2.0)
    assert T.tag.kind == 'nonexpansive'
    with pytest.raises(ValueError):
        relax(_fne_op(), 2.5)


def test_combine_constants():
    T = combine([0.25, 0.75], [_fne_op(), _fne_op()])
    assert T.tag.kind == 'firmly_nonexpansive'
    mixed = combine([0.5, 0.5],
                    [_fne_op(), OperatorRef(lambda x: x, averaged(0.9), 2)])
    assert mixed.tag.averaged_constant() == pytest.approx(0.7)
    with pytest.raises(ValueError):
        combine([0.5, 0.4], [_fne_op(), _fne_op()])


def test_forward_step_constant():
    B = MonotoneOp.from_map(lambda x: np.asarray(x, dtype=float), beta=1.0)
    T = forward_step(B, 0.5)
    assert T.tag.averaged_constant() == pytest.approx(0.25)
    with pytest.raises(ValueError):
        forward_step(B, 2.0)


def test_lipschitz_to_averaged():
    T = OperatorRef(lambda x: 0.4 * np.asarray(x, dtype=float),
                    RegularityTag('contraction', 0.4))
    assert lipschitz_to_averaged(T).tag.averaged_constant() == \
        pytest.approx(0.7)
    bad = OperatorRef(lambda x: x, RegularityTag('lipschitz', 2.0))
    with pytest.raises(ValueError):
        lipschitz_to_averaged(bad)


def test_three_composite_constant():
    T3 = OperatorRef(lambda x: np.asarray(x, dtype=float), averaged(0.5), 2)
    T = three_composite(_fne_op(), _fne_op(), T3)
    assert T.tag.averaged_constant() == pytest.approx(1.0 / 1.5)


def test_cocoercive_sum_firmly_nonexpansive_case():
    Ls = [LinMap.scaled_identity(0.5, 2), LinMap.scaled_identity(0.5, 2)]
    Ts = [(_fne_op(), 1.0), (_fne_op(), 1.0)]
    T, beta = cocoercive_sum(Ls, Ts)
    assert T.tag.kind == 'firmly_nonexpansive'
    assert beta == pytest.approx(2.0)
    # larger factors lose firm nonexpansiveness but keep cocoercivity
    Ls2 = [LinMap.scaled_identity(2.0, 2)]
    T2, beta2 = cocoercive_sum(Ls2, [(_fne_op(), 1.0)])
    assert T2.tag.kind == 'cocoercive'
    assert beta2 == pytest.approx(0.25, rel=1e-6)


def test_reflect_and_residual():
    R = reflect(_fne_op())
    assert R.tag.kind == 'nonexpansive'
    assert np.allclose(R([0.5, 0.0]), [0.5, 0.0])
    assert residual(R, np.array([3.0, 0.0])) == pytest.approx(4.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=2),
       st.lists(st.floats(-10, 10), min_size=2, max_size=2))
def test_composition_averagedness_inequality(xs, ys):
    # ||Tx-Ty||^2 + (1-a)/a ||(Id-T)x-(Id-T)y||^2 <= ||x-y||^2
    T = compose([_fne_op(), _fne_op()])
    a = T.tag.averaged_constant()
    x, y = np.array(xs), np.array(ys)
    tx, ty = T(x), T(y)
    lhs = float(np.sum((tx - ty) ** 2)) + (1 - a) / a * float(
        np.sum(((x - tx) - (y - ty)) ** 2))
    assert lhs <= float(np.sum((x - y) ** 2)) + 1e-10


# -- schedules -----------------------------------------------------------------

def test_constant_schedule_band():
    assert validate_relaxation_schedule(0.5, Constant(1.5))
    with pytest.raises(ValueError):
        validate_relaxation_schedule(0.5, Constant(2.0))
    with pytest.raises(ValueError):
        validate_relaxation_schedule(0.5, Constant(0.0))


def test_sqrtband_schedule():
    s = SqrtBand(0.1)
    assert s.value(0, 0.5) == pytest.approx(1.9)
    assert validate_relaxation_schedule(0.5, s)


def test_explicit_schedule_heuristic():
    ok = Explicit([1.0] * 10)  # cycles its last value
    assert validate_relaxation_schedule(0.5, ok)
    tiny = Explicit([1e-6])
    with pytest.raises(ValueError):
        validate_relaxation_schedule(0.5, tiny)
    with pytest.raises(ValueError):
        validate_relaxation_schedule(0.5, Explicit([1.0, 3.0]))


# -- serialization -------------------------------------------------------------

def test_set_descriptor_json_roundtrip():
    for sd in (SetDescriptor.box([0.0], [1.0]),
               SetDescriptor.halfspace([1.0, 2.0], 3.0),
               SetDescriptor.l2ball([0.0], 2.0),
               SetDescriptor.affine([[1.0, 1.0]], [1.0])):
        back = SetDescriptor.from_json(sd.to_json())
        x = np.array([5.0] * len(project(sd, np.zeros(
            2 if sd.variant != 'box' and sd.variant != 'l2ball' else 1))))
        assert np.allclose(project(back, x), project(sd, x))
    with pytest.raises(ValueError):
        SetDescriptor.custom(lambda x: x).to_json()


def test_function_descriptor_json_roundtrip():
    for fd in (FunctionDescriptor.l1(0.5), FunctionDescriptor.sqnormhalf(),
               FunctionDescriptor.nuclear(2.0),
               FunctionDescriptor.quadraticfit([[1.0]], [1.0], 0.1),
               FunctionDescriptor.indicator(SetDescriptor.box([0.], [1.]))):
        back = FunctionDescriptor.from_json(fd.to_json())
        assert back.variant == fd.variant
    x = np.array([0.7])
    fd = FunctionDescriptor.l1(0.5)
    back = FunctionDescriptor.from_json(fd.to_json())
    assert np.allclose(prox(back, 1.0, x), prox(fd, 1.0, x))
    with pytest.raises(ValueError):
        FunctionDescriptor.zero().to_json()
