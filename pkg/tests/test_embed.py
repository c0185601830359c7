import math

import numpy as np
import pytest

import mmreach as mm
from mmreach.errors import (
    DimensionMismatchError,
    DivergenceError,
    EvalError,
    StepOrderError,
)

T1 = np.array([[1.0, 1.0], [0.0, 1.0]])


def test_reach_spec_validation():
    with pytest.raises(DimensionMismatchError):
        mm.ReachSpec(-1.0, 1e-3)
    with pytest.raises(DimensionMismatchError):
        mm.ReachSpec(1.0, 0.0)
    with pytest.raises(DimensionMismatchError):
        mm.ReachSpec(1.0, 2.0)
    with pytest.raises(DimensionMismatchError):
        mm.ReachSpec(1.0, 1e-9 / 200)
    with pytest.raises(DimensionMismatchError):
        mm.ReachSpec(1.0, 1e-3, "sideways")
    assert mm.ReachSpec(0.0, 1e-3).horizon == 0.0


def test_trajectory_validation():
    with pytest.raises(DimensionMismatchError):
        mm.Trajectory([0.0, 0.0], [[1.0], [2.0]])
    with pytest.raises(DimensionMismatchError):
        mm.Trajectory([0.0, 1.0], [[1.0]])
    with pytest.raises(DimensionMismatchError):
        mm.Trajectory([0.0, 1.0], [[1.0], [np.inf]])


def test_embedding_function_monotone_example(cubic):
    trans = mm.transform(cubic, T1)
    d = mm.monotone_decomposition(trans, mm.Box([-2, -2], [2, 2]), samples=100)
    E = mm.embedding_function(d)
    out = E([0.0, 0.0], [1.0, 1.0])
    assert np.allclose(out, [-1.0, 0.0, 2.0, 1.0])


def test_embedding_function_degenerate_disturbance():
    s = mm.SystemDef.from_strings(2, 1, ["x2 + w1", "x1 - x2"], [0.3], [0.3])
    d = mm.tight_decomposition(s)
    E = mm.embedding_function(d)
    x = [0.4, -0.2]
    out = E(x, x)
    f = s.eval_field(x, [0.3])
    assert np.allclose(out[:2], f, atol=1e-12)
    assert np.allclose(out[2:], f, atol=1e-12)


def test_embedding_function_tight_bilinear(bilinear):
    d = mm.tight_decomposition(bilinear)
    E = mm.embedding_function(d)
    out = E([1.0, 0.0], [2.0, 1.0])
    assert np.allclose(out[:2], [0.0, 2.0])


def test_integrate_scalar_decay():
    s = mm.SystemDef.from_strings(1, 1, ["-x1"], [0.0], [0.0])
    d = mm.monotone_decomposition(s, mm.Box([-3.0], [3.0]), samples=50)
    traj = mm.integrate(mm.embedding_function(d), mm.EmbeddingState([1.0], [2.0]),
                        mm.ReachSpec(1.0, 1e-3))
    assert traj.final_time == 1.0
    assert traj.final_state[0] == pytest.approx(math.exp(-1), abs=1e-6)
    assert traj.final_state[1] == pytest.approx(2 * math.exp(-1), abs=1e-6)


def test_integrate_zero_horizon(bilinear):
    d = mm.tight_decomposition(bilinear)
    a0 = mm.EmbeddingState([0.0, 0.0], [0.5, 0.5])
    traj = mm.integrate(mm.embedding_function(d), a0, mm.ReachSpec(0.0, 1e-3))
    assert len(traj.times) == 1
    assert np.allclose(traj.states[0], a0.concat())


def test_integrate_preserves_order(bilinear):
    d = mm.tight_decomposition(bilinear)
    a0 = mm.EmbeddingState([0.0, -0.25], [0.75, 0.25])
    traj = mm.integrate(mm.embedding_function(d), a0, mm.ReachSpec(1.0, 2e-3))
    lower, upper = traj.states[:, :2], traj.states[:, 2:]
    assert np.all(lower <= upper)


def test_integrate_divergence_error():
    s = mm.SystemDef.from_strings(1, 1, ["x1^2"], [0.0], [0.0])
    d = mm.tight_decomposition(s)
    with pytest.raises(DivergenceError) as err:
        mm.integrate(mm.embedding_function(d), mm.EmbeddingState([3.0], [3.0]),
                     mm.ReachSpec(1.0, 1e-3))
    assert 0.0 <= err.value.last_time < 1.0


def test_integrate_flags_order_violation():
    # deliberately broken decomposition: decreasing in the disturbance
    s = mm.SystemDef.from_strings(1, 1, ["0*x1"], [0.0], [0.1])
    d = mm.closed_form_decomposition(s, mm.parse_closed_form(s, ["0 - 5*w1"]))
    with pytest.raises(StepOrderError):
        mm.integrate(mm.embedding_function(d), mm.EmbeddingState([0.0], [0.1]),
                     mm.ReachSpec(1.0, 1e-2))


def test_forward_reach_box_monotone_equals_corner_hull(cubic):
    """For a monotone system the box is the hull of the two extreme flows."""
    trans = mm.transform(cubic, T1)
    d = mm.monotone_decomposition(trans, mm.Box([-2, -2], [2, 2]), samples=100)
    x0 = mm.Box([0.0, 0.5], [0.2, 0.8])
    spec = mm.ReachSpec(1.0, 1e-3)
    box = mm.forward_reach_box(trans, d, x0, spec)
    lo_traj = mm.simulate(trans, x0.lo, [-1.0], spec).final_state
    hi_traj = mm.simulate(trans, x0.hi, [1.0], spec).final_state
    assert np.allclose(box.lo, lo_traj, atol=1e-6)
    assert np.allclose(box.hi, hi_traj, atol=1e-6)


def test_forward_reach_box_degenerate_is_point_flow(bilinear):
    s = mm.SystemDef.from_strings(2, 1, ["x1*x2 + w1", "x1 + 1"], [0.1], [0.1])
    d = mm.tight_decomposition(s)
    spec = mm.ReachSpec(1.0, 1e-3)
    x = [0.3, -0.1]
    box = mm.forward_reach_box(s, d, mm.Box(x, x), spec)
    endpoint = mm.simulate(s, x, [0.1], spec).final_state
    assert np.allclose(box.lo, endpoint, atol=1e-9)
    assert np.allclose(box.hi, endpoint, atol=1e-9)


def test_forward_reach_box_requires_matching_system(bilinear, cubic):
    d = mm.tight_decomposition(bilinear)
    with pytest.raises(DimensionMismatchError):
        mm.forward_reach_box(cubic, d, mm.Box([0, 0], [1, 1]), mm.ReachSpec(1.0, 1e-2))


def test_backward_reach_box_scalar():
    s = mm.SystemDef.from_strings(1, 1, ["-x1"], [0.0], [0.0])
    d_neg = mm.tight_decomposition(mm.reverse_time(s))
    x0 = mm.Box([math.exp(-1)], [2 * math.exp(-1)])
    box = mm.backward_reach_box(s, d_neg, x0, mm.ReachSpec(1.0, 1e-3, "backward"))
    assert box.lo[0] == pytest.approx(1.0, abs=1e-5)
    assert box.hi[0] == pytest.approx(2.0, abs=1e-5)


def test_backward_reach_box_zero_horizon(bilinear):
    d_neg = mm.tight_decomposition(mm.reverse_time(bilinear))
    x0 = mm.Box([0.0, 0.0], [0.25, 0.25])
    box = mm.backward_reach_box(bilinear, d_neg, x0,
                                mm.ReachSpec(0.0, 1e-3, "backward"))
    assert np.allclose(box.lo, x0.lo) and np.allclose(box.hi, x0.hi)


def test_backward_reach_box_rejects_wrong_decomposition(bilinear):
    d = mm.tight_decomposition(bilinear)  # not time-reversed
    with pytest.raises(EvalError):
        mm.backward_reach_box(bilinear, d, mm.Box([0, 0], [0.25, 0.25]),
                              mm.ReachSpec(1.0, 1e-3, "backward"))


def test_embedding_flow_is_se_monotone(bilinear, rng):
    """Nested initial boxes stay nested along the embedding flow."""
    d = mm.tight_decomposition(bilinear)
    E = mm.embedding_function(d)
    spec = mm.ReachSpec(0.25, 5e-3)
    for _ in range(20):
        lo = rng.uniform(-0.5, 0.0, 2)
        hi = lo + rng.uniform(0.3, 0.8, 2)
        outer = mm.EmbeddingState(lo, hi)
        shrink_lo = rng.uniform(0.05, 0.2, 2) * (hi - lo)
        shrink_hi = rng.uniform(0.05, 0.2, 2) * (hi - lo)
        inner = mm.EmbeddingState(lo + shrink_lo, hi - shrink_hi)
        assert mm.se_leq(outer, inner)
        touter = mm.integrate(E, outer, spec)
        tinner = mm.integrate(E, inner, spec)
        for row_o, row_i in zip(touter.states, tinner.states):
            assert np.all(row_o[:2] <= row_i[:2] + 1e-7)
            assert np.all(row_i[2:] <= row_o[2:] + 1e-7)


def test_step_halving_converges(bilinear, cubic, trig):
    """Halving dt moves the final box endpoints by at most 1e-5."""
    cases = [
        (bilinear, mm.Box([0.0, -0.25], [0.75, 0.25])),
        (mm.transform(cubic, T1), mm.Box([0.0, 1.0], [0.0, 1.0])),
        (trig, mm.Box([0.5, 0.5], [1.5, 1.5])),
    ]
    for system, x0 in cases:
        d = mm.tight_decomposition(system)
        coarse = mm.forward_reach_box(system, d, x0, mm.ReachSpec(1.0, 1e-2))
        fine = mm.forward_reach_box(system, d, x0, mm.ReachSpec(1.0, 5e-3))
        assert np.max(np.abs(coarse.lo - fine.lo)) <= 1e-5
        assert np.max(np.abs(coarse.hi - fine.hi)) <= 1e-5


def test_combined_box_inside_intersection_at_all_times(cubic):
    """Piecewise-combined decompositions bound tighter than both parts."""
    trans = mm.transform(cubic, T1)
    tight = mm.tight_decomposition(trans)
    other = mm.closed_form_decomposition(
        trans, mm.parse_closed_form(trans, ["x2^3 + w1 - 0.5*(x3 - x1)", "x1"])
    )
    both = mm.combine(tight, other)
    a0 = mm.EmbeddingState([0.0, 0.5], [0.1, 0.9])
    spec = mm.ReachSpec(0.5, 2e-3)
    t_tight = mm.integrate(mm.embedding_function(tight), a0, spec)
    t_other = mm.integrate(mm.embedding_function(other), a0, spec)
    t_both = mm.integrate(mm.embedding_function(both), a0, spec)
    for rb, r1, r2 in zip(t_both.states, t_tight.states, t_other.states):
        inter_lo = np.maximum(r1[:2], r2[:2])
        inter_hi = np.minimum(r1[2:], r2[2:])
        assert np.all(rb[:2] >= inter_lo - 1e-9)
        assert np.all(rb[2:] <= inter_hi + 1e-9)


def test_trajectory_boxes_and_csv(tmp_path, bilinear):
    d = mm.tight_decomposition(bilinear)
    traj = mm.integrate(mm.embedding_function(d),
                        mm.EmbeddingState([0.0, 0.0], [0.1, 0.1]),
                        mm.ReachSpec(0.01, 1e-3))
    boxes = mm.trajectory_boxes(traj)
    assert len(boxes) == len(traj.times)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (len(traj.times), 5)
    assert np.allclose(rows[:, 0], traj.times)
    assert np.allclose(rows[:, 1:], traj.states)


def test_final_time_hits_horizon_with_remainder(bilinear):
    d = mm.tight_decomposition(bilinear)
    traj = mm.integrate(mm.embedding_function(d),
                        mm.EmbeddingState([0.0, 0.0], [0.1, 0.1]),
                        mm.ReachSpec(0.0105, 1e-3))
    assert traj.final_time == 0.0105
