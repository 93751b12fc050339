import numpy as np
import pytest

from cafim import BlockState, MassProps, World, rollout, step_contact, step_free
from cafim.contact_model import kinematics
from cafim.dynamics import ContactParams, total_energy
from cafim.errors import ValidationError

from util import CUBE, DT, HALF, WORLD, contact_rich_toss


def _rest_on_ground():
    return BlockState([0, 0, HALF], [1, 0, 0, 0], [0, 0, 0], [0, 0, 0])


def test_step_free_ballistic():
    s = BlockState([0, 0, 1.0], [1, 0, 0, 0], [0, 0, 0], [0, 0, 0])
    out = step_free(s, 0.1, WORLD)
    np.testing.assert_allclose(out.linear_velocity[2], -0.981, rtol=1e-12)
    np.testing.assert_allclose(out.position[2], 1 - 0.0981, rtol=1e-12)


def test_step_free_zero_gravity():
    world = World(WORLD.mass_props, gravity=np.zeros(3))
    s = BlockState([0, 0, 1.0], [1, 0, 0, 0], [0.3, -0.2, 0.1], [1.0, 0.0, 0.0])
    out = step_free(s, 0.25, world)
    np.testing.assert_array_equal(out.linear_velocity, s.linear_velocity)
    np.testing.assert_allclose(out.position, s.position + 0.25 * s.linear_velocity, atol=1e-15)


def test_quaternion_stays_unit_under_spin():
    s = BlockState([0, 0, 5.0], [1, 0, 0, 0], [0, 0, 0], [0, 0, 11.0])
    for _ in range(100):
        s = step_free(s, 0.01, WORLD)
    assert abs(np.linalg.norm(s.orientation) - 1.0) < 1e-9


def test_step_free_rejects_non_finite():
    s = BlockState([0, 0, np.nan], [1, 0, 0, 0], [0, 0, 0], [0, 0, 0])
    with pytest.raises(ValidationError):
        step_free(s, 0.01, WORLD)
    with pytest.raises(ValidationError):
        step_free(_rest_on_ground(), -0.1, WORLD)


def test_resting_cube_static_equilibrium():
    state, impulses, converged = step_contact(_rest_on_ground(), CUBE, DT, WORLD)
    assert converged
    drift = np.linalg.norm(state.position - [0, 0, HALF])
    assert drift < 1e-6
    expected = WORLD.mass_props.mass * 9.81 * DT
    assert abs(impulses.normal.sum() - expected) < 0.02 * expected
    impulses.validate(CUBE.mu)


def test_airborne_step_matches_step_free():
    s = BlockState([0, 0, 1.0], [1, 0, 0, 0], [0.2, 0.1, -0.5], [2.0, -1.0, 0.5])
    contact_state, impulses, _ = step_contact(s, CUBE, DT, WORLD)
    free_state = step_free(s, DT, WORLD)
    np.testing.assert_array_equal(contact_state.position, free_state.position)
    np.testing.assert_array_equal(contact_state.orientation, free_state.orientation)
    assert np.all(impulses.normal == 0.0) and np.all(impulses.tangent == 0.0)


def test_sliding_point_mass_friction():
    # all vertices coincide at the CoM: exact point-mass sliding
    params = ContactParams(vertices=np.zeros((8, 3)), mu=0.3)
    s = BlockState([0, 0, 0.0], [1, 0, 0, 0], [1.0, 0, 0], [0, 0, 0])
    out, impulses, converged = step_contact(s, params, DT, WORLD)
    assert converged
    m, g = WORLD.mass_props.mass, 9.81
    # analytic: normal balances gravity, tangential saturates the cone
    assert abs(impulses.normal.sum() - m * g * DT) < 1e-8
    lt = impulses.tangent.sum(axis=0)
    assert lt[0] < 0 and abs(lt[1]) < 1e-12
    np.testing.assert_allclose(np.abs(lt[0]), 0.3 * impulses.normal.sum(), atol=1e-6)
    np.testing.assert_allclose(out.linear_velocity[0], 1.0 - 0.3 * g * DT, atol=1e-8)
    per_vertex = np.linalg.norm(impulses.tangent, axis=1)
    assert np.all(per_vertex <= 0.3 * impulses.normal + 1e-6)


def test_drop_settles_on_bottom_face():
    x0 = BlockState([0, 0, 0.5], [1, 0, 0, 0], [0, 0, 0], [0, 0, 0])
    traj = rollout(x0, CUBE, DT, 200, WORLD)
    final = traj.states[-1]
    phi = kinematics(CUBE, final).phi
    assert np.all(np.abs(phi[:4]) < 1e-3)
    assert np.linalg.norm(final.linear_velocity) < 1e-6


def test_rollout_from_rest_is_constant():
    traj = rollout(_rest_on_ground(), CUBE, DT, 50, WORLD)
    for s in traj.states:
        np.testing.assert_allclose(s.position, [0, 0, HALF], atol=1e-9)


def test_rollout_determinism():
    x0 = BlockState([0.01, 0, 0.3], [1, 0, 0, 0], [0.4, -0.2, 0], [3.0, 1.0, -2.0])
    a = rollout(x0, CUBE, DT, 120, WORLD)
    b = rollout(x0, CUBE, DT, 120, WORLD)
    for sa, sb in zip(a.states, b.states):
        np.testing.assert_array_equal(sa.as_vector(), sb.as_vector())


def test_momentum_consistency_and_cone():
    rng = np.random.default_rng(7)
    state = BlockState([0, 0, 0.12], [1, 0, 0, 0], [0.5, 0.2, -0.8], [4.0, -3.0, 2.0])
    mdiag = WORLD.mass_props.generalized_diag
    for _ in range(80):
        kin = kinematics(CUBE, state)
        new, impulses, _ = step_contact(state, CUBE, DT, WORLD)
        du = new.generalized_velocity - state.generalized_velocity
        applied = mdiag * du - DT * WORLD.generalized_gravity
        np.testing.assert_allclose(applied, impulses.generalized(kin), atol=1e-7)
        impulses.validate(CUBE.mu)
        state = new
    del rng


def test_no_sustained_penetration_after_settling():
    rng = np.random.default_rng(11)
    for _ in range(3):
        traj = contact_rich_toss(rng, steps=240)
        for s in traj.states[-20:]:
            assert kinematics(CUBE, s).phi.min() >= -1e-3


def test_energy_never_increases_beyond_gravity_work():
    rng = np.random.default_rng(13)
    for _ in range(3):
        traj = contact_rich_toss(rng, steps=200)
        energies = [total_energy(s, WORLD) for s in traj.states]
        diffs = np.diff(energies)
        assert diffs.max() < 1e-8


def test_rollout_length_validation():
    with pytest.raises(ValidationError):
        rollout(_rest_on_ground(), CUBE, DT, 1, WORLD)
