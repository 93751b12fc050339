"""Shared builders for synthetic toss datasets used across the test suite."""

from __future__ import annotations

import numpy as np

from cafim import BlockState, ContactParams, MassProps, World, rollout
from cafim._quat import exp_map

HALF = 0.05
CUBE = ContactParams.cuboid((HALF, HALF, HALF), mu=0.3)
WORLD = World(MassProps.cuboid(0.37, (HALF, HALF, HALF)))
DT = 0.005


def random_quaternion(rng) -> np.ndarray:
    return exp_map(rng.normal(0.0, 0.6, 3))


def contact_rich_toss(rng, params=CUBE, world=WORLD, steps=140, traj_id="rich"):
    """A low tumbling toss that lands and settles within the horizon."""
    x0 = BlockState(
        position=[rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.15, 0.3)],
        orientation=random_quaternion(rng),
        linear_velocity=[rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-1.0, 0.0)],
        angular_velocity=rng.uniform(-5.0, 5.0, 3),
    )
    return rollout(x0, params, DT, steps, world, traj_id=traj_id)


def free_flight_toss(rng, params=CUBE, world=WORLD, steps=50, traj_id="flight"):
    """An upward toss that never approaches the ground within the horizon."""
    x0 = BlockState(
        position=[rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.5, 0.7)],
        orientation=random_quaternion(rng),
        linear_velocity=[rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(1.5, 2.5)],
        angular_velocity=rng.uniform(-4.0, 4.0, 3),
    )
    traj = rollout(x0, params, DT, steps, world, traj_id=traj_id)
    assert min(s.position[2] for s in traj.states) > 0.3, "flight toss unexpectedly low"
    return traj


def mixed_dataset(seed: int, n_rich: int, n_flight: int, params=CUBE, world=WORLD):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_rich):
        out.append(contact_rich_toss(rng, params, world, traj_id=f"rich_{i:03d}"))
    for i in range(n_flight):
        out.append(free_flight_toss(rng, params, world, traj_id=f"flight_{i:03d}"))
    return out


def perturbed_params(rng, params=CUBE, vertex_scale=0.01, mu_shift=0.05) -> ContactParams:
    theta = params.flatten()
    theta[:-1] = theta[:-1] + rng.normal(0.0, vertex_scale, 24)
    theta[-1] = max(0.0, theta[-1] + mu_shift)
    return ContactParams.from_flat(theta)
