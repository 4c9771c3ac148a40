"""Synthetic pouring demonstrations for tests, examples and the CLI.

Each demonstration holds the bottle near a (varying) start pose, carries it
to a fixed cup with a lift, and then tilts it to pour. The spread across
demonstrations is large at the start and small at the cup, and the
orientation spread peaks during transport, loosely following a human
pouring skill.
"""
import numpy as np

from .preprocess import Demonstration
from .quaternion import quat_exp

START = np.array([0.40, -0.25, 0.35])
CUP = np.array([0.55, 0.10, 0.30])
POUR = np.array([-1.7, 0.0, 0.0])


def min_jerk(s):
    """Minimum-jerk blend from 0 to 1 over s in [0, 1], clamped outside."""
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def pouring_demonstration(rng, name="demo", rate=100.0, noise=1e-4):
    """Draw one pouring demonstration with a random duration and clock offset."""
    duration = rng.uniform(9.5, 12.5)
    t0 = rng.uniform(0.0, 100.0)
    n = int(duration * rate) + 1
    s = np.linspace(0.0, 1.0, n)
    jitter = rng.uniform(-0.2, 0.2, n) / (n - 1)
    jitter[[0, -1]] = 0.0
    s = s + jitter

    move_on = 0.18 + rng.normal(0.0, 0.005)
    move_len = 0.44 + rng.normal(0.0, 0.005)
    pour_on = move_on + move_len
    pour_len = 0.23 + rng.normal(0.0, 0.003)

    start = START + rng.normal(0.0, 0.03, 3)
    cup = CUP + rng.normal(0.0, 0.002, 3)
    lift = 0.08 + rng.normal(0.0, 0.01)
    move = min_jerk((s - move_on) / move_len)
    bump = np.sin(np.pi * np.clip((s - move_on) / move_len, 0.0, 1.0)) ** 2
    positions = start + np.outer(move, cup - start)
    positions[:, 2] += lift * bump
    positions += rng.normal(0.0, noise, positions.shape)

    # rotation vectors (full angle) composed additively
    r_start = rng.normal(0.0, 0.02, 3)
    r_carry = rng.normal(0.0, 0.15, 3)
    r_pour = POUR + rng.normal(0.0, 0.01, 3)
    pour = min_jerk((s - pour_on) / pour_len)
    rot = r_start + np.outer(bump, r_carry) + np.outer(pour, r_pour - r_start)
    quaternions = quat_exp(0.5 * rot)

    t = t0 + s * duration
    return Demonstration(t, positions, quaternions, name=name)


def pouring_demonstrations(n_demos=8, seed=0, **kwargs):
    """Draw ``n_demos`` independent pouring demonstrations."""
    rng = np.random.default_rng(seed)
    return [pouring_demonstration(rng, name=f"demo{i:02d}", **kwargs) for i in range(n_demos)]
