"""Shared fixtures and generators for the test suite."""

import numpy as np
import pytest

from secrl.gridworld import MissionLayout, build_grid
from secrl.spec_lang import formula as F


def event(*props):
    return frozenset(props)


def random_inner(rng, depth, variables=("pi1",), props=("a", "b"),
                 max_duration=3, max_window=4):
    """Random inner formula of exactly the requested structural depth."""
    if depth == 0:
        return F.hold(
            int(rng.integers(max_duration + 1)),
            props[int(rng.integers(len(props)))],
            variables[int(rng.integers(len(variables)))],
            negated=bool(rng.integers(2)),
        )
    kind = int(rng.integers(6))
    child = random_inner(rng, depth - 1, variables, props, max_duration, max_window)
    if kind == 0:
        return F.not_(child)
    if kind == 1:
        lo = int(rng.integers(max_window))
        hi = lo + int(rng.integers(max_window))
        return F.within(child, lo, hi)
    other_depth = int(rng.integers(depth))
    other = random_inner(rng, other_depth, variables, props, max_duration, max_window)
    if rng.integers(2):
        child, other = other, child
    op = (F.and_, F.or_, F.implies, F.concat)[kind - 2]
    return op(child, other)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)


def small_layout(**overrides):
    """A 5x5 mission with short time bounds: builds in a few seconds."""
    params = dict(
        width=5, height=5,
        initial=(0, 0),
        pickup1=(0, 2), pickup2=(2, 0),
        delivery1=(4, 4), delivery2=(4, 2),
        obstacles=[(2, 2)],
        observed=None,
        rewards=[(0, 4)],
        bounds=(3, 4, 10, 11, 18),
    )
    params.update(overrides)
    return MissionLayout(**params)


def line_layout(length=4, motion_eps=0.0, bounds=(1, 2, 4, 5, 8)):
    """A 2-row corridor: delivery1 sits `length - 1` eastward steps away."""
    return MissionLayout(
        width=length, height=2,
        initial=(0, 0),
        pickup1=(1, 0), pickup2=(1, 1),
        delivery1=(0, length - 1), delivery2=(1, length - 1),
        obstacles=[],
        observed=None,
        rewards=[],
        bounds=bounds,
        motion_eps=motion_eps,
    )


@pytest.fixture(scope="session")
def corridor():
    return build_grid(line_layout())
