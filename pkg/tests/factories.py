"""
Factories for grids, kernels, training configurations and datasets
"""
import logging

import factory
import numpy as np
from factory import fuzzy

from phnn.integrate import Dataset
from phnn.spatial import ConvKernel, PeriodicGrid
from phnn.train import TrainConfig

logger = logging.getLogger("phnn")


def _kernel_weights(halfwidth: int, constraint: str, rng: np.random.Generator) -> np.ndarray:
    width = 2 * halfwidth + 1
    if constraint == "zero":
        return np.zeros(width)
    if constraint == "identity":
        weights = np.zeros(width)
        weights[halfwidth] = 1.0
        return weights
    weights = rng.normal(size=width)
    if constraint == "symmetric":
        return 0.5 * (weights + weights[::-1])
    if constraint == "skew":
        return 0.5 * (weights - weights[::-1])
    return weights


class GridFactory(factory.Factory):
    """Creates a small periodic grid"""

    class Meta:
        model = PeriodicGrid

    M = fuzzy.FuzzyChoice(choices=[8, 12, 16, 20])
    P = fuzzy.FuzzyChoice(choices=[1.0, 2.0, 2 * np.pi, 20.0])


class KernelFactory(factory.Factory):
    """Creates a random stencil that satisfies its constraint"""

    class Meta:
        model = ConvKernel

    class Params:
        halfwidth = 1
        seed = factory.Sequence(lambda n: n)

    constraint = "free"
    weights = factory.LazyAttribute(
        lambda o: _kernel_weights(o.halfwidth, o.constraint, np.random.default_rng(o.seed))
    )


class TrainConfigFactory(factory.Factory):
    """Creates a short training configuration"""

    class Meta:
        model = TrainConfig

    epochs = 3
    batch_size = 4
    learning_rate = 1e-3
    scheme = "midpoint"
    val_ics = 0
    t_val = 0.1
    log_every = 1
    seed = factory.Sequence(lambda n: n)


def _decaying_states(o) -> tuple:
    """States u(t) = exp(-rate t) u0 along n_traj trajectories"""
    rng = np.random.default_rng(o.seed)
    ids, times, states = [], [], []
    for trajectory in range(o.n_traj):
        u0 = rng.normal(size=o.grid.M)
        for step in range(o.n_steps + 1):
            t = step * o.dt
            ids.append(trajectory)
            times.append(t)
            states.append(np.exp(-o.rate * t) * u0)
    return np.array(ids), np.array(times), np.array(states)


class SyntheticDatasetFactory(factory.Factory):
    """Creates a dataset of exponentially decaying states"""

    class Meta:
        model = Dataset
        exclude = ("table",)

    class Params:
        n_traj = 2
        n_steps = 4
        rate = 1.0

    system = "kdvburgers"
    grid = factory.SubFactory(GridFactory)
    dt = 0.05
    seed = factory.Sequence(lambda n: n)
    substeps = 1
    table = factory.LazyAttribute(_decaying_states)
    trajectory_ids = factory.LazyAttribute(lambda o: o.table[0])
    times = factory.LazyAttribute(lambda o: o.table[1])
    states = factory.LazyAttribute(lambda o: o.table[2])
