from datetime import date, timedelta

import numpy as np
import pytest

from ddqn_trader.market_data import FeatureFrame, ModelId


def weekdays(start: date, count: int) -> tuple[date, ...]:
    out = []
    d = start
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def make_frame(target_returns, values=None, model=ModelId.M0, start=date(2020, 1, 6)):
    """Hand-rolled feature frame for environment and agent tests."""
    targets = np.asarray(target_returns, dtype=np.float64)
    n = len(targets)
    k = ModelId(model).n_features
    if values is None:
        values = np.random.default_rng(0).normal(scale=0.05, size=(n, k))
    columns = tuple((f"a{i}", h) for i in range(k // 2) for h in (1, 5))
    return FeatureFrame(ModelId(model), weekdays(start, n), columns, np.asarray(values), targets)


@pytest.fixture
def frame300():
    rng = np.random.default_rng(7)
    return make_frame(rng.normal(scale=0.01, size=300))


@pytest.fixture
def frame10():
    # distinct, hand-pickable returns
    targets = np.array([0.0, 0.01, -0.02, 0.03, 0.005, -0.011, 0.002, -0.004, 0.02, -0.01])
    return make_frame(targets)
