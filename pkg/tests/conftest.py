import numpy as np
import pytest

from streamprofiler import BurstParams, FlowKey, FusionParams, RateParams, Trace

TEST_FLOW = FlowKey("10.0.0.1", "192.168.1.5", 443)


def flow_trace(times, sizes=None, flow=TEST_FLOW) -> Trace:
    """Single-flow trace from plain lists; sizes default to 1000 B."""
    times = np.asarray(times, dtype=np.float64)
    if sizes is None:
        sizes = np.full(len(times), 1000, dtype=np.int64)
    return Trace.single_flow(times, sizes, flow)


@pytest.fixture
def rate_params() -> RateParams:
    return RateParams()


@pytest.fixture
def burst_params() -> BurstParams:
    return BurstParams()


@pytest.fixture
def fusion_params() -> FusionParams:
    return FusionParams()


def random_trace(seed: int, duration: float = 10.0, mean_rate: float = 5e5,
                 packet_size: int = 1200) -> Trace:
    """Poisson-ish packet arrivals for property tests."""
    rng = np.random.default_rng(seed)
    n = max(1, int(duration * mean_rate / packet_size))
    gaps = rng.exponential(duration / n, size=n)
    times = np.cumsum(gaps)
    times = times / times[-1] * duration
    sizes = rng.integers(100, packet_size + 1, size=n)
    return Trace.single_flow(times, sizes, TEST_FLOW)
