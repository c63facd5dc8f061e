import pytest


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile the jitted kernels once so timings stay honest
    from allelopathy import engine
    engine.warmup()
