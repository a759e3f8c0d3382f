import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "sitopt",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("sitopt")

from sitopt.params import derive_quantities, table_defaults  # noqa: E402


@pytest.fixture(scope="session")
def p_default():
    """Reference parameters: table values, nu_E = 0.05, F_bar anchored at 11037."""
    return table_defaults()


@pytest.fixture(scope="session")
def d_default(p_default):
    return derive_quantities(p_default)
