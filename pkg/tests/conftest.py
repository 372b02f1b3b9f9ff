import pytest

from weylband.profile import ObservableSpec, make_profile


@pytest.fixture(scope="session")
def sphere():
    return make_profile("sphere")


@pytest.fixture(scope="session")
def perturbed():
    return make_profile("perturbed_sphere", {"c": 0.15})


@pytest.fixture(scope="session")
def cos2s():
    return ObservableSpec("cos2s")
