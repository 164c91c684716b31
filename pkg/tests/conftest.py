import pytest

from crtspill.simulate import toy_a


@pytest.fixture
def toy():
    return toy_a()
