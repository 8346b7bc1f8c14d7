"""Shared fixtures: bundles, bump systems and normal charts are expensive,
so they are built once per session with fixed seeds."""

import numpy as np
import pytest

from sectionlab.fixtures import make_bumps, make_fixture
from sectionlab.sections import Section, build_normal_chart


def base_curve(x):
    return 0.65 * np.exp(0.15j * np.sin(x))


@pytest.fixture(scope="session")
def twisted():
    return make_fixture("twisted-p1", 16)


@pytest.fixture(scope="session")
def product():
    return make_fixture("product-p1", 16)


@pytest.fixture(scope="session")
def twisted_bumps(twisted):
    return make_bumps(twisted, rng=np.random.default_rng(100))


@pytest.fixture(scope="session")
def product_bumps(product):
    return make_bumps(product, rng=np.random.default_rng(101))


@pytest.fixture(scope="session")
def open_disc():
    return make_fixture("open-disc", 16)


@pytest.fixture(scope="session")
def open_weights(open_disc):
    return make_bumps(open_disc)  # unit weights, test-only


@pytest.fixture(scope="session")
def twisted_section(twisted):
    return Section.from_chart_path(twisted.atlas, "c1", base_curve)


@pytest.fixture(scope="session")
def twisted_chart(twisted_section, twisted_bumps):
    return build_normal_chart(twisted_section, twisted_bumps, seed=23)


@pytest.fixture(scope="session")
def product_section(product):
    return Section.from_chart_path(product.atlas, "c1", base_curve)


@pytest.fixture(scope="session")
def product_chart(product_section, product_bumps):
    return build_normal_chart(product_section, product_bumps, seed=23)
