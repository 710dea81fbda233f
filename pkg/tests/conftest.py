import numpy as np
import pytest

from gaugeflat import fields as F
from gaugeflat.connections import Connection
from gaugeflat.fields import ChartDomain

TEMPLATES = ("{c}", "{c}*x{i}", "{c}*x{i}*x{j}", "{c}*x{i}^2", "{c}*sin(x{i})", "{c}*cos(x{j})")


def coef(rng, scale=0.5):
    re, im = rng.uniform(-scale, scale, 2)
    return f"({re:.4f}{im:+.4f}i)"


def random_entry(rng, n, poly_only=False):
    templates = TEMPLATES[:4] if poly_only else TEMPLATES
    terms = []
    for _ in range(rng.integers(1, 3)):
        i, j = rng.integers(1, n + 1, 2)
        terms.append(templates[rng.integers(len(templates))].format(c=coef(rng), i=i, j=j))
    return " + ".join(terms)


def random_grid(rng, n, r, s=None, poly_only=False):
    s = r if s is None else s
    return [[random_entry(rng, n, poly_only) for _ in range(s)] for _ in range(r)]


def random_connection(rng, domain, r, poly_only=False):
    n = domain.dim
    return Connection.from_strings(domain, [random_grid(rng, n, r, poly_only=poly_only) for _ in range(n)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def square():
    return ChartDomain.box(2, -1.0, 1.0)


@pytest.fixture
def interval():
    return ChartDomain.box(1, -1.0, 1.0)


@pytest.fixture
def cube():
    return ChartDomain.box(3, -1.0, 1.0)


@pytest.fixture
def vortex(square):
    """A = c (x1 dx2 - x2 dx1) with c = 0.3."""
    return Connection.from_strings(square, [[["-0.3*x2"]], [["0.3*x1"]]])


def field(grid, domain):
    return F.ExprField.parse(grid, domain)
