import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wegnerlab.lattice import (
    DomainError,
    NonRegularDomainError,
    Rectangle,
    RectangularDomain,
    classify_regularity,
    domain_from_config,
    domain_to_config,
    index_site,
    normal_form,
    rectangle_sites,
    site_index,
)


def I(a, b):
    return Rectangle.interval(a, b)


def test_rectangle_sites_examples():
    assert rectangle_sites(I(0, 1)) == [(0,), (1,)]
    assert rectangle_sites(Rectangle((0, 0), (0, 0))) == [(0, 0)]
    assert rectangle_sites(Rectangle((0, 5), (1, 6))) == [(0, 5), (0, 6), (1, 5), (1, 6)]


def test_rectangle_rejects_inverted_bounds():
    with pytest.raises(DomainError):
        Rectangle((2,), (1,))
    with pytest.raises(DomainError):
        Rectangle((0, 0), (1,))


def test_mixed_dimension_factors_rejected():
    with pytest.raises(DomainError):
        RectangularDomain.of(I(0, 1), Rectangle((0, 0), (1, 1)))


@pytest.mark.parametrize(
    "factors, regular, K",
    [
        ((I(0, 5), I(0, 5)), True, 2),
        ((I(0, 5), I(10, 15)), True, 1),
        ((I(0, 5), I(3, 8)), False, 1),
        ((I(0, 2), I(5, 6), I(0, 2)), True, 2),
    ],
)
def test_classify_regularity_examples(factors, regular, K):
    info = classify_regularity(RectangularDomain(factors))
    assert info.is_regular is regular
    assert info.K == K


def _brute_regular(factors):
    for R, S in itertools.combinations(factors, 2):
        a, b = set(rectangle_sites(R)), set(rectangle_sites(S))
        if a != b and a & b:
            return False
    return True


rect_1d = st.tuples(st.integers(-3, 3), st.integers(0, 3)).map(lambda t: I(t[0], t[0] + t[1]))
rect_2d = st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.integers(0, 2), st.integers(0, 2)).map(
    lambda t: Rectangle((t[0], t[1]), (t[0] + t[2], t[1] + t[3]))
)


@settings(max_examples=200, deadline=None)
@given(st.one_of(st.lists(rect_1d, min_size=1, max_size=4), st.lists(rect_2d, min_size=1, max_size=4)))
def test_classify_regularity_matches_brute_force(factors):
    dom = RectangularDomain(tuple(factors))
    info = classify_regularity(dom)
    assert info.is_regular == _brute_regular(factors)
    assert 1 <= info.K <= dom.N
    assert sorted(i for c in info.classes for i in c) == list(range(dom.N))
    for cls in info.classes:
        assert all(factors[i] == factors[cls[0]] for i in cls)
    assert info.K == sum(1 for R in factors if R == factors[0])


def test_site_index_examples():
    dom = RectangularDomain.of(I(0, 1), I(0, 1))
    assert site_index(dom, (0, 0)) == 0
    assert site_index(dom, (1, 1)) == 3
    assert site_index(dom, (0, 1)) == 1
    with pytest.raises(DomainError):
        site_index(dom, (2, 0))
    with pytest.raises(DomainError):
        index_site(dom, 4)


@pytest.mark.parametrize(
    "dom",
    [
        RectangularDomain.of(I(0, 99), I(0, 99)),  # |Lambda| = 10^4
        RectangularDomain.of(Rectangle((0, -1), (2, 1)), Rectangle((5, 5), (6, 7)), Rectangle((0, -1), (2, 1))),
        RectangularDomain.of(I(-3, 3), I(4, 6), I(-3, 3)),
    ],
)
def test_site_index_round_trip(dom):
    sites = list(dom.sites())
    assert len(sites) == dom.size
    assert [site_index(dom, x) for x in sites] == list(range(dom.size))
    assert all(index_site(dom, k) == x for k, x in enumerate(sites))


def test_block_coords_match_sites():
    dom = RectangularDomain.of(Rectangle((0, 0), (1, 2)), Rectangle((3, 3), (4, 3)))
    coords = dom.block_coords()
    assert coords.shape == (dom.size, 2, 2)
    assert [tuple(c.ravel()) for c in coords] == list(dom.sites())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([I(0, 2), I(5, 6), I(9, 9), I(12, 14)]), min_size=1, max_size=4), st.randoms())
def test_normal_form_groups_first_class(factors, rnd):
    rnd.shuffle(factors)
    dom = RectangularDomain(tuple(factors))
    nf, perm = normal_form(dom)
    K = classify_regularity(dom).K
    assert sorted(perm) == list(range(dom.N))
    assert all(nf.factors[k] == dom.factors[perm[k]] for k in range(dom.N))
    assert all(nf.factors[k] == nf.factors[0] for k in range(K))
    assert all(not nf.factors[0].intersects(nf.factors[k]) for k in range(K, dom.N))
    assert nf.size == dom.size


def test_normal_form_rejects_irregular():
    with pytest.raises(NonRegularDomainError):
        normal_form(RectangularDomain.of(I(0, 5), I(3, 8)))


def test_config_round_trip():
    cfg = {"d": 2, "N": 2, "factors": [[[0, 0], [1, 2]], [[4, 4], [5, 5]]]}
    dom = domain_from_config(cfg)
    assert domain_to_config(dom) == cfg
    assert domain_from_config({"factors": [[0, 5], [0, 5]]}) == RectangularDomain.of(I(0, 5), I(0, 5))
    with pytest.raises(DomainError, match="domain.N"):
        domain_from_config({"N": 3, "factors": [[[0], [1]]]})
    with pytest.raises(DomainError, match=r"domain.factors\[0\]"):
        domain_from_config({"factors": [[[0]]]})


def test_particle_sites_union():
    dom = RectangularDomain.of(I(0, 2), I(5, 6), I(0, 2))
    assert dom.particle_sites() == [(0,), (1,), (2,), (5,), (6,)]
    assert np.prod([R.size for R in dom.factors]) == dom.size == 18
