import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trapping.errors import DomainError, RangeError
from trapping.increments import BinaryFamily, ThreeAtomFamily
from trapping.rate import (
    biglambda_at,
    build_profile,
    check_supermartingale,
    lambda_root,
    load_profile,
    save_profile,
    search_supermartingale_x,
    supermartingale_ratio,
    tilt_kernel,
    z_value,
)

BIN = BinaryFamily(0.5)
TRI = ThreeAtomFamily(0.5, 0.2)
C_EXACT = 1.5 * math.log(3) - 2 * math.log(2)


def _antiderivative(u):
    # integral of log((3 - 2u) / (1 + 2u))
    a, b = 3 - 2 * u, 1 + 2 * u
    return -(a * math.log(a) - a) / 2 - (b * math.log(b) - b) / 2


def big_lambda_exact(w):
    return _antiderivative(0.5) - _antiderivative(w)


@pytest.fixture(scope="module")
def profile():
    return build_profile(BIN, 512)


@pytest.fixture(scope="module")
def tri_profile():
    return build_profile(TRI, 256)


def bisection_oracle(fam, w, tol=1e-13):
    lo, hi = 1e-12, 1.0
    while z_value(fam, w, hi) <= 1:
        hi *= 2
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if z_value(fam, w, mid) < 1:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def test_z_value_examples():
    assert z_value(BIN, 0.25, 0.0) == 1.0
    assert z_value(BIN, 0.25, math.log(5 / 3)) == pytest.approx(1.0, abs=1e-12)
    assert z_value(BIN, 0.25, 2 * math.log(5 / 3)) > 1


def test_z_value_guards():
    with pytest.raises(DomainError):
        z_value(BIN, 0.0, 1.0)
    with pytest.raises(RangeError):
        z_value(BIN, 0.25, 701.0)


@pytest.mark.parametrize("w, expected", [(0.0, math.log(3)), (0.49, math.log(0.505 / 0.495))])
def test_lambda_root_closed_form(w, expected):
    assert lambda_root(BIN, w) == pytest.approx(expected, abs=1e-10)


def test_lambda_root_three_atom_matches_bisection():
    assert lambda_root(TRI, 0.25) == pytest.approx(bisection_oracle(TRI, 0.25), abs=1e-9)


def test_lambda_root_domain():
    with pytest.raises(DomainError):
        lambda_root(BIN, 0.5)
    with pytest.raises(DomainError):
        lambda_root(BIN, 0.7)


@given(st.floats(1e-3, 0.499), st.floats(0.05, 0.95))
def test_lambda_root_property(w, kappa):
    fam = BinaryFamily(kappa)
    p = fam.p_up(w)
    lam = lambda_root(fam, w)
    assert lam == pytest.approx(math.log(p / (1 - p)), abs=1e-9)
    assert abs(z_value(fam, w, lam) - 1) <= 1e-9


def test_profile_constant(profile):
    assert abs(profile.C - C_EXACT) < 1e-6
    assert profile.biglambda(0.5) == 0.0
    assert biglambda_at(profile, 0.0) == profile.C
    assert biglambda_at(profile, 0.5) == 0.0


def test_profile_grid_doubling():
    assert abs(build_profile(BIN, 256).C - build_profile(BIN, 512).C) <= 1e-8


def test_profile_invariants(profile):
    interior = (profile.grid > 0) & (profile.grid < 0.5)
    assert np.all(profile.lam[interior] > 0)
    assert profile.lam[-1] == 0.0
    assert np.all(np.diff(profile.biglam) <= 0)
    for w, lam in zip(profile.grid[1:-1], profile.lam[1:-1]):
        assert abs(z_value(BIN, w, lam) - 1) <= profile.tol


def test_biglambda_partial_integral(profile):
    assert biglambda_at(profile, 0.25) == pytest.approx(big_lambda_exact(0.25), abs=1e-6)
    with pytest.raises(DomainError):
        biglambda_at(profile, 0.6)


PROFILE_512 = build_profile(BIN, 512)
PROFILE_128 = build_profile(BIN, 128)


@given(st.floats(0.0, 0.5))
def test_biglambda_interpolation_close(w):
    assert abs(biglambda_at(PROFILE_512, w) - big_lambda_exact(w)) < 1e-8


def test_reflection_continuous(profile):
    assert profile.reflected(0.5) == 0.0
    assert profile.reflected(0.5 + 1e-9) == pytest.approx(0.0, abs=1e-9)
    assert profile.reflected(0.8) == pytest.approx(profile.reflected(0.2), abs=1e-12)


def test_convexity_and_derivative(profile, tri_profile):
    for fam, prof in ((BIN, profile), (TRI, tri_profile)):
        for w, lam in zip(prof.grid[1:-1:16], prof.lam[1:-1:16]):
            zs = np.array([z_value(fam, w, v) for v in np.linspace(0, 2 * lam, 21)])
            assert np.all(np.diff(zs, 2) >= -1e-9)
            assert (z_value(fam, w, 1e-6) - 1) / 1e-6 < 0


def test_tilt_identity(profile):
    k = tilt_kernel(BIN, profile, 0.3, -1.0, 0.05)
    assert k.atoms == BIN.atoms(0.3)
    assert k.log_lr == (0.0, 0.0)


def test_tilt_reverses_drift(profile):
    k = tilt_kernel(BIN, profile, 0.25, 0.2, 0.05)
    assert abs(sum(k.atoms.probs) - 1) <= 1e-12
    assert k.mean() <= 0
    assert k.atoms.offsets == BIN.offsets


@given(st.floats(0.06, 0.94), st.floats(0.0, 2.0))
def test_tilt_normalized_and_lr_consistent(w, delta):
    k = tilt_kernel(BIN, PROFILE_128, w, delta, 0.05)
    assert abs(sum(k.atoms.probs) - 1) <= 1e-12
    base = BIN.atoms(w).probs
    for p, q, lr in zip(base, k.atoms.probs, k.log_lr):
        assert math.log(p / q) == pytest.approx(lr, abs=1e-9)


def test_supermartingale_away_from_center(profile):
    rep = check_supermartingale(BIN, profile, 1 / 40, 0.2, np.linspace(0.025, 0.2, 50))
    assert rep.holds


def test_supermartingale_fails_at_center(profile):
    # every step from 1/2 raises Lambda, so the ratio exceeds 1 for any x
    for x in (1 / 40, 1 / 400):
        assert supermartingale_ratio(BIN, profile, 0.5, x, 0.2) > 1


def test_search_supermartingale(profile):
    x = search_supermartingale_x(BIN, profile, 0.2, 0.0, 0.3)
    assert x is not None
    assert check_supermartingale(BIN, profile, x, 0.2, np.linspace(x, 0.3, 201)).holds
    assert search_supermartingale_x(BIN, profile, 0.2, 0.0, 0.5, k_max=10) is None


def test_profile_round_trip(tmp_path, profile):
    save_profile(profile, tmp_path, "p")
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert header == "w,lambda,biglambda"
    back = load_profile(tmp_path, "p")
    assert back.C == profile.C
    np.testing.assert_array_equal(back.lam, profile.lam)
