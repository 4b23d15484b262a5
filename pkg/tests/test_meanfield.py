import json
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trapping.errors import DomainError, SizeError
from trapping.meanfield import (
    bj_coefficients,
    closed_form_eigenvalues,
    drift,
    edge_distance,
    jacobian,
    left_eigenvectors,
    linearization_excess,
    lyapunov_certificate,
    mc_drift,
    mean_field_matrix,
    recheck_certificate,
    reduced_matrix,
    spectrum,
    spectrum_scan,
    write_json,
    write_spectrum_csv,
)
from trapping.network import NetworkState, init_state
from trapping.seeding import replica_rng


def perturbed(N, eps, rule="pairwise", x=0.05):
    st_ = init_state(N, x, "stationary", rule=rule)
    W = st_.weights.copy()
    W[0, 1] += eps * W[0, 1]
    W[1, 0] = W[0, 1]
    return NetworkState(N, x, 0, W, rule)


# -- drift -----------------------------------------------------------------


@pytest.mark.parametrize("N", [4, 5, 6, 7, 8, 9, 10])
@pytest.mark.parametrize("rule", ["triad", "pairwise"])
def test_symmetric_point_is_fixed(N, rule):
    d = drift(init_state(N, 0.05, "stationary", rule=rule))
    assert np.max(np.abs(d.value)) <= 1e-12
    assert np.max(np.abs(d.reinforcement - 6 / (N - 1))) <= 1e-12


def test_drift_size_limit():
    with pytest.raises(SizeError, match="mc_drift"):
        drift(init_state(11, 0.1))


@given(st.integers(4, 8), st.integers(0, 2**32 - 1), st.booleans())
def test_drift_conserves_simplex(N, seed, decay_after_add):
    rng = np.random.default_rng(seed)
    W = np.triu(rng.uniform(0.05, 3.0, (N, N)), 1)
    W = W + W.T
    d = drift(NetworkState(N, 0.1, 0, W, "triad", decay_after_add))
    assert abs(d.value.sum()) <= 1e-12
    assert d.reinforcement.sum() == pytest.approx(3 * N, abs=1e-12)


def test_stationary_displacement_is_x_times_field():
    s = perturbed(6, 0.05)
    s = NetworkState(6, s.x, 0, s.weights * (3 * 6 / s.x) / s.total, s.rule)
    d = drift(s)
    np.testing.assert_allclose(d.value, s.x * d.mean_field, atol=1e-14)


# -- linearization ---------------------------------------------------------


def test_bj_values():
    assert bj_coefficients(5) == pytest.approx((0.4, 0.0, -1 / 15))
    assert bj_coefficients(3) == pytest.approx((2 / 9, 0.0, -2 / 9))
    assert all(bj_coefficients(n)[1] == 0.0 for n in range(3, 50))
    with pytest.raises(DomainError):
        bj_coefficients(2)


def test_linearization_pattern_pairwise():
    eps = 0.01
    a = linearization_excess(6, eps)
    b = linearization_excess(6, eps / 2)
    assert abs(a.excess[1]) <= 1e-12
    for j in (0, 2):
        assert a.residual(j) <= 10 * eps**2
        assert a.spread[j] <= 1e-12
        assert b.residual(j) <= a.residual(j) / 4 * 1.05


def test_distance_one_excess_under_triad_rule():
    # the three-factor rule couples edges that share a vertex
    c = linearization_excess(6, 0.01, rule="triad")
    assert c.excess[1] > 1e-4


def test_jacobian_matches_closed_form_matrix():
    for N in (5, 6, 7):
        np.testing.assert_allclose(jacobian(N), mean_field_matrix(N), atol=1e-8)


def test_edge_distances():
    d = edge_distance(6, 0)
    assert (d == 0).sum() == 1 and (d == 1).sum() == 8 and (d == 2).sum() == comb(4, 2)


# -- spectrum --------------------------------------------------------------


def test_reduced_matrix_left_vectors():
    for n in range(4, 41):
        A = reduced_matrix(n)
        for vec, ev in zip(left_eigenvectors(n), closed_form_eigenvalues(n)):
            np.testing.assert_allclose(vec @ A, ev * vec, atol=1e-12 * max(1, np.abs(vec).max()))


def test_spectrum_examples():
    s5 = spectrum(5)
    assert s5.eigenvalues == pytest.approx((0, 0.6, 1 / 3), abs=1e-12)
    assert s5.attracting
    assert spectrum(4).eigenvalues == pytest.approx((0, 5 / 9, 2 / 9), abs=1e-12)
    with pytest.raises(DomainError):
        reduced_matrix(3)


def test_full_matrix_spectrum_agrees():
    for N in (5, 6, 7, 8):
        n = N - 1
        ev = np.sort(np.linalg.eigvalsh(mean_field_matrix(N)))
        distinct = np.unique(np.round(ev, 10))
        assert np.allclose(sorted(distinct), sorted(closed_form_eigenvalues(n)), atol=1e-9)


def test_attracting_scan(tmp_path):
    rows = spectrum_scan(range(4, 10_001))
    assert all(r[3] for r in rows)
    assert abs(rows[-1][1] - 2 / 3) < 1e-3 and abs(rows[-1][2] - 2 / 3) < 1e-3
    write_spectrum_csv(tmp_path / "s.csv", rows[:3])
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,lambda2,lambda3,attracting"


@given(st.integers(4, 400))
def test_spectrum_consistency(n):
    s = spectrum(n)
    assert s.attracting and s.B2 < 0 <= s.B0


# -- Monte Carlo drift -----------------------------------------------------


def test_mc_drift_at_center():
    d = mc_drift(init_state(6, 0.05, "stationary", rule="pairwise"), 10**6, replica_rng(1, 0))
    assert np.all(np.abs(d.value) <= 4 * d.value_se)


def test_mc_drift_perturbed_matches_exact():
    eps = 0.01
    s = perturbed(6, eps)
    d = mc_drift(s, 10**6, replica_rng(1, 1))
    exact = drift(s)
    dist = edge_distance(6, 0)
    ex = d.reinforcement - 6 / 5
    assert np.all(np.abs(ex[dist == 1]) <= 4 * d.reinforcement_se[dist == 1])
    far = dist == 2
    assert np.all(exact.reinforcement[far] - 6 / 5 < 0)
    assert np.all(np.abs(d.reinforcement[far] - exact.reinforcement[far]) <= 4 * d.reinforcement_se[far])
    assert abs(exact.reinforcement[far][0] - 6 / 5 - 6 / 5 * bj_coefficients(5)[2] * eps) < 10 * eps**2


def test_mc_drift_needs_replicates():
    with pytest.raises(DomainError):
        mc_drift(init_state(6, 0.1), 10, replica_rng(1, 0))


# -- certificate -----------------------------------------------------------


def test_certificate_noise_dominated_fails():
    cert = lyapunov_certificate(5, 0.05, 0.02, 40)
    assert not cert.verified and cert.lam is None
    assert cert.worst["check"] == "mean" and cert.worst["margin"] < 0
    # at the center the one-step mean of V drops by x^2 tr(Q Cov)
    assert cert.center_check["v_margin"] < 0


def test_certificate_small_step_verifies():
    cert = lyapunov_certificate(4, 0.001, 0.1, 40)
    assert cert.verified and cert.lam > 0
    assert cert.gamma == pytest.approx(cert.lam * cert.V0 / 4)
    assert cert.V(cert.center) == cert.V0 > 0
    assert all(cert.V(a) < 0 for a in cert.grid)
    assert recheck_certificate(cert)


def test_certificate_n6_exact_joint_law():
    cert = lyapunov_certificate(5, 0.001, 0.1, 12)
    assert cert.verified and cert.exp_method == "exact"
    assert cert.center_check["exp_margin"] > 0  # the center sits below its own mean by Jensen


def test_certificate_guards(tmp_path):
    with pytest.raises(SizeError):
        lyapunov_certificate(8, 0.01, 0.1, 10)
    with pytest.raises(DomainError):
        lyapunov_certificate(5, 0.2, 0.1, 10)
    with pytest.raises(DomainError):
        lyapunov_certificate(5, 0.01, 5.0, 10)
    with pytest.raises(DomainError, match="not attracting"):
        lyapunov_certificate(5, 0.01, 0.1, 10, rule="triad")
    cert = lyapunov_certificate(3, 0.001, 0.1, 10)
    write_json(tmp_path / "c.json", cert.to_dict())
    assert json.loads((tmp_path / "c.json").read_text())["verified"] is True
