import math

import numpy as np
import pytest

from rwidth.rwp import (
    RwpCertificate,
    Verdict,
    certify,
    certify_alpha_lower,
    estimate_alpha_upper,
    l1_cmsv,
    net_lower_bound,
    net_pitch,
    project_to_cone_sphere,
    rwp_violation_witness,
    tau,
)
from rwidth.solvers import SensingMatrix

DIAG = np.diag([1.0, 0.5])


def cone_samples(rng, n, rho, count):
    """Rejection sampling of unit vectors with rho ||x||_1 <= ||x||_2."""
    out = []
    while len(out) < count:
        X = rng.standard_normal((4 * count, n))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        keep = rho * np.abs(X).sum(axis=1) <= 1.0
        out.extend(X[keep])
    return np.array(out[:count])


class TestNet:
    def test_pitch_covers(self):
        for n in (2, 3, 4, 5):
            for delta in (0.3, 0.1, 0.02):
                h, per_axis = net_pitch(n, delta)
                assert h / 2 * math.sqrt(n - 1) <= delta + 1e-15
                assert h * (per_axis - 1) == pytest.approx(2.0)

    def test_covering_radius_empirical(self):
        # every random unit vector must be within delta of some net point
        from rwidth.rwp import _face_chunks

        rng = np.random.default_rng(0)
        n, delta = 3, 0.1
        _, per_axis = net_pitch(n, delta)
        net = np.vstack(list(_face_chunks(n, per_axis)))
        net = np.vstack([net, -net])
        U = rng.standard_normal((2000, n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        d = np.min(np.linalg.norm(U[:, None, :] - net[None, :, :], axis=2), axis=1)
        assert d.max() <= delta

    def test_identity(self):
        v = certify_alpha_lower(np.eye(2), 1.0, 0.05)
        assert 0.95 <= v <= 1.0

    def test_diag(self):
        v = certify_alpha_lower(DIAG, 1.0, 0.01)
        assert 0.49 <= v <= 0.5

    def test_zero_column(self):
        P = np.array([[1.0, 0.0], [0.5, 0.0]])
        vals = [certify_alpha_lower(P, 1.0, d) for d in (0.1, 0.05, 0.01)]
        assert vals[-1] == 0.0
        assert all(v <= 1e-12 for v in vals)

    def test_refuses_large_n(self):
        with pytest.raises(ValueError):
            certify_alpha_lower(np.eye(6), 0.5, 0.1)

    def test_vacuous_cone(self):
        res = net_lower_bound(np.eye(3), 1.5, 0.05)
        assert res.vacuous and res.alpha_lower == 0.0
        cert = certify(np.eye(3), 1.5, 0.05)
        assert cert.vacuous and cert.alpha_lower == 0.0 and math.isinf(cert.alpha_upper)

    @pytest.mark.parametrize("rho", [0.55, 0.7, 0.9])
    def test_soundness(self, rho):
        rng = np.random.default_rng(int(rho * 100))
        for _ in range(3):
            P = rng.standard_normal((2, 3))
            lb = certify_alpha_lower(P, rho, 0.05)
            X = cone_samples(rng, 3, rho, 10_000)
            gains = np.linalg.norm(X @ P.T, axis=1)
            assert np.all(gains >= lb - 1e-10)

    def test_monotone_in_rho(self):
        rng = np.random.default_rng(3)
        P = rng.standard_normal((3, 3))
        rhos = np.linspace(0.3, 1.0, 8)
        vals = [certify_alpha_lower(P, r, 0.05) for r in rhos]
        # smaller rho means a larger cone and a smaller infimum
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_refinement(self):
        rng = np.random.default_rng(4)
        for _ in range(3):
            P = rng.standard_normal((3, 3))
            smax = SensingMatrix(P).spectral_norm
            for rho in (0.6, 0.9):
                for delta in (0.2, 0.1, 0.05):
                    coarse = certify_alpha_lower(P, rho, delta)
                    fine = certify_alpha_lower(P, rho, delta / 2)
                    assert fine >= coarse - smax * delta


class TestUpper:
    def test_identity(self):
        assert estimate_alpha_upper(np.eye(3), 0.5) == pytest.approx(1.0)

    def test_diag_witness(self):
        val, x = estimate_alpha_upper(DIAG, 1.0, return_witness=True)
        assert val == pytest.approx(0.5)
        assert np.abs(x).sum() <= 1.0 + 1e-15

    def test_ordering(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            P = rng.standard_normal((3, 4))
            for rho in (0.3, 0.6, 1.0):
                assert estimate_alpha_upper(P, rho, seed=1) >= certify_alpha_lower(P, rho, 0.05)

    def test_rejects_zero_restarts(self):
        with pytest.raises(ValueError):
            estimate_alpha_upper(np.eye(2), 0.5, restarts=0)

    def test_projection_feasible(self):
        rng = np.random.default_rng(6)
        for _ in range(500):
            n = int(rng.integers(1, 12))
            rho = float(rng.uniform(1 / math.sqrt(n) * 0.9, 1.0))
            x = project_to_cone_sphere(rng.standard_normal(n), rho)
            assert x is not None
            assert abs(np.linalg.norm(x) - 1) <= 1e-12
            assert rho * np.abs(x).sum() <= 1 + 1e-15

    def test_projection_ties(self):
        x = project_to_cone_sphere(np.array([1.0, 1.0, 0.1]), 1.0)
        np.testing.assert_allclose(np.abs(x), [1, 0, 0])


class TestCmsv:
    def test_identity(self):
        for k in (1, 2, 3):
            est = l1_cmsv(np.eye(3), k, "net" if k > 1 else "exact_k1", delta=0.05)
            assert est.r_upper == pytest.approx(1.0)
            assert est.r_lower >= 1 - 0.05 - 1e-12

    def test_exact_k1(self):
        est = l1_cmsv(DIAG, 1, "exact_k1")
        assert est.r_lower == est.r_upper == 0.5

    def test_null_vector_in_s2(self):
        est = l1_cmsv(np.array([[1.0, 1.0]]), 2, "heuristic")
        assert est.r_upper == pytest.approx(0.0, abs=1e-12)
        w = np.array([1.0, -1.0]) / math.sqrt(2)
        assert np.abs(w).sum() <= math.sqrt(2) * np.linalg.norm(w) + 1e-15

    def test_mode_mismatch(self):
        with pytest.raises(ValueError):
            l1_cmsv(np.eye(3), 2, "exact_k1")
        with pytest.raises(ValueError):
            l1_cmsv(np.eye(3), 4, "net")

    def test_exact_vs_net(self):
        rng = np.random.default_rng(7)
        delta = 0.02
        for n in (2, 3, 4):
            P = rng.standard_normal((3, n))
            exact = l1_cmsv(P, 1, "exact_k1").r_lower
            net = l1_cmsv(P, 1, "net", delta=delta).r_lower
            smax = SensingMatrix(P).spectral_norm
            assert net <= exact + 1e-12
            # relaxed cone points lie within about (1 + sqrt(n)) delta of a basis vector
            assert exact - net <= smax * delta * (2 + math.sqrt(n))


class TestTau:
    @staticmethod
    def grid_oracle(P, steps=20001):
        t = np.linspace(0, 2 * np.pi, steps)
        c, s = np.cos(t), np.sin(t)
        X = np.stack([c, s], axis=1) / (np.abs(c) + np.abs(s))[:, None]
        return np.max(np.linalg.norm(X @ P.T, axis=1))

    def test_identity(self):
        assert tau(np.eye(4)) == 1.0

    @pytest.mark.parametrize("P, expected", [
        (np.array([[3.0, 0.0], [4.0, 1.0]]), 5.0),
        (np.diag([1.0, 2.0]), 2.0),
    ])
    def test_against_grid(self, P, expected):
        assert self.grid_oracle(P) == pytest.approx(expected, rel=1e-9)
        assert tau(P) == expected


class TestWitness:
    def test_identity_consistent(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            x = rng.standard_normal(4)
            assert rwp_violation_witness(np.eye(4), rng.uniform(0.01, 2), rng.uniform(0, 1), x) is Verdict.CONSISTENT

    def test_zero_column_violates(self):
        P = np.array([[1.0, 0.0, 2.0], [0.0, 0.0, 1.0]])
        assert rwp_violation_witness(P, 0.5, 0.1, [0.0, 1.0, 0.0]) is Verdict.VIOLATES

    def test_boundary(self):
        # ||x||_2 = rho ||x||_1 exactly: the strict inequality fails
        x = np.array([3.0, 4.0])
        rho = 5.0 / 7.0
        assert np.linalg.norm(x) == rho * np.abs(x).sum()
        assert rwp_violation_witness(np.zeros((2, 2)), rho, 1.0, x) is Verdict.CONSISTENT

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            rwp_violation_witness(np.eye(2), 0.5, 0.5, np.zeros(2))

    def test_two_forms_agree(self):
        rng = np.random.default_rng(9)
        for _ in range(10_000):
            P = rng.standard_normal((2, 3)) * rng.uniform(0, 2)
            x = rng.standard_normal(3)
            # raises if the phrasings disagree
            rwp_violation_witness(P, rng.uniform(0.05, 1.2), rng.uniform(0, 2), x)


def test_certificate_invariants():
    with pytest.raises(ValueError):
        RwpCertificate(rho=0.5, alpha_lower=0.6, alpha_upper=0.5, net_delta=0.1, method="net")
    with pytest.raises(ValueError):
        RwpCertificate(rho=0.0, alpha_lower=0.0, alpha_upper=0.5, net_delta=0.1, method="net")
    cert = certify(DIAG, 1.0, 0.01)
    assert cert.alpha_lower <= cert.alpha_upper
    assert cert.to_dict()["method"] == "net"
    assert certify(np.eye(7), 0.5).method == "heuristic_only"
