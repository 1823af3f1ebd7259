import numpy as np
import pytest

from otlab.dnmap import (
    DNOperator,
    SobolevScale,
    alessandrini_residual,
    assemble_dn,
    sobolev_operator_norm,
    sobolev_pairing,
)
from otlab.grid import GridDomain
from otlab.medium import AprioriData, OpticalMedium
from otlab.solver import assemble


def apriori(**kw):
    base = dict(n=3, p=4.0, lam=1.5, E=10.0, cal_e=1.2, k=0.12, alpha=0.2)
    base.update(kw)
    return AprioriData(**base)


def medium_on(grid, mu_a="1", mu_s="1"):
    return OpticalMedium.from_expressions(grid, apriori(), mu_a=mu_a, mu_s=mu_s)


@pytest.fixture(scope="module")
def grid9():
    return GridDomain(extent=1.0, m_per_axis=9)


@pytest.fixture(scope="module")
def scale9(grid9):
    return SobolevScale.build(grid9)


@pytest.fixture(scope="module")
def dn9(grid9):
    return assemble_dn(medium_on(grid9), grid9)


class TestAssembly:
    def test_deterministic_bitwise(self, grid9, dn9):
        again = assemble_dn(medium_on(grid9), grid9)
        assert np.array_equal(dn9.matrix, again.matrix)
        assert dn9.medium_fingerprint == again.medium_fingerprint

    def test_bilinear_symmetry(self, dn9):
        gap = np.abs(dn9.matrix - dn9.matrix.T).max()
        assert gap <= 1e-9 * np.abs(dn9.matrix).max()

    def test_permutation_equivariance(self, grid9, dn9):
        rng = np.random.default_rng(42)
        perm = rng.permutation(len(dn9.boundary_idx))
        permuted = assemble_dn(medium_on(grid9), grid9, boundary_order=perm)
        np.testing.assert_allclose(
            permuted.matrix, dn9.matrix[np.ix_(perm, perm)], rtol=0, atol=1e-12
        )

    def test_save_load_roundtrip(self, dn9, tmp_path):
        path = tmp_path / "dn.npz"
        dn9.save(path)
        back = DNOperator.load(path)
        assert np.array_equal(back.matrix, dn9.matrix)
        assert back.medium_fingerprint == dn9.medium_fingerprint

    def test_energy_identity(self, grid9, dn9):
        # Re(f^H S f) equals the K_R-weighted gradient energy plus the
        # mu_a-weighted mass of the discrete solution, accumulated
        # independently of the assembled matrix
        from otlab.medium import split_real_imag
        from otlab.solver import solve_dirichlet

        med = medium_on(grid9)
        op = assemble(med, grid9)
        tensor = split_real_imag(med)
        m, h = grid9.m_per_axis, grid9.h
        midx = grid9.multi_index()
        on_border = (midx == 0) | (midx == m - 1)
        rng = np.random.default_rng(17)
        for _ in range(10):
            f = rng.normal(size=len(dn9.boundary_idx)) + 1j * rng.normal(
                size=len(dn9.boundary_idx)
            )
            lhs = np.real(np.conj(f) @ (dn9.matrix @ f))
            u = solve_dirichlet(op, f).values
            rhs = np.sum(grid9.volume_weights * med.mu_a * np.abs(u) ** 2)
            for d in range(3):
                p = np.flatnonzero(midx[:, d] < m - 1)
                q = p + grid9.strides[d]
                transverse = [e for e in range(3) if e != d]
                w_t = 0.5 ** on_border[p][:, transverse].sum(axis=1)
                coef = 0.5 * (tensor.K_R[p, d, d] + tensor.K_R[q, d, d]) * h * w_t
                rhs += np.sum(coef * np.abs(u[q] - u[p]) ** 2)
            assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_pairing_matches_analytic_energy_for_harmonic_data(self):
        # constant coefficients and no reaction: u = 1/|x - z| (z outside)
        # solves the equation exactly, so the discrete pairing against the
        # trace of x1 must approach kappa * surface integral of u nu_1
        z = np.array([1.2, 0.3, 0.9])
        kappa = (2.0 + 1.0j) / 15.0
        a = AprioriData(n=3, p=4.0, lam=1.0, E=10.0, cal_e=1.0, k=1.0, alpha=0.2)

        # independent oracle: Gauss-Legendre surface quadrature of u nu_1
        glx, glw = np.polynomial.legendre.leggauss(48)
        glx, glw = glx / 2.0, glw / 2.0  # map to [-1/2, 1/2]
        surf = 0.0
        for axis in range(3):
            for side, nu1 in ((0, -1.0), (1, 1.0)):
                if axis != 0:
                    nu1 = 0.0
                if nu1 == 0.0:
                    continue
                Y, X2 = np.meshgrid(glx, glx, indexing="ij")
                pts = np.zeros((glx.size**2, 3))
                pts[:, axis] = -0.5 if side == 0 else 0.5
                others = [d for d in range(3) if d != axis]
                pts[:, others[0]] = Y.ravel()
                pts[:, others[1]] = X2.ravel()
                w2 = np.outer(glw, glw).ravel()
                vals = 1.0 / np.linalg.norm(pts - z, axis=1)
                surf += nu1 * np.sum(w2 * vals)
        exact = kappa * surf

        errors = []
        for m in (9, 13):
            grid = GridDomain(extent=1.0, m_per_axis=m)
            med = OpticalMedium.from_expressions(grid, a, mu_a="1", mu_s="1")
            op = assemble(med, grid, include_reaction=False)
            dn = assemble_dn(med, grid, operator=op)
            f = 1.0 / np.linalg.norm(grid.points[dn.boundary_idx] - z, axis=1)
            g = grid.points[dn.boundary_idx, 0]
            errors.append(abs(dn.pairing(f.astype(complex), g.astype(complex)) - exact))
        order = np.log(errors[0] / errors[1]) / np.log((13 - 1) / (9 - 1))
        assert order >= 1.5


class TestSobolevScale:
    def test_stiffness_kernel_is_constants(self, scale9):
        ones = np.ones(len(scale9.boundary_idx))
        assert np.abs(scale9.stiffness @ ones).max() <= 1e-12
        assert scale9.eigenvalues[0] <= 1e-10

    def test_total_mass_is_surface_area(self, scale9, grid9):
        assert scale9.mass.sum() == pytest.approx(6.0 * grid9.extent**2, rel=1e-12)

    def test_constant_norm_is_total_weight(self, scale9):
        c = 2.5 - 1.0j
        f = np.full(len(scale9.boundary_idx), c)
        expected = scale9.mass.sum() * abs(c) ** 2
        assert scale9.norm(f, 0.5) ** 2 == pytest.approx(expected, rel=1e-10)

    def test_cauchy_schwarz_sandwich(self, scale9):
        rng = np.random.default_rng(3)
        nb = len(scale9.boundary_idx)
        for _ in range(100):
            phi = rng.normal(size=nb)
            f = rng.normal(size=nb)
            lhs = abs(scale9.duality_pairing(phi, f))
            assert lhs <= scale9.norm(phi, -0.5) * scale9.norm(f, 0.5) * (1 + 1e-12)

    def test_fractional_weights_compose_to_identity(self, scale9):
        rng = np.random.default_rng(4)
        f = rng.normal(size=len(scale9.boundary_idx))
        back = scale9.fractional_weight(scale9.fractional_weight(f, 0.5), -0.5)
        np.testing.assert_allclose(back, f, atol=1e-10)

    def test_pairing_reduces_to_l2_at_order_zero(self, scale9):
        rng = np.random.default_rng(5)
        nb = len(scale9.boundary_idx)
        f, g = rng.normal(size=nb), rng.normal(size=nb)
        assert sobolev_pairing(f, g, scale9, 0.0) == pytest.approx(
            np.sum(scale9.mass * f * g), rel=1e-11
        )


class TestOperatorNorm:
    def test_zero_difference(self, scale9):
        nb = len(scale9.boundary_idx)
        assert sobolev_operator_norm(np.zeros((nb, nb)), scale9) == 0.0

    def test_homogeneity(self, grid9, scale9, dn9):
        other = assemble_dn(medium_on(grid9, mu_a="1 + 0.1*sin(2*x1)"), grid9)
        delta = other.matrix - dn9.matrix
        base = sobolev_operator_norm(delta, scale9)
        for c in (2.0, -3.5, 1.0 + 2.0j, 0.3j):
            assert sobolev_operator_norm(c * delta, scale9) == pytest.approx(
                abs(c) * base, rel=1e-6
            )

    def test_matches_dense_svd(self, grid9, scale9, dn9):
        from otlab.dnmap import _whitened

        other = assemble_dn(medium_on(grid9, mu_a="1 + 0.15*cos(x2)"), grid9)
        delta = other.matrix - dn9.matrix
        power = sobolev_operator_norm(delta, scale9)
        dense = np.linalg.svd(_whitened(delta, scale9), compute_uv=False)[0]
        assert power == pytest.approx(dense, rel=1e-6)

    def test_frechet_probe_slope_one(self, grid9, scale9, dn9):
        base = medium_on(grid9)
        psi = np.cos(2 * grid9.points[:, 0]) * np.exp(-grid9.points[:, 1])
        eps = np.array([0.04, 0.02, 0.01, 0.005])
        norms = []
        for e in eps:
            med = base.with_absorption(base.mu_a + e * 0.5 * psi)
            dn = assemble_dn(med, grid9)
            norms.append(sobolev_operator_norm(dn.matrix - dn9.matrix, scale9))
        slope = np.polyfit(np.log(eps), np.log(norms), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.1)


class TestAlessandrini:
    def test_identical_media_residual_vanishes(self, grid9):
        med = medium_on(grid9)
        nb = len(grid9.boundary_indices)
        rng = np.random.default_rng(6)
        f = rng.normal(size=nb) + 1j * rng.normal(size=nb)
        g = rng.normal(size=nb) + 1j * rng.normal(size=nb)
        assert alessandrini_residual(med, med, f, g) <= 1e-9

    def test_residual_shrinks_under_refinement(self):
        residuals = []
        for m in (9, 13):
            grid = GridDomain(extent=1.0, m_per_axis=m)
            med1 = medium_on(grid)
            med2 = OpticalMedium.from_expressions(
                grid, apriori(), mu_a="1 + 0.2*sin(2*x1)*cos(x2)", mu_s="1"
            )
            pts = grid.points[grid.boundary_indices]
            f = np.exp(pts[:, 0]) * np.cos(pts[:, 1])
            g = pts[:, 2] ** 2 + 0.5
            residuals.append(
                alessandrini_residual(med1, med2, f.astype(complex), g.astype(complex))
            )
        assert residuals[1] < residuals[0]
