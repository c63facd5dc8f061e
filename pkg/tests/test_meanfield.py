import numpy as np
import pytest

from allelopathy import meanfield as mf
from allelopathy.meanfield import _RateTriple as P


def test_rhs_absorbing_empty_state():
    for form in (mf.CORRECTED, mf.LITERAL):
        assert np.allclose(mf.rhs([1, 0, 0, 0], P(2, 3, 1), form), 0.0)


def test_rhs_red_boundary_equilibrium():
    assert np.allclose(mf.rhs([0.5, 0, 0.5, 0], P(5, 2, 1)), 0.0)


def test_conservation_and_literal_defect():
    gen = np.random.default_rng(0)
    for _ in range(300):
        u = gen.dirichlet(np.ones(4))
        p = P(*gen.uniform(0.05, 5.0, size=3))
        assert abs(mf.rhs(u, p, mf.CORRECTED).sum()) < 1e-14
        defect = mf.rhs(u, p, mf.LITERAL).sum()
        assert defect == pytest.approx(p.lambda1 * u[3] * (u[0] - u[1]),
                                       abs=1e-13)


def test_blue_boundary_point():
    assert mf.boundary_fixed_point_blue(P(1.0, 0, 1)) is None
    assert mf.boundary_fixed_point_blue(P(0.7, 0, 1)) is None
    ub = mf.boundary_fixed_point_blue(P(2.0, 0, 1.0))
    assert np.allclose(ub, [0.25, 0.5, 0.0, 0.25])
    assert np.linalg.norm(mf.rhs(ub, P(2.0, 0, 1.0))) < 1e-12
    # fast-thaw limit: the frozen mass vanishes
    big = mf.boundary_fixed_point_blue(P(2.0, 0, 1e9))
    assert np.allclose(big, [0.5, 0.5, 0.0, 0.0], atol=1e-8)


def test_red_boundary_point():
    assert mf.boundary_fixed_point_red(P(0, 1.0, 1)) is None
    assert np.allclose(mf.boundary_fixed_point_red(P(0, 2.0, 1)),
                       [0.5, 0, 0.5, 0])
    assert np.allclose(mf.boundary_fixed_point_red(P(0, 4.0, 1)),
                       [0.25, 0, 0.75, 0])


def test_jacobian_matches_finite_differences():
    gen = np.random.default_rng(7)
    h = 1e-5
    for _ in range(100):
        u = gen.dirichlet(np.ones(4))
        p = P(*gen.uniform(0.05, 5.0, size=3))
        for form in (mf.CORRECTED, mf.LITERAL):
            J = mf.jacobian(u, p, form)
            FD = np.zeros((4, 4))
            for j in range(4):
                e = np.zeros(4)
                e[j] = h
                FD[:, j] = (mf.rhs(u + e, p, form)
                            - mf.rhs(u - e, p, form)) / (2 * h)
            assert np.max(np.abs(J - FD)) < 1e-6


def test_eigenvalue_formulas_at_boundaries():
    p = P(2.0, 3.0, 1.0)
    vb = mf.boundary_fixed_point_red(p)
    evs = np.real(mf.tangent_eigenvalues(mf.jacobian(vb, p)))
    assert np.min(np.abs(evs - (p.lambda1 / p.lambda2 - 1.0))) < 1e-9
    ub = mf.boundary_fixed_point_blue(p)
    evs = np.real(mf.tangent_eigenvalues(mf.jacobian(ub, p)))
    u2_eig = p.lambda2 * p.gamma / (p.lambda1 * (p.lambda1 + p.gamma - 1)) - 1
    assert np.min(np.abs(evs - u2_eig)) < 1e-9


def test_classify_region_examples():
    assert mf.classify_region(2, 3, 1) == (True, True, True)
    assert mf.classify_region(1, 3, 1)[0] is False
    w1, w2, co = mf.classify_region(2, 5, 1)
    assert (w1, w2, co) == (False, True, False)
    with pytest.raises(ValueError):
        mf.classify_region(2, 3, 0)


def test_interior_point_closed_form_oracle():
    # independent closed form: u0 = 1/l2, u3 = 1/l1 - 1/l2,
    # u1 = g*(l2-l1)/l1^2, u2 the simplex remainder
    cases = [(2.0, 3.0, 1.0), (1.8, 2.2, 0.7), (2.5, 3.5, 1.3)]
    for l1, l2, g in cases:
        u0 = 1.0 / l2
        u3 = 1.0 / l1 - 1.0 / l2
        u1 = g * (l2 - l1) / l1 ** 2
        u2 = 1.0 - u0 - u1 - u3
        expect = np.array([u0, u1, u2, u3])
        assert np.all(expect > 0), "oracle case must be interior"
        got = mf.interior_fixed_point(P(l1, l2, g))
        assert got is not None
        assert np.allclose(got, expect, atol=1e-9)
        assert np.linalg.norm(mf.rhs(got, P(l1, l2, g))) < 1e-10


def test_interior_point_absent():
    assert mf.interior_fixed_point(P(2.0, 5.0, 1.0)) is None
    assert mf.interior_fixed_point(P(0.5, 0.5, 1.0)) is None


def test_interior_nonconvergence_signaled():
    with pytest.raises(mf.NewtonDidNotConverge):
        mf.interior_fixed_point(P(2.0, 3.0, 1.0), max_iter=0, n_starts=1)


def test_region_consistency_small_grid():
    ls = np.linspace(0.25, 5.0, 12)
    for g in (0.5, 1.0):
        for l1 in ls:
            for l2 in ls:
                w1, w2, _ = mf.classify_region(l1, l2, g)
                found = mf.interior_fixed_point(P(l1, l2, g))
                assert (found is not None) == (w1 and w2), (l1, l2, g)


def test_integrate_fixed_points_stay():
    p = P(2.0, 3.0, 1.0)
    tr = mf.integrate([1, 0, 0, 0], p, T=50.0)
    assert np.allclose(tr.final, [1, 0, 0, 0], atol=1e-12)
    vb = mf.boundary_fixed_point_red(p)
    tr = mf.integrate(vb, p, T=100.0)
    assert np.max(np.abs(tr.final - vb)) < 1e-10


def test_integrate_converges_in_coexistence_window():
    p = P(2.0, 3.0, 1.0)
    tr = mf.integrate([0.3, 0.2, 0.3, 0.2], p, T=500.0, dt=0.01)
    assert np.linalg.norm(mf.rhs(tr.final, p)) < 1e-8
    assert tr.step_halving_error < 1e-9


def test_integrate_signals_divergence():
    with pytest.raises(FloatingPointError):
        mf.integrate([5.0, 5.0, 5.0, 5.0], P(5, 5, 1), form=mf.LITERAL,
                     dt=0.05, T=50.0)


def test_integrate_rejects_bad_step():
    with pytest.raises(ValueError):
        mf.integrate([1, 0, 0, 0], P(1, 1, 1), dt=0.0, T=1.0)


def test_stability_report_classifications():
    p = P(2.0, 3.0, 1.0)   # coexistence window: both boundaries attract
    ub = mf.boundary_fixed_point_blue(p)
    rec = mf.stability_report(ub, p)
    assert rec.classification == "attracting"
    assert rec.in_w1 and rec.in_w2 and rec.coexistence_window
    p_out = P(2.0, 5.0, 1.0)   # blue boundary loses stability
    ub = mf.boundary_fixed_point_blue(p_out)
    rec = mf.stability_report(ub, p_out)
    assert rec.classification == "unstable"


def test_stability_flip_on_boundary_curve():
    # the red-direction eigenvalue at the blue equilibrium changes sign
    # exactly on g*l2 = l1*(l1+g-1)
    l1, g = 2.0, 1.0
    l2_star = l1 * (l1 + g - 1) / g
    for eps, expect in ((-1e-3, "attracting"), (1e-3, "unstable")):
        p = P(l1, l2_star + eps, g)
        rec = mf.stability_report(mf.boundary_fixed_point_blue(p), p)
        assert rec.classification == expect


def test_phase_grid_rows():
    rows = mf.phase_grid([0.5, 2.0], [0.5, 3.0], [1.0])
    assert len(rows) == 4
    by_key = {(r["lambda1"], r["lambda2"]): r for r in rows}
    assert by_key[(2.0, 3.0)]["coexist"] == 1
    assert by_key[(2.0, 3.0)]["interior_exists"] == 1
    assert by_key[(0.5, 0.5)]["ubar_exists"] == 0
    assert by_key[(0.5, 0.5)]["interior_exists"] == 0
