import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import LinearConstraint, minimize

from poanet.errors import Infeasible, MaxIterations, Unbounded
from poanet.qp import QuadraticProgram, solve_feasibility, solve_qp


class TestExamples:
    def test_active_bound(self):
        result = solve_qp(QuadraticProgram(Q=[[2.0]], b=[0.0], lb=[1.0]))
        assert result.x[0] == pytest.approx(1.0, abs=1e-8)
        assert max(result.residuals.values()) <= 1e-6

    def test_unconstrained(self):
        result = solve_qp(QuadraticProgram(Q=[[2.0]], b=[-6.0]))
        assert result.x[0] == pytest.approx(3.0, abs=1e-8)

    def test_equality_split(self):
        qp = QuadraticProgram(Q=2 * np.eye(2), b=np.zeros(2), E=[[1.0, 1.0]], e=[1.0])
        result = solve_qp(qp)
        np.testing.assert_allclose(result.x, [0.5, 0.5], atol=1e-8)

    def test_feasibility_point(self):
        x = solve_feasibility(E=[[1.0]], e=[2.0], bounds=([0.0], [np.inf]))
        assert x[0] == pytest.approx(2.0, abs=1e-6)

    def test_feasibility_infeasible(self):
        with pytest.raises(Infeasible):
            solve_feasibility(E=[[1.0]], e=[-1.0], bounds=([0.0], [np.inf]))

    def test_row_stochastic_recovery(self):
        # route shares p with p * 1 = (0.3, 0.7) and p1 + p2 = 1
        x = solve_feasibility(E=[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                              e=[0.3, 0.7, 1.0], bounds=(np.zeros(2), np.full(2, np.inf)))
        np.testing.assert_allclose(x, [0.3, 0.7], atol=1e-6)

    def test_unbounded(self):
        with pytest.raises(Unbounded):
            solve_qp(QuadraticProgram(Q=[[0.0]], b=[-1.0], lb=[0.0]))

    def test_not_psd_rejected(self):
        with pytest.raises(ValueError):
            solve_qp(QuadraticProgram(Q=[[-1.0]], b=[0.0]))


class TestContract:
    def test_kkt_residuals_reported(self):
        qp = QuadraticProgram(Q=2 * np.eye(3), b=[-1.0, 0.0, 2.0],
                              G=[[1.0, 1.0, 1.0]], h=[1.0],
                              lb=np.zeros(3))
        result = solve_qp(qp, tol=1e-8)
        assert set(result.residuals) == {"stationarity", "primal", "dual",
                                         "complementarity"}
        assert max(result.residuals.values()) <= 1e-8

    def test_objective_not_worse_than_feasible_points(self):
        rng = np.random.default_rng(8)
        M = rng.normal(size=(4, 4))
        qp = QuadraticProgram(Q=M @ M.T + 0.2 * np.eye(4), b=rng.normal(size=4),
                              G=rng.normal(size=(3, 4)), h=rng.normal(size=3) + 2.0,
                              lb=np.full(4, -3.0), ub=np.full(4, 3.0))
        result = solve_qp(qp, tol=1e-8)
        A, l, u = qp.stacked()
        for _ in range(200):
            cand = rng.uniform(-3, 3, size=4)
            ax = A @ cand
            if np.all(ax <= u + 1e-12) and np.all(ax >= l - 1e-12):
                assert result.objective <= qp.objective(cand) + 1e-6

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(9)
        M = rng.normal(size=(5, 5))
        qp = QuadraticProgram(Q=M @ M.T, b=rng.normal(size=5),
                              G=rng.normal(size=(4, 5)), h=rng.normal(size=4) + 1.0,
                              lb=np.full(5, -2.0), ub=np.full(5, 2.0))
        r1 = solve_qp(qp)
        r2 = solve_qp(qp)
        assert np.array_equal(r1.x, r2.x)
        assert r1.objective == r2.objective

    def test_symmetrization(self):
        qp = QuadraticProgram(Q=[[2.0, 1.0], [0.0, 2.0]], b=[0.0, 0.0])
        dense = qp.Q.toarray()
        np.testing.assert_allclose(dense, dense.T, atol=1e-15)

    def test_singular_quadratic_gets_ridge_note(self):
        qp = QuadraticProgram(Q=np.diag([2.0, 0.0]), b=[-2.0, 0.0],
                              lb=np.zeros(2), ub=np.ones(2))
        result = solve_qp(qp)
        assert result.x[0] == pytest.approx(1.0, abs=1e-7)

    def test_max_iterations_carries_result(self):
        # starve the budget so even easy problems cannot finish the fallback
        rng = np.random.default_rng(10)
        n = 6
        M = rng.normal(size=(n, n))
        qp = QuadraticProgram(Q=M @ M.T + 1e-6 * np.eye(n), b=rng.normal(size=n),
                              G=rng.normal(size=(30, n)),
                              h=-np.abs(rng.normal(size=30)) * 0.0 + 0.05,
                              lb=np.full(n, -10.0), ub=np.full(n, 10.0))
        try:
            solve_qp(qp, tol=1e-14, max_iter=30)
        except MaxIterations as exc:
            assert exc.result is not None
            assert exc.result.x.shape == (n,)

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            QuadraticProgram(Q=np.eye(2), b=[1.0])
        with pytest.raises(ValueError):
            QuadraticProgram(Q=np.eye(2), b=[1.0, 2.0], E=[[1.0]], e=[0.0])
        with pytest.raises(ValueError):
            QuadraticProgram(Q=np.eye(2), b=[1.0, 2.0], lb=[1.0, 1.0], ub=[0.0, 0.0])


class TestRandomBattery:
    def test_matches_reference_solver(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(20):
            n = int(rng.integers(2, 8))
            me = int(rng.integers(0, 2))
            mg = int(rng.integers(0, 4))
            M = rng.normal(size=(n, n))
            Q = M @ M.T + 0.1 * np.eye(n)
            b = rng.normal(size=n)
            E = rng.normal(size=(me, n)) if me else None
            e = rng.normal(size=me) if me else None
            G = rng.normal(size=(mg, n)) if mg else None
            h = rng.normal(size=mg) + 1.0 if mg else None
            lb = np.full(n, -5.0)
            ub = np.full(n, 5.0)
            qp = QuadraticProgram(Q=Q, b=b, E=E, e=e, G=G, h=h, lb=lb, ub=ub)
            try:
                result = solve_qp(qp, tol=1e-8)
            except Infeasible:
                continue
            cons = []
            if me:
                cons.append(LinearConstraint(E, e, e))
            if mg:
                cons.append(LinearConstraint(G, -np.inf, h))
            ref = minimize(lambda x: 0.5 * x @ Q @ x + b @ x, np.zeros(n),
                           jac=lambda x: Q @ x + b, bounds=list(zip(lb, ub)),
                           constraints=cons, method="SLSQP",
                           options={"maxiter": 500, "ftol": 1e-12})
            if not ref.success:
                continue
            checked += 1
            assert result.objective <= ref.fun + 1e-6 * max(1.0, abs(ref.fun))
        assert checked >= 10

    def test_sparse_inputs(self):
        qp = QuadraticProgram(Q=sp.diags([2.0, 2.0]), b=np.zeros(2),
                              E=sp.csr_matrix(np.array([[1.0, 1.0]])), e=[1.0])
        result = solve_qp(qp)
        np.testing.assert_allclose(result.x, [0.5, 0.5], atol=1e-8)
