import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1sqp import problems
from l1sqp.errors import QpMatrixError
from l1sqp.nlp_model import evaluate
from l1sqp.qp import (
    ActiveSetQP, QpInstance, model_value, oracle_solve, random_instance, solve, solve_steering,
)

ORACLE_SEED = 7


def oracle_instances(count=200, seed=ORACLE_SEED):
    rng = np.random.default_rng(seed)
    return [random_instance(rng) for _ in range(count)]


def complementarity(inst, sol):
    e_h = inst.h + inst.jac_h.T @ sol.d
    e_g = inst.g + inst.jac_g.T @ sol.d
    parts = [
        sol.u * (sol.y_plus - e_h), sol.v * (sol.y_plus + e_h),
        sol.s * (sol.z_plus + e_g), sol.t * sol.z_plus,
    ]
    return max((float(np.max(np.abs(p))) for p in parts if p.size), default=0.0)


def assert_multiplier_identities(sol):
    for vec in (sol.u, sol.v, sol.s, sol.t):
        assert np.all(vec >= 0.0) and np.all(vec <= 1.0)
    np.testing.assert_array_equal(sol.u + sol.v, np.ones_like(sol.u))
    np.testing.assert_array_equal(sol.s + sol.t, np.ones_like(sol.s))


class TestSpecExamples:
    def test_example_2_1_at_solution(self):
        inst = QpInstance([0.6], [[1.0]], [0.0], [[1.0]], [], np.zeros((1, 0)))
        sol = solve(inst)
        assert sol.d[0] == pytest.approx(0.0, abs=1e-14)
        assert sol.r == pytest.approx(0.0, abs=1e-14)
        assert -1.0 <= (sol.u - sol.v)[0] <= 1.0
        assert (sol.u + sol.v)[0] == 1.0
        ref = oracle_solve(inst)
        assert ref.d[0] == pytest.approx(0.0, abs=1e-12)

    def test_feasible_with_zero_linear(self, rng):
        inst = QpInstance(np.zeros(3), np.eye(3), np.zeros(2), rng.normal(size=(3, 2)),
                          np.array([0.0, 1.5]), rng.normal(size=(3, 2)))
        sol = solve(inst)
        np.testing.assert_allclose(sol.d, 0.0, atol=1e-15)
        assert sol.r == 0.0

    def test_tp3_origin(self):
        ev = evaluate(problems.get("tp3").problem, [0.0, 0.0])
        np.testing.assert_allclose(ev.jac_g, [[-0.5, 1.0, -1.0], [0.0, 0.0, 0.0]])
        inst = QpInstance(0.01 * ev.grad_f, np.eye(2), ev.h, ev.jac_h, ev.g, ev.jac_g)
        sol = solve(inst)
        assert sol.r == pytest.approx(0.0, abs=1e-12)
        assert sol.kkt_residual <= 1e-10
        assert model_value(inst, sol.d) == pytest.approx(oracle_solve(inst).model_value, abs=1e-12)

    def test_steering_tp4_at_minus_one(self):
        sol = solve_steering([[1.0]], [], np.zeros((1, 0)), [0.0, -3.0], [[-2.0, 1.0]])
        assert sol.d[0] == pytest.approx(0.0, abs=1e-14)
        assert sol.r == pytest.approx(0.0, abs=1e-14)

    def test_steering_affine_equality(self):
        sol = solve_steering([[1.0]], [1.0], [[1.0]], [], np.zeros((1, 0)))
        assert sol.d[0] == pytest.approx(-1.0, abs=1e-14)
        assert sol.r == pytest.approx(-1.0, abs=1e-14)

    def test_steering_feasible(self):
        sol = solve_steering(np.eye(2), [0.0], [[1.0], [2.0]], [0.5], [[1.0], [0.0]])
        np.testing.assert_array_equal(sol.d, [0.0, 0.0])
        assert sol.r == 0.0


class TestOracle:
    def test_unconstrained(self, rng):
        L = rng.normal(size=(3, 3))
        B = L.T @ L + 0.1 * np.eye(3)
        lin = rng.normal(size=3)
        inst = QpInstance(lin, B, [], np.zeros((3, 0)), [], np.zeros((3, 0)))
        np.testing.assert_allclose(oracle_solve(inst).d, -np.linalg.solve(B, lin), atol=1e-12)
        np.testing.assert_allclose(solve(inst).d, -np.linalg.solve(B, lin), atol=1e-12)

    def test_zero_linear_feasible(self):
        inst = QpInstance([0.0, 0.0], np.eye(2), [0.0], [[1.0], [1.0]], [], np.zeros((2, 0)))
        np.testing.assert_allclose(oracle_solve(inst).d, 0.0, atol=1e-15)

    def test_budget(self, rng):
        inst = random_instance(rng, m_eq_max=3, m_ineq_max=3)
        with pytest.raises(ValueError):
            oracle_solve(inst, max_patterns=1)


@pytest.fixture(scope="module")
def pairs():
    qp = ActiveSetQP(warm_start=False)
    return [(inst, qp.solve(inst), oracle_solve(inst)) for inst in oracle_instances()]


class TestRandomEquivalence:
    """The active-set solver agrees with brute force on seeded random instances."""

    def test_model_value_and_direction(self, pairs):
        for inst, sol, ref in pairs:
            assert abs(model_value(inst, sol.d) - ref.model_value) <= 1e-6
            assert np.max(np.abs(sol.d - ref.d)) <= 1e-4

    def test_multiplier_identities_exact(self, pairs):
        for _, sol, _ in pairs:
            assert_multiplier_identities(sol)

    def test_complementarity(self, pairs):
        for inst, sol, _ in pairs:
            assert complementarity(inst, sol) <= 1e-10

    def test_stationarity(self, pairs):
        for _, sol, _ in pairs:
            assert sol.kkt_residual <= 1e-9

    def test_model_decrease(self, pairs):
        for inst, sol, _ in pairs:
            assert inst.linear @ sol.d + 0.5 * sol.d @ inst.B @ sol.d + sol.r <= 1e-12

    def test_slacks_match_direction(self, pairs):
        for inst, sol, _ in pairs:
            np.testing.assert_array_equal(sol.y_plus, np.abs(inst.h + inst.jac_h.T @ sol.d))
            np.testing.assert_array_equal(sol.z_plus,
                                          np.maximum(0.0, -(inst.g + inst.jac_g.T @ sol.d)))


class TestSolverBehaviour:
    def test_not_positive_definite(self):
        inst = QpInstance([1.0, 0.0], [[1.0, 0.0], [0.0, -1.0]], [], np.zeros((2, 0)),
                          [], np.zeros((2, 0)))
        with pytest.raises(QpMatrixError):
            solve(inst)

    def test_warm_start_gives_same_answer(self, rng):
        qp = ActiveSetQP(warm_start=True)
        for _ in range(50):
            inst = random_instance(rng)
            cold = solve(inst)
            warm = qp.solve(inst)
            assert abs(warm.model_value - cold.model_value) <= 1e-10
            again = qp.solve(inst)
            assert again.iterations <= warm.iterations + 1

    def test_steering_matches_oracle(self, rng):
        for _ in range(50):
            inst = random_instance(rng, zero_linear=True)
            sol = solve_steering(inst.B, inst.h, inst.jac_h, inst.g, inst.jac_g)
            assert abs(sol.model_value - oracle_solve(inst).model_value) <= 1e-8
            assert sol.r <= 1e-12

    def test_opposite_gradients_do_not_cycle(self):
        # Two inequality pieces with exactly opposite gradients, both at their kink;
        # this once cycled because roundoff let the second one block at a zero step.
        ev = evaluate(problems.get("tp3").problem, [0.04, 0.2])
        assert ev.g[1] == pytest.approx(0.0, abs=1e-15) and ev.g[2] == pytest.approx(0.0, abs=1e-15)
        B = np.array([[2.0, 0.3], [0.3, 1.0]])
        inst = QpInstance(0.01 * ev.grad_f, B, ev.h, ev.jac_h, ev.g, ev.jac_g)
        sol = solve(inst)
        assert sol.model_value == pytest.approx(oracle_solve(inst).model_value, abs=1e-10)
        assert_multiplier_identities(sol)

    def test_duplicate_rows(self):
        # identical equality rows: the multiplier split between them is not unique,
        # only the combined multiplier is determined
        inst = QpInstance([0.0, 0.0], np.eye(2), [0.2, 0.2], [[1.0, 1.0], [0.0, 0.0]],
                          [], np.zeros((2, 0)))
        sol = solve(inst)
        assert sol.model_value == pytest.approx(oracle_solve(inst).model_value, abs=1e-12)
        assert_multiplier_identities(sol)
        assert sol.kkt_residual <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(alpha=st.floats(0.1, 10.0), seed=st.integers(0, 2 ** 16))
    def test_unconstrained_scaling(self, alpha, seed):
        r = np.random.default_rng(seed)
        L = r.uniform(-2, 2, (3, 3))
        B = L.T @ L + 0.1 * np.eye(3)
        lin = r.uniform(-2, 2, 3)
        empty = np.zeros((3, 0))
        d1 = solve(QpInstance(lin, B, [], empty, [], empty)).d
        d2 = solve(QpInstance(alpha * lin, alpha * B, [], empty, [], empty)).d
        np.testing.assert_allclose(d1, d2, rtol=1e-9, atol=1e-12)
