import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbp_ins.mms import (
    REFERENCE_TABLE,
    MmsField,
    MmsRun,
    check_table,
    convergence_order,
    convergence_table,
    exact_state,
    format_table,
    mms_eval,
    mms_forcing,
    mms_system,
    p_norm_error,
    reference_value,
    write_table,
)

coords = st.floats(0.0, 1.0, allow_nan=False)
times = st.floats(0.0, 1.0, allow_nan=False)


def fd_strong_residual(x, y, t, eps, h=1e-4):
    """Central-difference evaluation of the momentum and continuity residuals."""
    f = lambda a, b, c: np.array(mms_eval(a, b, c))  # noqa: E731
    W = f(x, y, t)
    dx = (f(x + h, y, t) - f(x - h, y, t)) / (2 * h)
    dy = (f(x, y + h, t) - f(x, y - h, t)) / (2 * h)
    dt = (f(x, y, t + h) - f(x, y, t - h)) / (2 * h)
    lap = (f(x + h, y, t) + f(x - h, y, t) + f(x, y + h, t) + f(x, y - h, t) - 4 * W) / h**2
    u, v, _ = W
    fu = dt[0] + u * dx[0] + v * dy[0] + dx[2] - eps * lap[0]
    fv = dt[1] + u * dx[1] + v * dy[1] + dy[2] - eps * lap[1]
    return fu, fv, dx[0] + dy[1]


class TestExactSolution:
    def test_origin(self):
        u, v, p = mms_eval(0.0, 0.0, 0.0)
        assert (u, v, p) == (1.0, pytest.approx(1.1), 1.0)

    def test_quarter_wave(self):
        u, _, _ = mms_eval(1 / 6, 1 / 6, 0.0)
        assert u == pytest.approx(1.1, abs=1e-15)

    def test_vectorised(self):
        x = np.linspace(0, 1, 7)
        u, v, p = mms_eval(x, x[::-1], 0.3)
        assert u.shape == v.shape == p.shape == (7,)

    @given(coords, coords, times)
    def test_divergence_free(self, x, y, t):
        (u_x, _, _), (_, v_y, _), _ = MmsField().gradients(x, y, t)
        assert abs(u_x + v_y) < 1e-14

    @given(coords, coords, times)
    def test_gradients_match_differences(self, x, y, t):
        h = 1e-6
        f = MmsField()
        (u_x, u_y, u_t), (v_x, v_y, v_t), (p_x, p_y) = f.gradients(x, y, t)
        d = lambda a, b: (np.array(f.eval(*a)) - np.array(f.eval(*b))) / (2 * h)  # noqa: E731
        gx, gy, gt = d((x + h, y, t), (x - h, y, t)), d((x, y + h, t), (x, y - h, t)), d((x, y, t + h), (x, y, t - h))
        np.testing.assert_allclose([u_x, v_x, p_x], gx, atol=1e-7)
        np.testing.assert_allclose([u_y, v_y, p_y], gy, atol=1e-7)
        np.testing.assert_allclose([u_t, v_t], gt[:2], atol=1e-7)


class TestForcing:
    @given(coords, coords, times)
    def test_continuity_forcing_zero(self, x, y, t):
        assert abs(mms_forcing(x, y, t)[2]) < 1e-14

    @pytest.mark.parametrize("point", [(0.1, 0.2, 0.0), (0.37, 0.81, 0.4), (0.9, 0.05, 1.3), (0.5, 0.5, 0.25)])
    def test_matches_finite_differences(self, point):
        fu, fv, _ = mms_forcing(*point, epsilon=0.1)
        gu, gv, _ = fd_strong_residual(*point, eps=0.1)
        # second differences of O(1) fields with h=1e-4 are accurate to about 1e-8 times the curvature scale
        assert abs(fu - gu) < 1e-8 * (1 + 2 * 0.1 * (3 * math.pi) ** 2) * 10
        assert abs(fv - gv) < 1e-8 * (1 + 2 * 0.1 * (3 * math.pi) ** 2) * 10

    def test_inviscid_frozen_time_at_origin(self):
        f = MmsField()
        (u_x, u_y, u_t), _, (p_x, _) = f.gradients(0.0, 0.0, 0.0)
        fu, _, _ = mms_forcing(0.0, 0.0, 0.0, epsilon=0.0)
        u, v, _ = mms_eval(0.0, 0.0, 0.0)
        assert fu - u_t == pytest.approx(u * u_x + v * u_y + p_x, abs=1e-13)

    def test_default_epsilon_from_field(self):
        assert mms_forcing(0.3, 0.4, 0.1) == mms_forcing(0.3, 0.4, 0.1, epsilon=0.1)


class TestErrorNorm:
    def test_identical(self, rng):
        sys = mms_system(2, 5)
        W = rng.standard_normal(3 * sys.n)
        np.testing.assert_array_equal(p_norm_error(sys.P, W, W), 0.0)

    @pytest.mark.parametrize("c", [0.5, -2.0])
    def test_constant_error(self, c):
        sys = mms_system(3, 13)
        W = exact_state(sys, 0.0)
        np.testing.assert_allclose(p_norm_error(sys.P, W + c, W), abs(c), rtol=1e-13)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="lengths differ"):
            p_norm_error(np.ones(4), np.zeros(12), np.zeros(8))
        with pytest.raises(ValueError, match="multiple"):
            p_norm_error(np.ones(4), np.zeros(10), np.zeros(10))


class TestConvergenceOrder:
    @pytest.mark.parametrize(
        "E1,N1,E2,N2,expected",
        [(1.019e-02, 13, 2.119e-03, 25, 2.40), (8.566e-04, 13, 2.863e-05, 25, 5.20)],
    )
    def test_reference_pairs(self, E1, N1, E2, N2, expected):
        assert round(convergence_order(E1, N1, E2, N2), 2) == expected

    @given(st.floats(1e-12, 1.0), st.integers(2, 500), st.integers(2, 500))
    def test_equal_errors_zero(self, E, N1, N2):
        if N1 != N2:
            assert convergence_order(E, N1, E, N2) == 0.0

    @given(st.floats(0.5, 8.0), st.integers(5, 60))
    def test_recovers_power_law(self, q, N1):
        N2 = 2 * N1
        assert convergence_order(N1**-q, N1, N2**-q, N2) == pytest.approx(q, rel=1e-10)

    @pytest.mark.parametrize("args", [(0.0, 13, 1e-3, 25), (1e-2, 13, -1e-3, 25), (1e-2, 0, 1e-3, 25), (1e-2, 13, 1e-3, 13)])
    def test_rejected(self, args):
        with pytest.raises(ValueError):
            convergence_order(*args)

    def test_reference_table_consistent(self):
        # the reference orders follow from the reference errors by the same formula
        for k, row in REFERENCE_TABLE.items():
            n, e = row["nodes"], row["error_u"]
            for i in range(1, 4):
                assert convergence_order(e[i - 1], n[i - 1], e[i], n[i]) == pytest.approx(row["order_u"][i], abs=0.011)


def fake_runs(k, errors, nodes=(13, 25, 37, 49)):
    return [MmsRun(k, n, 0.4, 6.4e-5, e, e, e, 1, 0.0) for n, e in zip(nodes, errors)]


class TestTables:
    def test_mms_system_rejects_incompatible_nodes(self):
        with pytest.raises(ValueError, match="cannot be built"):
            mms_system(3, 12)

    def test_reference_lookup(self):
        assert reference_value(1, 13, "error_u") == 1.019e-02
        assert reference_value(4, 49, "order_v") == 3.94
        assert reference_value(5, 13, "error_u") is None
        assert reference_value(1, 17, "error_u") is None

    def test_reference_errors_pass_full_check(self):
        runs = []
        for k, row in REFERENCE_TABLE.items():
            runs += fake_runs(k, row["error_u"])
        rows = convergence_table(runs)
        # v errors equal to u errors here, so only the u columns are compared
        problems = [p for p in check_table(rows, order_tol=0.3, error_rtol=0.2) if "_v" not in p]
        assert problems == []

    def test_mismatch_reported(self):
        rows = convergence_table(fake_runs(1, (1.0e-2, 5.0e-3)))
        problems = check_table(rows)
        assert len(problems) == 1 and "k=1 nodes=25: order_u 1.06 vs 2.40" in problems[0]

    def test_error_tolerance(self):
        rows = convergence_table(fake_runs(2, (2 * 6.148e-03,), nodes=(13,)))
        assert check_table(rows) == []
        assert any("error_u" in p for p in check_table(rows, error_rtol=0.2))

    def test_non_consecutive_orders_not_checked(self):
        rows = convergence_table(fake_runs(3, (1e-3, 1e-3), nodes=(13, 37)))
        assert check_table(rows) == []

    def test_format_and_write(self, tmp_path):
        rows = convergence_table(fake_runs(1, (1.019e-02, 2.119e-03), nodes=(13, 25)))
        text = format_table(rows)
        lines = text.splitlines()
        assert lines[0] == "degree,nodes,error_u,error_v,order_u,order_v"
        assert lines[1] == "1,13,1.019e-02,1.019e-02,--,--"
        assert lines[2] == "1,25,2.119e-03,2.119e-03,2.40,2.40"
        write_table(rows, tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text() == text

    def test_rows_sorted_by_degree_then_nodes(self):
        runs = fake_runs(2, (1e-3, 1e-2), nodes=(25, 13)) + fake_runs(1, (1e-2,), nodes=(13,))
        rows = convergence_table(runs)
        assert [(r["degree"], r["nodes"]) for r in rows] == [(1, 13), (2, 13), (2, 25)]
