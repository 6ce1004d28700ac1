"""Oracles: invariant features, symbolic benchmark, coupled channel solver."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import sagep.evaluators as ev
from sagep.embedding import FeatureTable
from sagep.evaluators import (
    DIVERGENCE_SENTINEL,
    ChannelCase,
    ChannelEvaluator,
    DomainError,
    EvaluationOutcome,
    INVARIANT_COLUMNS,
    InvariantFields,
    SetupError,
    SymbolicBenchmark,
    compute_invariants,
    default_channel_case,
    expensive_call_count,
    load_channel_case,
    make_reference,
    read_invariant_fields,
    solve_channel,
)
from sagep.symreg import ConstantsPool, parse_expression


def fields_from_tensors(S, W, grad_t=None, omega=None, k=None, nu=None,
                        nut=None, y=None):
    n = S.shape[0]
    return InvariantFields(
        S=S, W=W,
        grad_t=np.zeros((n, 3)) if grad_t is None else grad_t,
        omega=np.ones(n) if omega is None else omega,
        k=np.ones(n) if k is None else k,
        nu=np.ones(n) if nu is None else nu,
        nut=np.ones(n) if nut is None else nut,
        y=np.ones(n) if y is None else y,
    )


class TestInvariants:
    def test_zero_fields_give_zero_features(self):
        f = fields_from_tensors(np.zeros((4, 3, 3)), np.zeros((4, 3, 3)))
        table = compute_invariants(f)
        for name in ("I1", "I2", "J1", "J2", "J3", "J4", "J5"):
            assert np.array_equal(table.columns[name], np.zeros(4)), name

    def test_pure_shear_first_invariant(self):
        # s12 = s21 = a with unit omega contracts to 2 a^2.
        a = 0.7
        S = np.zeros((1, 3, 3))
        S[0, 0, 1] = S[0, 1, 0] = a
        f = fields_from_tensors(S, np.zeros((1, 3, 3)))
        table = compute_invariants(f)
        assert table.columns["I1"][0] == pytest.approx(2 * a ** 2, rel=1e-12)

    def test_omega_normalizes_first_invariant(self):
        S = np.zeros((1, 3, 3))
        S[0, 0, 1] = S[0, 1, 0] = 1.0
        f = fields_from_tensors(S, np.zeros((1, 3, 3)), omega=np.array([2.0]))
        table = compute_invariants(f)
        assert table.columns["I1"][0] == pytest.approx(0.5, rel=1e-12)

    def test_wall_reynolds_clamps_at_two(self):
        # sqrt(k) y / (50 nu) = 3 clamps to the cap.
        f = fields_from_tensors(np.zeros((1, 3, 3)), np.zeros((1, 3, 3)),
                                k=np.array([9.0]), y=np.array([50.0]),
                                nu=np.array([1.0]))
        table = compute_invariants(f)
        assert table.columns["N1"][0] == 2.0

    def test_wall_reynolds_below_cap(self):
        f = fields_from_tensors(np.zeros((1, 3, 3)), np.zeros((1, 3, 3)),
                                k=np.array([1.0]), y=np.array([25.0]),
                                nu=np.array([1.0]))
        table = compute_invariants(f)
        assert table.columns["N1"][0] == pytest.approx(0.5, rel=1e-12)

    def test_viscosity_ratio(self):
        f = fields_from_tensors(np.zeros((1, 3, 3)), np.zeros((1, 3, 3)),
                                nu=np.array([1.0]), nut=np.array([3.0]))
        assert compute_invariants(f).columns["N2"][0] == pytest.approx(0.75)

    def test_temperature_gradient_invariant(self):
        g = np.array([[1.0, 2.0, -1.0]])
        f = fields_from_tensors(np.zeros((1, 3, 3)), np.zeros((1, 3, 3)),
                                grad_t=g)
        assert compute_invariants(f).columns["J1"][0] == pytest.approx(6.0)

    def test_n3_passthrough_and_alignment(self):
        f = fields_from_tensors(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)))
        table = compute_invariants(f, n3=np.array([0.1, 0.9]))
        assert np.array_equal(table.columns["N3"], [0.1, 0.9])
        with pytest.raises(DomainError):
            compute_invariants(f, n3=np.zeros(3))

    @given(hnp.arrays(np.float64, (6, 3),
                      elements=st.floats(-3, 3, allow_nan=False)))
    def test_rotation_invariant_never_positive(self, upper):
        W = np.zeros((6, 3, 3))
        W[:, 0, 1], W[:, 0, 2], W[:, 1, 2] = upper[:, 0], upper[:, 1], upper[:, 2]
        W = W - np.transpose(W, (0, 2, 1))
        f = fields_from_tensors(np.zeros((6, 3, 3)), W)
        assert np.all(compute_invariants(f).columns["I2"] <= 0.0)

    def test_validation_rejects_bad_tensors(self):
        S = np.zeros((1, 3, 3))
        S[0, 0, 1] = 1.0  # not symmetric
        with pytest.raises(DomainError):
            fields_from_tensors(S, np.zeros((1, 3, 3)))
        W = np.zeros((1, 3, 3))
        W[0, 0, 0] = 1.0  # not antisymmetric
        with pytest.raises(DomainError):
            fields_from_tensors(np.zeros((1, 3, 3)), W)

    def test_validation_rejects_nonpositive_omega(self):
        with pytest.raises(DomainError):
            fields_from_tensors(np.zeros((1, 3, 3)), np.zeros((1, 3, 3)),
                                omega=np.array([0.0]))

    def test_field_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        n = 3
        rows = []
        for _ in range(n):
            s_upper = rng.normal(size=6)
            w_upper = rng.normal(size=3)
            g = rng.normal(size=3)
            scal = [abs(rng.normal()) + 0.5 for _ in range(5)]
            rows.append(list(s_upper) + list(w_upper) + list(g) + scal)
        path = tmp_path / "fields.csv"
        with open(path, "w") as fh:
            fh.write(",".join(INVARIANT_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        fields = read_invariant_fields(path)
        table = compute_invariants(fields)
        assert table.n_rows == n
        assert np.all(np.isfinite(table.columns["I1"]))

    def test_field_file_header_must_match(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("A,B\n1,2\n")
        with pytest.raises(Exception):
            read_invariant_fields(path)


class TestEvaluationOutcome:
    def test_sentinel_invariant_enforced(self):
        EvaluationOutcome(objectives=np.array([1.0, 2.0]), converged=True)
        EvaluationOutcome(objectives=np.array([DIVERGENCE_SENTINEL] * 2),
                          converged=False)
        with pytest.raises(ValueError):
            EvaluationOutcome(objectives=np.array([1.0, 2.0]),
                              converged=False)

    def test_sentinel_value(self):
        assert DIVERGENCE_SENTINEL == 9999.0


class TestSymbolicBenchmark:
    def setup_method(self):
        rng = np.random.default_rng(7)
        self.table = FeatureTable(columns={
            "I1": rng.uniform(0.2, 1.0, size=12),
            "I2": rng.uniform(-1.0, -0.1, size=12)})
        self.bench = SymbolicBenchmark(self.table,
                                       targets=("I1*I1", "0.5 - I2"))

    def test_exact_recovery_scores_zero(self):
        trees = [parse_expression("I1*I1"), parse_expression("0.5 - I2")]
        out = self.bench.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert out.converged
        assert np.allclose(out.objectives, 0.0, atol=1e-12)

    def test_rms_of_constant_offset(self):
        trees = [parse_expression("I1*I1 + 1"), parse_expression("0.5 - I2")]
        out = self.bench.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert out.objectives[0] == pytest.approx(1.0, rel=1e-12)
        assert out.objectives[1] == pytest.approx(0.0, abs=1e-12)

    def test_counter_increments_per_evaluation(self):
        before = expensive_call_count()
        trees = [parse_expression("I1"), parse_expression("I2")]
        self.bench.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert expensive_call_count() == before + 1

    def test_overflow_trips_sentinel(self):
        table = FeatureTable(columns={"I1": np.array([1e300, 1e300])})
        bench = SymbolicBenchmark(table, targets=("I1",))
        trees = [parse_expression("I1*I1*I1")]
        out = bench.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert not out.converged
        assert np.all(out.objectives == DIVERGENCE_SENTINEL)

    def test_slot_map_routes_objectives(self):
        bench = SymbolicBenchmark(self.table, targets=("I1", "I1"),
                                  slot_of_objective=(0, 0))
        assert bench.n_slots == 1
        out = bench.evaluate([parse_expression("I1")],
                             ConstantsPool(values=(), seed=0))
        assert np.allclose(out.objectives, 0.0, atol=1e-12)

    def test_target_must_be_finite_on_table(self):
        table = FeatureTable(columns={"I1": np.array([1e300])})
        with pytest.raises(SetupError):
            SymbolicBenchmark(table, targets=("I1*I1*I1",))

    def test_needs_targets(self):
        with pytest.raises(SetupError):
            SymbolicBenchmark(self.table, targets=())


class TestChannelSolver:
    def test_truth_expressions_reproduce_reference(self):
        case = default_channel_case()
        ev_channel = ChannelEvaluator(case)
        trees = [parse_expression(e) for e in case.truth_exprs]
        out = ev_channel.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert out.converged
        assert np.all(out.objectives <= case.tol * 10)

    def test_zero_correction_baseline_converges(self):
        case = default_channel_case()
        out = solve_channel(case, parse_expression("0"),
                            None, parse_expression("0"))
        assert out.converged
        assert 0 < out.iterations <= case.max_iters
        assert np.all(out.objectives >= 0.0)

    def test_negative_diffusivity_diverges(self):
        case = default_channel_case()
        # Forcing alpha_expr to a large negative value makes the effective
        # thermal diffusivity negative, the canonical divergence mode.
        out = solve_channel(case, parse_expression("0"), None,
                            parse_expression("-1000"))
        assert not out.converged
        assert np.all(out.objectives == DIVERGENCE_SENTINEL)

    def test_evaluator_sentinel_on_divergence(self):
        case = default_channel_case()
        ev_channel = ChannelEvaluator(case)
        trees = [parse_expression("0"), parse_expression("-1000")]
        out = ev_channel.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert not out.converged
        assert np.all(out.objectives == DIVERGENCE_SENTINEL)

    def test_evaluator_interface(self):
        ev_channel = ChannelEvaluator(default_channel_case())
        assert ev_channel.n_objectives == 2
        assert ev_channel.terminals == ("I1", "J1")
        table = ev_channel.baseline_table()
        assert set(table.names) == {"I1", "J1"}
        assert np.all(np.isfinite(table.columns["I1"]))

    def test_wall_values_pinned(self):
        case = default_channel_case()
        u, T, _, ok = ev._solve_profiles(case, parse_expression("0"), None,
                                         parse_expression("0"), None,
                                         case.tol)
        assert ok
        assert T[0] == pytest.approx(case.wall_t[0], abs=1e-12)
        assert T[-1] == pytest.approx(case.wall_t[1], abs=1e-12)
        assert np.all(np.diff(T) < 0.0)

    def test_grid_and_profile_shapes(self):
        case = default_channel_case()
        y, h = case.grid()
        nut = case.nut_profile()
        assert y.shape == nut.shape == (case.n_cells,)
        assert y[0] == 0.0 and y[-1] == 1.0
        assert h == pytest.approx(1.0 / (case.n_cells - 1))
        assert np.all(nut >= 0)
        assert nut.max() == pytest.approx(case.nut_max, rel=0.01)

    def test_make_reference_rejects_diverging_truth(self):
        case = ChannelCase(truth_exprs=("0", "-1000"))
        with pytest.raises(SetupError):
            make_reference(case)

    def test_counter_increments(self):
        ev_channel = ChannelEvaluator(default_channel_case())
        before = expensive_call_count()
        trees = [parse_expression("0"), parse_expression("0")]
        ev_channel.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert expensive_call_count() == before + 1

    def test_three_slot_case(self):
        case = ChannelCase(truth_exprs=("-0.1 - I1", "0", "0.945 - 2.108*J1"))
        assert case.slot_names == ("g", "r", "alpha")
        ev_channel = ChannelEvaluator(case)
        trees = [parse_expression(e) for e in case.truth_exprs]
        out = ev_channel.evaluate(trees, ConstantsPool(values=(), seed=0))
        assert out.converged
        assert np.all(out.objectives <= case.tol * 10)


class TestLoadChannelCase:
    def test_defaults_round_trip(self, tmp_path):
        import json
        payload = {"n_cells": 32, "coupling": 12.0, "nut_max": 0.2,
                   "alpha_base": 2.0,
                   "truth": {"g": "-0.1 - I1", "alpha": "0.945 - 2.108*J1"}}
        path = tmp_path / "case.json"
        path.write_text(json.dumps(payload))
        case = load_channel_case(path)
        assert case.n_cells == 32
        assert case.truth_exprs == ("-0.1 - I1", "0.945 - 2.108*J1")
        assert case.reference_u is not None

    def test_unknown_fields_rejected(self):
        with pytest.raises(SetupError):
            load_channel_case({"bogus": 1,
                               "truth": {"g": "0", "alpha": "0"}})

    def test_unknown_truth_slot_rejected(self):
        with pytest.raises(SetupError):
            load_channel_case({"truth": {"g": "0", "alpha": "0", "zz": "0"}})

    def test_shipped_default_case_matches_builtin(self):
        case = load_channel_case("configs/channel_default.json")
        built = default_channel_case()
        assert case.n_cells == built.n_cells
        assert case.coupling == built.coupling
        assert case.nut_max == built.nut_max
        assert case.alpha_base == built.alpha_base
        assert case.truth_exprs == built.truth_exprs
