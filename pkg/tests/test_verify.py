import json
import math

import numpy as np
import pytest
from scipy import stats

from growthfrag.bifurcator import PreconditionError
from growthfrag.cellsystem import CellModel, ResourceLimits, simulate_cell_system, snapshot
from growthfrag.levy import ConfigurationError, SnlpCharacteristics, cumulant, laplace_exponent
from growthfrag.rng import RandomStream
from growthfrag.switching import ConstantSwitch
from growthfrag.verify import (
    ALPHA,
    ExperimentReport,
    exponentiality_test,
    ks_two_sample,
    mean_and_se,
    run_replicas,
    verify_calibration,
    verify_cumulant_martingale,
    verify_excessive,
    verify_fdd_equality,
    verify_potential,
    verify_self_similarity,
    verify_switching,
)

from conftest import LOG2, LOG4, atom_chars


def _draw(stream, scale):
    return scale * stream.generator.random()


class TestKolmogorovSmirnov:
    def test_identical(self):
        d, p = ks_two_sample([0.3, 1.2, 5.0], [0.3, 1.2, 5.0])
        assert d == 0.0 and p == 1.0

    def test_disjoint(self):
        assert ks_two_sample([0, 1], [2, 3])[0] == 1.0

    def test_hand_ecdf(self):
        assert ks_two_sample([1, 2, 3, 4], [1.5, 2.5, 3.5, 4.5])[0] == pytest.approx(0.25)

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_two_sample([], [1.0])

    def test_float_ties_merged(self):
        a = np.full(500, math.exp(0.75) * 0.75)
        b = np.full(500, math.exp(0.75) * 3 / 4 * (1 + 1e-15))
        assert ks_two_sample(a, b)[0] == 0.0

    def test_matches_scipy_without_ties(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=300), rng.normal(0.1, size=400)
        ref = stats.ks_2samp(a, b, method="asymp")
        d, p = ks_two_sample(a, b)
        assert d == pytest.approx(ref.statistic) and p == pytest.approx(ref.pvalue)


class TestExponentiality:
    def test_calibration(self):
        fails = sum(exponentiality_test(np.random.default_rng(s).exponential(0.5, 10_000), 2.0) <= 0.01
                    for s in range(1000))
        # failure count consistent with the nominal 1% level
        assert stats.binomtest(fails, 1000, 0.01).pvalue > 0.01

    def test_degenerate(self):
        assert exponentiality_test(np.full(1000, 1.0), 1.0) < 1e-10

    def test_power(self):
        x = np.random.default_rng(1).exponential(1.0, 10_000)
        assert exponentiality_test(x, 2.0) < 0.01

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            exponentiality_test([1.0, 0.0], 1.0)


class TestReplicas:
    def test_thread_count_irrelevant(self):
        a = run_replicas(_draw, (2.0,), 200, 5, 3, threads=1)
        b = run_replicas(_draw, (2.0,), 200, 5, 3, threads=2)
        assert a == b

    def test_stream_layout(self):
        out = run_replicas(_draw, (1.0,), 3, 9, 4)
        assert out == [RandomStream(9, (4, i)).generator.random() for i in range(3)]

    def test_mean_and_se(self):
        m, se = mean_and_se([1.0, 2.0, 3.0])
        assert m == 2.0 and se == pytest.approx(1 / math.sqrt(3))


class TestReport:
    def test_flagged_when_incomplete(self):
        rep = ExperimentReport("x", {}, 1, 1000)
        rep.add_test("t", True)
        assert rep.finalize(2).verdict == "flagged"

    def test_fail(self):
        rep = ExperimentReport("x", {}, 1, 1000)
        rep.add_test("t", False)
        assert rep.finalize(0).verdict == "fail"

    def test_json_safe(self):
        rep = ExperimentReport("x", {"a": math.inf}, 1, 10)
        rep.samples["s"] = (np.zeros(2), np.ones(2))
        doc = json.loads(rep.finalize(0).to_json())
        assert doc["parameters"]["a"] == "inf" and "samples" not in doc


class TestCumulantMartingale:
    def test_time_zero(self, binary_split_model):
        rep = verify_cumulant_martingale(binary_split_model.with_start(2.0), 2.0, 0.0, 50, 1)
        assert rep.estimates["mean_q_mass"]["value"] == 4.0 and rep.passed

    def test_no_jumps_reference(self):
        chars = SnlpCharacteristics(c=0.3)
        rep = verify_cumulant_martingale(CellModel(chars), 2.0, 1.0, 20, 1)
        assert rep.references["mean_q_mass"]["value"] == pytest.approx(math.exp(laplace_exponent(chars, 2.0)))
        assert rep.estimates["mean_q_mass"]["value"] == pytest.approx(math.exp(0.6), rel=1e-12)
        assert rep.passed

    def test_binary_split(self, binary_split_model):
        rep = verify_cumulant_martingale(binary_split_model, 2.0, 1.0, 3000, 2)
        assert rep.references["mean_q_mass"]["value"] == pytest.approx(math.exp(0.5), abs=1e-12)
        assert rep.passed

    def test_self_similar_rejected(self):
        with pytest.raises(PreconditionError):
            verify_cumulant_martingale(CellModel(atom_chars([(-LOG2, 1.0)], kill=1.0), alpha=1.0), 2.0, 1.0, 10, 1)

    def test_reproducible(self, binary_split_model):
        a = verify_cumulant_martingale(binary_split_model, 2.0, 0.5, 200, 3).to_json()
        assert a == verify_cumulant_martingale(binary_split_model, 2.0, 0.5, 200, 3).to_json()


class TestFddEquality:
    def test_identical_models(self, three_quarter):
        m = CellModel(three_quarter)
        assert verify_fdd_equality(m, m, [0.5, 1.0], 1000, 4).passed

    def test_matched_pair_small(self, quarter, three_quarter):
        rep = verify_fdd_equality(CellModel(quarter), CellModel(three_quarter), [0.5, 1.0], 1000, 5)
        assert rep.passed and len(rep.tests) == 6
        assert rep.parameters["bonferroni_level"] == pytest.approx(ALPHA / 6)

    def test_mismatch_rejected(self, quarter):
        with pytest.raises(PreconditionError, match="symmetrised atoms"):
            verify_fdd_equality(CellModel(quarter), CellModel(atom_chars([(-LOG4, 2.0)])), [1.0], 10, 1)

    def test_negative_control_fails(self, quarter):
        rep = verify_fdd_equality(CellModel(quarter), CellModel(atom_chars([(-LOG4, 2.0)])), [0.5, 1.0],
                                  2000, 6, require_same_kappa=False)
        assert rep.verdict == "fail"


class TestSelfSimilarity:
    def test_homogeneous_exact_scaling(self, quarter):
        model = CellModel(quarter)
        c = 2.5
        for i in range(10):
            small = simulate_cell_system(model, 1e-4, 1.0, rng=RandomStream(1, (i,)))
            big = simulate_cell_system(model.with_start(c), c * 1e-4, 1.0, rng=RandomStream(1, (i,)))
            for t in (0.5, 1.0):
                np.testing.assert_allclose(c * snapshot(small, t).sizes, snapshot(big, t).sizes, rtol=1e-12)

    def test_unit_scale(self, three_quarter):
        assert verify_self_similarity(CellModel(three_quarter), 1.0, [0.5], 1000, 7).passed

    def test_self_similar_pair(self):
        model = CellModel(atom_chars([(-LOG2, 1.0)], c=-1.0), alpha=0.5)
        assert verify_self_similarity(model, 2.0, [0.25, 0.5], 1000, 8, eps=1e-3).passed

    def test_bad_scale(self, quarter):
        with pytest.raises(ConfigurationError):
            verify_self_similarity(CellModel(quarter), 0.0, [0.5], 10, 1)


class TestExcessive:
    def test_binary_split_eta(self, binary_split_model):
        rep = verify_excessive(binary_split_model, 2.0, 1.0, 0.0, 1.0, 4000, 9, tree_replicas=500)
        assert rep.references["eta"]["value"] == pytest.approx(1 / 3, abs=1e-12)
        assert rep.passed

    def test_no_jumps(self):
        rep = verify_excessive(CellModel(SnlpCharacteristics(c=-0.5)), 2.0, 1.0, 0.0, 1.0, 100, 1)
        assert rep.estimates["jump_statistic"]["value"] == 0.0 and rep.passed

    def test_preconditions(self, binary_split_model):
        with pytest.raises(PreconditionError):
            verify_excessive(binary_split_model, 2.0, 0.4, 0.0, 1.0, 10, 1)
        ss = CellModel(atom_chars([(-LOG2, 1.0)], c=-1.0), alpha=0.5)
        with pytest.raises(PreconditionError):
            verify_excessive(ss, 2.0, 1.0, 0.0, 1.0, 10, 1)

    def test_self_similar_eta(self):
        chars = atom_chars([(-LOG2, 1.0)], c=-1.0)
        rep = verify_excessive(CellModel(chars, alpha=0.5), 2.0, 0.0, 0.0, 1.0, 2000, 10, tree_replicas=300)
        assert rep.references["eta"]["value"] == pytest.approx(1 - cumulant(chars, 2.0) / laplace_exponent(chars, 2.0))
        assert rep.passed


class TestPotential:
    def test_reciprocal_single_cell(self):
        model = CellModel(SnlpCharacteristics(c=-0.25))
        rep = verify_potential(model, 2.0, 60.0, 5, 1, eps=1e-20)
        assert rep.references["potential"]["value"] == pytest.approx(2.0)
        assert rep.estimates["mean_potential"]["value"] == pytest.approx(2.0 * (1 - math.exp(-30.0)), rel=1e-12)
        assert rep.passed

    def test_positive_cumulant_rejected(self, binary_split_model):
        with pytest.raises(PreconditionError):
            verify_potential(binary_split_model, 2.0, 1.0, 10, 1)


class TestSwitchingSuite:
    def test_quarter_constant(self, quarter):
        rep = verify_switching(quarter, ConstantSwitch(0.3), 3000, 11)
        assert rep.references["switch_rate"]["value"] == pytest.approx(0.3)
        assert rep.passed


class TestCalibration:
    def test_small(self, three_quarter):
        rep = verify_calibration(CellModel(three_quarter), [1.0], 200, 1, n_seeds=5)
        assert len(rep.diagnostics["min_p_values"]) == 5
        assert rep.verdict in ("pass", "fail")
