import numpy as np
import pytest

from certias.certifier import (
    BudgetExceededError,
    certify,
    halfplane_family,
    partition_step,
    sequence_key,
)
from certias.certifier import transition as certifier_transition
from certias.examples import double_integrator_problem, toy_problem
from certias.geometry import Polyhedron, bounding_box, contains, interior_point, is_empty
from certias.lpp import ErrorModel
from certias.mpqp import MpQP
from certias.solver import (
    DEGENERATE,
    DUAL_CHECK,
    PASS_INDEX,
    SLACK_CHECK,
    TERMINATED_ITER_LIMIT,
    SolverState,
    Tolerances,
    run,
)
from certias.solver import transition as solver_transition

from oracles import poly_contains_poly, poly_equal

EPS_P = 1e-6


def interval(lo, hi):
    return Polyhedron.box([lo], [hi])


def spans(region):
    lo, hi = bounding_box(region)
    return float(lo[0]), float(hi[0])


def regions_with_sequence(result, shape):
    enc = [(w, m) for w, m in shape]
    return [r for r in result.regions
            if [(s.working_set, s.mode) for s in r.sequence] == enc]


class TestSharedTransition:
    def test_same_function_object(self):
        assert certifier_transition is solver_transition


class TestHalfplaneFamily:
    def test_slack_family_shape(self):
        fams = halfplane_family(SolverState((), SLACK_CHECK), 3, Tolerances())
        assert len(fams) == 4
        A0, b0, idx0 = fams[0]
        assert idx0 == PASS_INDEX
        assert np.array_equal(A0, -np.eye(3))
        assert b0 == pytest.approx([EPS_P] * 3)
        A1, b1, idx1 = fams[1]
        assert idx1 == 0
        assert A1[0] == pytest.approx([1.0, 0.0, 0.0])
        assert b1[0] == pytest.approx(-EPS_P)
        # pairwise rows: z0 <= z1 and z0 <= z2
        assert A1[1] == pytest.approx([1.0, -1.0, 0.0])
        assert A1[2] == pytest.approx([1.0, 0.0, -1.0])

    def test_dual_family_uses_constraint_labels(self):
        state = SolverState((4, 1), DUAL_CHECK)
        fams = halfplane_family(state, 6, Tolerances())
        assert [idx for _, _, idx in fams] == [PASS_INDEX, 4, 1]
        assert fams[0][0].shape == (2, 2)

    def test_terminal_state_rejected(self):
        with pytest.raises(ValueError):
            halfplane_family(SolverState((), "terminated_optimal"), 2, Tolerances())


class TestPartitionStep:
    def test_toy_nominal_split(self):
        prob = toy_problem()
        out = partition_step(prob.theta_set, SolverState((), SLACK_CHECK), prob,
                             Tolerances(), ErrorModel(), 0)
        by_index = {idx: reg for idx, reg in out}
        assert set(by_index) == {PASS_INDEX, 0}
        assert poly_equal(by_index[PASS_INDEX], interval(-1.0 - EPS_P, 3.0))
        assert poly_equal(by_index[0], interval(-3.0, -1.0 - EPS_P))

    def test_toy_inflated_split_overlaps(self):
        prob = toy_problem()
        model = ErrorModel(kind="hypercube", bound=0.1)
        out = partition_step(prob.theta_set, SolverState((), SLACK_CHECK), prob,
                             Tolerances(), model, 0)
        by_index = {idx: reg for idx, reg in out}
        assert poly_equal(by_index[PASS_INDEX], interval(-1.1 - EPS_P, 3.0))
        assert poly_equal(by_index[0], interval(-3.0, -0.9 - EPS_P))
        lo1, hi1 = spans(by_index[PASS_INDEX])
        lo2, hi2 = spans(by_index[0])
        assert hi2 - lo1 == pytest.approx(0.2, abs=1e-9)

    def test_subset_region_only_terminates(self):
        prob = toy_problem()
        inside = interval(1.0, 2.0)  # slack 1+theta >= 2 everywhere
        out = partition_step(inside, SolverState((), SLACK_CHECK), prob,
                             Tolerances(), ErrorModel(), 0)
        assert len(out) == 1 and out[0][0] == PASS_INDEX

    def test_dual_split_with_dual_perturbation(self):
        prob = toy_problem()
        state = SolverState((0,), DUAL_CHECK)
        model = ErrorModel(kind="hypercube", bound=0.1, perturb_dual=True)
        out = partition_step(prob.theta_set, state, prob, Tolerances(), model, 1)
        by_index = {idx: reg for idx, reg in out}
        # multiplier map is -1-theta; pass needs it >= -eps_d (minus spread)
        assert poly_equal(by_index[PASS_INDEX], interval(-3.0, -0.9 + EPS_P))
        assert poly_equal(by_index[0], interval(-1.1 + EPS_P, 3.0))

    def test_dual_split_exact_without_flag(self):
        prob = toy_problem()
        state = SolverState((0,), DUAL_CHECK)
        model = ErrorModel(kind="hypercube", bound=0.1)  # slack errors only
        out = partition_step(prob.theta_set, state, prob, Tolerances(), model, 1)
        by_index = {idx: reg for idx, reg in out}
        assert poly_equal(by_index[PASS_INDEX], interval(-3.0, -1.0 + EPS_P))
        assert poly_equal(by_index[0], interval(-1.0 + EPS_P, 3.0))

    def test_relative_model_converts_against_region(self):
        prob = toy_problem()
        model = ErrorModel(kind="relative", rel_bound=0.1)
        out = partition_step(prob.theta_set, SolverState((), SLACK_CHECK), prob,
                             Tolerances(), model, 0)
        # max |1+theta| over [-3,3] is 4, so the bound converts to 0.4.
        by_index = {idx: reg for idx, reg in out}
        assert poly_equal(by_index[PASS_INDEX], interval(-1.4 - EPS_P, 3.0))

    def test_singular_state_rejected(self):
        prob = toy_problem()
        with pytest.raises(ValueError, match="singular"):
            partition_step(prob.theta_set, SolverState((0, 0), DUAL_CHECK), prob,
                           Tolerances(), ErrorModel(), 2)


class TestCertifyToyExact:
    def test_two_region_partition(self):
        prob = toy_problem()
        res = certify(prob)
        assert len(res.regions) == 2
        two, one = res.regions
        assert [r.iterations for r in res.regions] == [2, 1]
        assert {r.status for r in res.regions} == {"optimal"}
        assert poly_equal(two.region, interval(-3.0, -1.0 - EPS_P))
        assert poly_equal(one.region, interval(-1.0 - EPS_P, 3.0))
        assert [(s.working_set, s.mode) for s in one.sequence] == [
            ((), "slack_check"), ((), "terminated_optimal")]
        assert [(s.working_set, s.mode) for s in two.sequence] == [
            ((), "slack_check"), ((0,), "dual_check"),
            ((0,), "slack_check"), ((0,), "terminated_optimal")]

    def test_conformance_sampled(self):
        prob = toy_problem()
        res = certify(prob)
        rng = np.random.default_rng(5)
        checked = 0
        for theta in rng.uniform(-3.0, 3.0, size=400):
            if abs(theta - (-1.0 - EPS_P)) < 1e-7:
                continue
            hosts = [r for r in res.regions if contains(r.region, [theta], 1e-9)]
            assert hosts, f"no region holds theta={theta}"
            realized = run(prob, [theta]).sequence
            assert any(tuple(r.sequence) == tuple(realized) for r in hosts)
            checked += 1
        assert checked >= 398

    def test_single_point_parameter_set(self):
        base = toy_problem()
        prob = MpQP(H=base.H, C=base.C, f_lin=base.f_lin, f_const=base.f_const,
                    d_lin=base.d_lin, d_const=base.d_const,
                    theta_set=Polyhedron.box([-2.0], [-2.0]))
        res = certify(prob)
        assert len(res.regions) == 1
        assert tuple(res.regions[0].sequence) == tuple(run(base, [-2.0]).sequence)

    def test_problem_digest_and_settings(self):
        prob = toy_problem()
        res = certify(prob, tol=Tolerances(eps_primal=1e-5, iter_limit=9))
        assert res.problem_digest == prob.digest()
        assert res.settings["eps_primal"] == 1e-5
        assert res.settings["eps_dual"] == 1e-5
        assert res.settings["iter_limit"] == 9
        assert res.settings["error_model"] == {"kind": "none"}
        assert "workers" not in res.settings
        assert res.stats["regions"] == len(res.regions)
        assert res.stats["lp_calls"] > 0

    def test_trace_recording(self):
        prob = toy_problem()
        res = certify(prob, record_trace=True)
        assert res.trace is not None and len(res.trace) >= 3
        for rec in res.trace:
            for _, kid in rec.children:
                assert poly_contains_poly(kid, rec.region)
        root = [t for t in res.trace if t.step_k == 0]
        assert len(root) == 1 and root[0].slack_depth == 0
        assert certify(prob).trace is None


@pytest.fixture(scope="module")
def inflated_result():
    return certify(toy_problem(), model=ErrorModel(kind="hypercube", bound=0.1))


@pytest.fixture(scope="module")
def mpc_problem():
    return double_integrator_problem()


@pytest.fixture(scope="module")
def mpc_result(mpc_problem):
    return certify(mpc_problem)


class TestCertifyToyInflated:
    @pytest.fixture
    def result(self, inflated_result):
        return inflated_result

    def test_leaf_statuses(self, result):
        statuses = {r.status for r in result.regions}
        assert statuses == {"optimal", "iter_limit", "degenerate"}

    def test_one_and_two_iteration_sequences_overlap(self, result):
        one = regions_with_sequence(result, [((), SLACK_CHECK), ((), "terminated_optimal")])
        two = regions_with_sequence(result, [
            ((), SLACK_CHECK), ((0,), DUAL_CHECK),
            ((0,), SLACK_CHECK), ((0,), "terminated_optimal")])
        assert len(one) == 1 and len(two) == 1
        assert poly_equal(one[0].region, interval(-1.1 - EPS_P, 3.0))
        cap = one[0].region.intersect(two[0].region.A, two[0].region.b)
        _, radius = interior_point(cap)
        assert radius > 1e-3

    def test_iter_limit_leaves(self, result):
        capped = [r for r in result.regions if r.status == "iter_limit"]
        assert capped
        for r in capped:
            assert r.iterations == 15
            assert r.sequence[-1].mode == TERMINATED_ITER_LIMIT

    def test_degenerate_leaves_carry_duplicate_row(self, result):
        degen = [r for r in result.regions if r.status == "degenerate"]
        assert degen
        for r in degen:
            assert r.sequence[-1].mode == DEGENERATE
            W = r.sequence[-1].working_set
            assert len(W) != len(set(W))

    def test_cover(self, result):
        rng = np.random.default_rng(11)
        for theta in rng.uniform(-3.0, 3.0, size=500):
            assert any(contains(r.region, [theta], 1e-9) for r in result.regions)

    def test_nominal_regions_contained_in_inflated(self, result):
        exact = certify(toy_problem())
        for r0 in exact.regions:
            match = [r for r in result.regions
                     if sequence_key(r.sequence) == sequence_key(r0.sequence)]
            assert len(match) == 1
            assert poly_contains_poly(r0.region, match[0].region)

    def test_worker_count_does_not_change_output(self, result):
        alt = certify(toy_problem(), model=ErrorModel(kind="hypercube", bound=0.1),
                      workers=4)
        assert len(alt.regions) == len(result.regions)
        for a, b in zip(alt.regions, result.regions):
            assert sequence_key(a.sequence) == sequence_key(b.sequence)
            assert np.array_equal(a.region.A, b.region.A)
            assert np.array_equal(a.region.b, b.region.b)
            assert a.status == b.status and a.iterations == b.iterations

    def test_budget_cap(self):
        with pytest.raises(BudgetExceededError):
            certify(toy_problem(), model=ErrorModel(kind="hypercube", bound=0.1),
                    max_live=1)


class TestCertifyMpc:
    @pytest.fixture
    def prob(self, mpc_problem):
        return mpc_problem

    @pytest.fixture
    def result(self, mpc_result):
        return mpc_result

    def test_all_optimal_with_moderate_worst_case(self, prob, result):
        assert all(r.status == "optimal" for r in result.regions)
        worst = max(r.iterations for r in result.regions)
        assert 2 <= worst <= 10
        assert len(result.regions) >= 4

    def test_sampled_conformance(self, prob, result):
        rng = np.random.default_rng(23)
        lo, hi = bounding_box(prob.theta_set)
        checked = 0
        for _ in range(300):
            theta = rng.uniform(lo, hi)
            if not contains(prob.theta_set, theta, 1e-9):
                continue
            hosts = [r for r in result.regions if contains(r.region, theta, 1e-9)]
            assert hosts
            near_boundary = any(
                abs(a @ theta - bb) / max(np.linalg.norm(a), 1e-30) < 1e-7
                for r in hosts for a, bb in zip(r.region.A, r.region.b))
            if near_boundary:
                continue
            realized = run(prob, theta).sequence
            assert any(tuple(r.sequence) == tuple(realized) for r in hosts)
            checked += 1
        assert checked > 200

    def test_interior_points_not_shared(self, prob, result):
        # Exact arithmetic: regions tile the parameter set without overlap.
        rng = np.random.default_rng(31)
        lo, hi = bounding_box(prob.theta_set)
        tested = 0
        for _ in range(400):
            theta = rng.uniform(lo, hi)
            if not contains(prob.theta_set, theta, 1e-9):
                continue
            hosts = [r for r in result.regions if contains(r.region, theta, -1e-7)]
            assert len(hosts) <= 1
            tested += 1
        assert tested > 300

    def test_iterations_match_sequence(self, result):
        for r in result.regions:
            n_slack = sum(1 for s in r.sequence if s.mode == SLACK_CHECK)
            assert r.iterations == n_slack


class TestCanonicalOrder:
    def test_sequence_key_orders_modes_then_sets(self):
        a = sequence_key((SolverState((), SLACK_CHECK),))
        b = sequence_key((SolverState((), DUAL_CHECK),))
        c = sequence_key((SolverState((1,), SLACK_CHECK),))
        assert a < b and a < c

    def test_keys_unique_across_results(self):
        res = certify(toy_problem(), model=ErrorModel(kind="hypercube", bound=0.1))
        keys = [sequence_key(r.sequence) for r in res.regions]
        assert len(keys) == len(set(keys))
        assert keys == sorted(keys)
