import numpy as np
import pytest

from coadopt.dynamics import InjectionEvent, Trajectory, simulate
from coadopt.equilibrium import Equilibrium, adoption_free_equilibrium, solve_adoption_diffused
from coadopt.model import SystemState, early_stage_state, random_instance
from coadopt.verify import (
    PROPERTY_IDS,
    check_coexistence,
    check_instability,
    check_invariance,
    check_monotone_susceptibles,
    check_no_partial_adoption,
    check_opinion_floor,
    cross_validate,
    run_property_suite,
)


def _with_replaced_state(tr: Trajectory, t: int, st: SystemState) -> Trajectory:
    states = list(tr.states)
    states[t] = st
    return Trajectory(states=tuple(states), events=tr.events,
                      config_digest=tr.config_digest)


def _mutated(st: SystemState, block: str, node: int, value: float) -> SystemState:
    blocks = {b: st.block(b).copy() for b in ("s", "a1", "a2", "d1", "d2", "x1", "x2")}
    blocks[block][node] = value
    return SystemState(**blocks)


@pytest.fixture(scope="module")
def run10():
    cfg = random_instance(10, 21)
    tr = simulate(cfg, early_stage_state(cfg, 0.01), 400)
    return cfg, tr


class TestInvariance:
    def test_valid_run_passes(self, run10):
        _, tr = run10
        rep = check_invariance(tr, tol=1e-9)
        assert rep.passed
        assert rep.property_id == "invariance"

    def test_corrupted_entry_fails_with_location(self, run10):
        _, tr = run10
        bad = _with_replaced_state(tr, 7, _mutated(tr.states[7], "a1", 3, 1.5))
        rep = check_invariance(bad, tol=1e-9)
        assert not rep.passed
        assert rep.location == (7, 3)
        assert rep.worst >= 0.5

    def test_single_state_trajectory(self, e1):
        tr = simulate(e1, early_stage_state(e1, 0.01), 0)
        assert check_invariance(tr, tol=1e-12).passed


class TestMonotoneSusceptibles:
    def test_valid_run_passes(self, run10):
        _, tr = run10
        assert check_monotone_susceptibles(tr).passed

    def test_injection_steps_exempt(self):
        cfg = random_instance(6, 22)
        st0 = early_stage_state(cfg, 0.01, which=(1,))
        tr = simulate(cfg, st0, 60, events=[InjectionEvent(30, 2, 0.01)])
        assert check_monotone_susceptibles(tr).passed

    def test_corrupted_growth_fails(self, run10):
        _, tr = run10
        grown = _mutated(tr.states[5], "s", 2, float(tr.states[4].s[2]) + 0.01)
        bad = _with_replaced_state(tr, 5, grown)
        rep = check_monotone_susceptibles(bad)
        assert not rep.passed
        assert rep.location == (5, 2)


class TestOpinionFloor:
    def test_valid_run_passes(self, run10):
        cfg, tr = run10
        assert check_opinion_floor(tr, cfg).passed

    def test_corrupted_opinion_fails(self, run10):
        cfg, tr = run10
        bad = _with_replaced_state(tr, 3, _mutated(tr.states[3], "x1", 0, 0.0))
        rep = check_opinion_floor(bad, cfg)
        assert not rep.passed
        assert rep.location == (3, 0)


class TestInstability:
    @pytest.mark.parametrize("eps", [0.01, 0.1, 0.5])
    def test_perturbation_never_decays(self, eps):
        cfg = random_instance(8, 23)
        rep = check_instability(cfg, eps=eps, horizon=300)
        assert rep.passed
        assert rep.worst >= eps - 1e-15

    def test_report_mentions_final_distance(self, e1):
        rep = check_instability(e1, eps=0.05, horizon=50)
        assert rep.passed
        assert "final" in rep.note

    def test_rejects_bad_eps(self, e1):
        with pytest.raises(ValueError):
            check_instability(e1, eps=1.5)


class TestEquilibriumShape:
    def test_diffused_has_no_partial_adoption(self, e1):
        eq = solve_adoption_diffused(e1, tol=1e-10)
        assert check_no_partial_adoption(eq, tol=1e-9).passed

    def test_adoption_free_also_passes(self, e1):
        eq = adoption_free_equilibrium(e1)
        assert check_no_partial_adoption(eq, tol=1e-9).passed

    def test_mixed_pattern_fails(self):
        st = SystemState(s=[0.0, 1.0], a1=[0.5, 0.0], a2=[0.3, 0.0],
                         d1=[0.1, 0.0], d2=[0.1, 0.0], x1=[0.5, 0.5], x2=[0.5, 0.5])
        eq = Equilibrium(state=st, kind="adoption-diffused", residual=0.0,
                         iterations=0, converged=True)
        rep = check_no_partial_adoption(eq, tol=1e-9)
        assert not rep.passed
        assert "mixed" in rep.note

    def test_coexistence_passes_with_ratio(self, e1):
        eq = solve_adoption_diffused(e1, tol=1e-10)
        rep = check_coexistence(eq, tol=1e-9)
        assert rep.passed
        assert eq.state.a2[0] / eq.state.a1[0] == pytest.approx(2.0, abs=1e-8)

    def test_monopoly_fails(self, e1):
        st = SystemState(s=[0.0], a1=[0.6], a2=[0.0], d1=[0.4], d2=[0.0],
                         x1=[0.5], x2=[0.5])
        eq = Equilibrium(state=st, kind="adoption-diffused", residual=0.0,
                         iterations=0, converged=True)
        rep = check_coexistence(eq, tol=1e-9)
        assert not rep.passed
        assert "monopoly" in rep.note

    def test_coexistence_across_seeds(self):
        for seed in range(20):
            cfg = random_instance(6, seed)
            eq = solve_adoption_diffused(cfg, tol=1e-10)
            assert check_coexistence(eq, tol=1e-9).passed
            assert check_no_partial_adoption(eq, tol=1e-9).passed


class TestCrossValidate:
    def test_report_structure(self, e1):
        cv = cross_validate(e1, horizon=200)
        assert set(cv.distances) == {"s", "a1", "a2", "d1", "d2", "x1", "x2"}
        assert cv.solver_converged
        assert cv.max_distance >= 0.0

    def test_horizon_zero_distance_is_initial_gap(self, e1):
        eq = solve_adoption_diffused(e1, tol=1e-10)
        st0 = early_stage_state(e1, 0.01)
        cv = cross_validate(e1, horizon=0)
        for b in cv.distances:
            assert cv.distances[b] == pytest.approx(
                float(np.abs(st0.block(b) - eq.state.block(b)).max()), abs=1e-9)

    def test_long_run_approaches_equilibrium(self):
        # empirical regression, not a theorem: pinned loosely for this instance
        cfg = random_instance(10, 24)
        cv = cross_validate(cfg, horizon=5000)
        assert cv.max_distance <= 1e-6


class TestSuite:
    def test_passes_on_full_instance_matrix(self):
        # default tolerances across the whole size/seed matrix
        for n in (1, 2, 10, 50):
            for seed in range(25):
                reports = run_property_suite(random_instance(n, seed))
                bad = [r for r in reports if not r.passed]
                assert not bad, (n, seed, [r.line(f"{n}/{seed}") for r in bad])

    def test_six_reports_in_order(self):
        cfg = random_instance(8, 25)
        reports = run_property_suite(cfg, horizon=300)
        assert tuple(r.property_id for r in reports) == PROPERTY_IDS
        assert all(r.passed for r in reports)

    def test_line_format(self):
        cfg = random_instance(4, 26)
        rep = run_property_suite(cfg, horizon=100)[0]
        line = rep.line("abc123")
        assert line.startswith("abc123 invariance pass worst=")
        assert "at=(" in line

    def test_checkers_are_pure(self, run10):
        cfg, tr = run10
        before = [st.as_matrix().copy() for st in tr.states]
        check_invariance(tr)
        check_monotone_susceptibles(tr)
        check_opinion_floor(tr, cfg)
        assert all(np.array_equal(b, st.as_matrix())
                   for b, st in zip(before, tr.states))
