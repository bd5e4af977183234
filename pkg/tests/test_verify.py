import math

import numpy as np
import pytest

from rankflow import InitialProfile, JumpRateLaw, LimitField, init
from rankflow import verify as vr

TWO_ATOM = InitialProfile.factorized(JumpRateLaw.from_atoms([(1.0, 0.5), (2.0, 0.5)]))
DELTA1 = InitialProfile.factorized(JumpRateLaw.delta(1.0))
FIELD2 = LimitField(TWO_ATOM)


class TestNaiveReference:
    def test_worked_example_sequence(self):
        tables = vr.naive_reference(
            DELTA1, 4, 1,
            checkpoints=[0.1, 0.2, 0.3, 0.4],
            initial_order=[3, 1, 2, 4],
            event_override=[(0.05, 1), (0.15, 2), (0.25, 4), (0.35, 1)],
        )
        seen = ["".join(str(i + 1) for i in np.argsort(p)) for p in tables]
        assert seen == ["1324", "2134", "4213", "1423"]

    def test_single_particle_pinned_to_front(self):
        tables = vr.naive_reference(DELTA1, 1, 3, checkpoints=[0.5, 5.0])
        assert all(p.tolist() == [1] for p in tables)

    def test_matches_fast_engine_bit_for_bit(self):
        checkpoints = list(np.linspace(0.1, 5.0, 50))
        for seed in (0, 1):
            state = init(TWO_ATOM, 200, seed)
            reference = vr.naive_reference(TWO_ATOM, 200, seed, checkpoints)
            for cp, ref in zip(checkpoints, reference):
                state.advance_to(cp)
                assert np.array_equal(state.positions(), ref), (seed, cp)

    def test_size_cap(self):
        with pytest.raises(ValueError):
            vr.naive_reference(TWO_ATOM, 2001, 0, checkpoints=[1.0])


class TestConditionalOracle:
    def test_time_zero_is_initial_rank(self):
        got = vr.conditional_position_oracle(TWO_ATOM, 100, 3, 42, 0.0)
        assert got == 43.0

    def test_two_particle_bernoulli(self):
        # front particle of two unit-rate particles at t = ln 2
        prof = DELTA1
        got = vr.conditional_position_oracle(prof, 2, 0, 0, math.log(2.0))
        assert got == pytest.approx(1.5, abs=1e-12)

    def test_closed_form_midpack(self):
        got = vr.conditional_position_oracle(DELTA1, 100, 3, 49, 1.0)
        assert got == pytest.approx(50 + 50 * (1 - math.exp(-1)), abs=1e-12)

    def test_battery_within_band(self):
        pairs = [(49, 1.0), (9, 0.5), (89, 0.25), (29, 2.0)]
        checks = vr.conditional_mean_battery(DELTA1, 100, 3, pairs, 1500)
        assert all(c.kept > 50 for c in checks)
        assert sum(not c.ok for c in checks) == 0


class TestInitialProfileDiscrepancy:
    def test_decreases_with_system_size(self):
        ys = np.linspace(0.05, 0.95, 19)
        for g in (lambda w: np.ones_like(w), lambda w: w):
            sups = [
                vr.initial_profile_discrepancy(TWO_ATOM, n, 77, g, ys)
                for n in (10**3, 10**4, 10**5)
            ]
            assert sups[0] > sups[1] > sups[2]
            slope = np.polyfit(np.log([10**3, 10**4, 10**5]), np.log(sups), 1)[0]
            assert slope <= -0.35


class TestKsDistance:
    def test_lattice_initial_data(self):
        state = init(TWO_ATOM, 1000, 5)
        ys = np.linspace(0.05, 0.95, 19)
        assert vr.ks_distance(state.snapshot(), None, ys) <= 1.0 / 1000 + 1e-12

    def test_large_system_band(self):
        state = init(TWO_ATOM, 10**5, 6)
        state.advance_to(1.0)
        ys = np.linspace(0.05, 0.95, 19)
        assert vr.ks_distance(state.snapshot(), None, ys) <= 0.01

    def test_field_variant_agrees(self):
        state = init(TWO_ATOM, 2000, 6)
        state.advance_to(0.5)
        ys = [0.2, 0.5, 0.8]
        a = vr.ks_distance(state.snapshot(), None, ys)
        b = vr.ks_distance(state.snapshot(), FIELD2, ys)
        assert a == pytest.approx(b, abs=1e-9)


class TestMarginalReconstruction:
    def test_panel_count_controls_error(self):
        _, coarse = vr.reconstruct_marginal(FIELD2, 1.0, panels=100)
        _, fine = vr.reconstruct_marginal(FIELD2, 1.0, panels=2000)
        err_c = np.max(np.abs(coarse - [0.5, 0.5]))
        err_f = np.max(np.abs(fine - [0.5, 0.5]))
        assert err_f < err_c


class TestConvergenceStudy:
    def test_validation(self):
        with pytest.raises(ValueError):
            vr.convergence_study(FIELD2, TWO_ATOM, [100, 200], 2, [0.5], [1.0])
        with pytest.raises(ValueError):
            vr.convergence_study(FIELD2, TWO_ATOM, [100, 200, 50], 2, [0.5], [1.0])
        with pytest.raises(ValueError):
            vr.convergence_study(FIELD2, TWO_ATOM, [100, 200, 400], 0, [0.5], [1.0])
        with pytest.raises(ValueError):
            vr.convergence_study(FIELD2, TWO_ATOM, [100, 200, 400], 2, [], [1.0])

    def test_report_structure_and_decay(self):
        report = vr.convergence_study(
            FIELD2, TWO_ATOM,
            ns=[250, 1000, 4000],
            replicas=6,
            grid_y=[0.2, 0.5, 0.8],
            grid_t=[0.5, 1.0],
            seed=5,
        )
        names = [t.name for t in report.tracks]
        assert names == ["boundary", "stat[1]", "stat[w]", "stat[exp(-w)]", "flow"]
        for track in report.tracks:
            assert len(track.rms) == 3
            assert track.rms[0] > track.rms[-1]  # 16x size gap must show
        rows = report.csv_rows()
        assert rows[0] == "observable,N,rms,tolerance,pass"
        assert len(rows) == 1 + 5 * 3
        assert "boundary" in report.summary()

    def test_replica_seeds_differ(self):
        # same study twice is deterministic; different master seed differs
        kw = dict(
            ns=[250, 500, 1000], replicas=3,
            grid_y=[0.5], grid_t=[1.0],
        )
        a = vr.convergence_study(FIELD2, TWO_ATOM, seed=1, **kw)
        b = vr.convergence_study(FIELD2, TWO_ATOM, seed=1, **kw)
        c = vr.convergence_study(FIELD2, TWO_ATOM, seed=2, **kw)
        assert a.tracks[0].rms == b.tracks[0].rms
        assert a.tracks[0].rms != c.tracks[0].rms
