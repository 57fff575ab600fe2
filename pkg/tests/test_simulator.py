import math

import numpy as np
import pytest
from scipy import stats

from seasonal_cp.lattice import Configuration, LatticeSpec, SeasonalParams
from seasonal_cp.simulator import (
    SimState,
    Trajectory,
    coupled_domination_check,
    init_configuration,
    majority,
    make_rng,
    quasi_coexistence,
    run,
)


def single(beta, delta, D=1.0, **kw):
    return SeasonalParams(S=1, D=D, beta=[beta], delta=[delta], **kw)


def torus_dist(a, b, M):
    return max(min(abs(a[k] - b[k]), M - abs(a[k] - b[k])) for k in (0, 1))


def test_step_death_then_absorbed():
    spec = LatticeSpec(5, 1)
    cfg = init_configuration(spec, 1, "point", corner=(2, 3))
    st = SimState(cfg, single((0.0, 0.0), (1.0, 1.0)), spec, make_rng(0))
    ev = st.step()
    assert ev.kind == "death" and ev.site == (2, 3) and ev.species == 1 and ev.time > 0
    assert st.step() is None
    assert st.config.counts.sum() == 0


def test_step_birth_lands_in_neighbourhood():
    spec = LatticeSpec(9, 2)
    cfg = init_configuration(spec, 1, "point", corner=(0, 8))
    st = SimState(cfg, single((5.0, 5.0), (1e-9, 1e-9)), spec, make_rng(1))
    ev = st.step()
    assert ev.kind == "birth"
    assert 1 <= torus_dist(ev.site, ev.target, 9) <= 2
    assert st.config.state(ev.target) == 1
    assert st.counters[0, 0] == 1


def test_step_suppressed_on_full_grid():
    spec = LatticeSpec(6, 1)
    cfg = init_configuration(spec, 1, "full")
    st = SimState(cfg, single((2.0, 2.0), (0.0, 0.0), allow_zero_death=True), spec, make_rng(2))
    for _ in range(50):
        assert st.step().kind == "birth-suppressed"
    assert st.config.counts[0] == 36
    assert tuple(st.counters[0]) == (0, 50, 0)


def test_state_mismatch_rejected():
    with pytest.raises(ValueError):
        SimState(Configuration.empty(5, 2), single((1, 1), (1, 1)), LatticeSpec(5, 1), make_rng(0))


def test_init_modes_and_errors():
    spec = LatticeSpec(20, 4)
    assert init_configuration(spec, 2, "full", species=2).counts.tolist() == [0, 400]
    assert init_configuration(spec, 2, "box", species=1, corner=(18, 18)).counts.tolist() == [16, 0]
    assert init_configuration(spec, 1, "point").counts.tolist() == [1]
    with pytest.raises(ValueError):
        init_configuration(spec, 2, "product", densities=[0.6, 0.5], rng=make_rng(0))
    with pytest.raises(ValueError):
        init_configuration(spec, 2, "product", densities=[0.1], rng=make_rng(0))
    with pytest.raises(ValueError):
        init_configuration(spec, 2, "full", species=3)
    with pytest.raises(ValueError):
        init_configuration(spec, 2, "stripes")


def test_product_measure_binomial():
    spec = LatticeSpec(400, 200)
    cfg = init_configuration(spec, 2, "product", densities=[0.3, 0.3], rng=make_rng(4))
    n = 400 * 400
    sigma = math.sqrt(n * 0.3 * 0.7)
    for c in cfg.counts:
        assert abs(c - 0.3 * n) < 4 * sigma


def test_pure_death_decay():
    spec = LatticeSpec(100, 3)
    p = single((0.0, 0.0), (1.0, 1.0))
    traj = run(p, spec, init_configuration(spec, 1, "full"), 1.0, sample_dt=0.25, snapshot_dt=0)
    for t, d in zip(traj.times, traj.densities[:, 0]):
        q = math.exp(-t)
        assert abs(d - q) < 4 * math.sqrt(q * (1 - q) / 1e4) + 1e-12


def test_no_death_full_grid_stays_full():
    spec = LatticeSpec(30, 2)
    p = single((3.0, 1.0), (0.0, 0.0), allow_zero_death=True)
    traj = run(p, spec, init_configuration(spec, 1, "full"), 2.0, snapshot_dt=0)
    assert np.all(traj.densities == 1.0)
    assert traj.counters[0, 0] == 0 and traj.counters[0, 2] == 0 and traj.counters[0, 1] > 0


def test_sampling_grid_and_snapshots():
    spec = LatticeSpec(20, 2)
    p = single((3.0, 1.0), (1.0, 1.0), D=1.0)
    traj = run(p, spec, init_configuration(spec, 1, "full"), 8.0, seed=3)
    assert traj.times.size == 8 * 20 + 1
    assert np.allclose(np.diff(traj.times), 0.05)
    assert len(traj.snapshots) == 9
    assert traj.snapshots[0][1].sum() == 400


def test_absorption_recorded():
    spec = LatticeSpec(10, 1)
    p = single((0.1, 0.1), (5.0, 5.0))
    traj = run(p, spec, init_configuration(spec, 1, "point"), 50.0, sample_dt=1.0, seed=1)
    assert traj.absorbed_at is not None and traj.absorbed_at < 50
    assert traj.densities[-1, 0] == 0 and traj.times[-1] == traj.absorbed_at
    assert np.all(np.diff(traj.times) > 0)


def test_determinism_and_seed_dependence():
    spec = LatticeSpec(40, 5)
    p = SeasonalParams(S=2, D=1.0, beta=[(4.0, 1.0), (1.0, 4.0)], delta=[(1, 1), (1, 1)])
    cfg = init_configuration(spec, 2, "product", densities=[0.3, 0.3], rng=make_rng(0))
    a = run(p, spec, cfg, 3.0, seed=11).to_csv()
    b = run(p, spec, cfg, 3.0, seed=11).to_csv()
    c = run(p, spec, cfg, 3.0, seed=12).to_csv()
    assert a == b and a != c


def test_run_leaves_input_untouched():
    spec = LatticeSpec(20, 2)
    cfg = init_configuration(spec, 1, "full")
    run(single((1, 1), (2, 2)), spec, cfg, 1.0)
    assert cfg.counts[0] == 400 and np.all(cfg.grid == 1)


def test_bookkeeping_fuzz():
    rng = np.random.default_rng(8)
    for trial in range(6):
        M = int(rng.integers(3, 25))
        L = int(rng.integers(1, 15))
        S = int(rng.integers(1, 4))
        spec = LatticeSpec(M, L)
        beta = rng.uniform(0, 4, size=(S, 2))
        delta = rng.uniform(0.3, 2, size=(S, 2))
        p = SeasonalParams(S=S, D=float(rng.uniform(0.05, 1)), beta=beta, delta=delta)
        cfg = init_configuration(spec, S, "product", densities=[0.8 / S] * S, rng=make_rng(trial))
        st = SimState(cfg, p, spec, make_rng(100 + trial), check_bookkeeping=True)
        st.advance_to(5.0, max_events=20000)
        assert st.bookkeeping_errors == 0
        assert st.total_rate() == st.recomputed_total_rate()
        st.config.check_consistency()


def _final_density_samples(D, n, seed0):
    spec = LatticeSpec(50, 5)
    p = SeasonalParams.constant_death(D, [(3.0, 3.0)], [1.0])
    cfg = init_configuration(spec, 1, "product", densities=[0.2], rng=make_rng(0))
    out = []
    for k in range(n):
        st = SimState(cfg.copy(), p, spec, make_rng(seed0 ^ k))
        st.advance_to(2.5)
        out.append(st.config.counts[0])
    return np.array(out)


def test_season_boundaries_do_not_bias_constant_rates():
    # boundary redraws must be invisible when both seasons share rates
    a = _final_density_samples(0.1, 200, 1000)
    b = _final_density_samples(1e9, 200, 5000)
    assert stats.ks_2samp(a, b).pvalue > 0.01
    assert stats.ttest_ind(a, b).pvalue > 0.01


def test_early_growth_bounded_by_branching_mean():
    spec = LatticeSpec(101, 10)
    p = single((2.0, 2.0), (1.0, 1.0))
    cfg = init_configuration(spec, 1, "point", corner=(50, 50))
    counts = []
    for k in range(3000):
        st = SimState(cfg.copy(), p, spec, make_rng(77 ^ k))
        st.advance_to(1.5)
        counts.append(st.config.counts[0])
    counts = np.array(counts)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert counts.mean() <= math.exp(1.5) + 3 * se


def test_coupled_domination_never_violated():
    spec = LatticeSpec(12, 2)
    rng = np.random.default_rng(3)
    grid = rng.integers(0, 3, size=(12, 12))
    p = SeasonalParams(S=2, D=0.5, beta=[(4.0, 1.0), (1.0, 5.0)], delta=[(1, 1.5), (1, 1)])
    events, violations = coupled_domination_check(p, spec, grid, focus=1, t_end=2.0, seed=5)
    assert events > 500 and violations == 0


def test_box_density_concentrates_as_range_grows():
    spreads = []
    for L in (10, 20, 40):
        spec = LatticeSpec(4 * L, L)
        p = single((3.0, 1.0), (1.0, 1.0), D=1.0)
        cfg = init_configuration(spec, 1, "product", densities=[0.5], rng=make_rng(L))
        traj = run(p, spec, cfg, 1.5, sample_dt=0.5, snapshot_dt=0, seed=L, box_counts=True)
        dens = traj.box_counts[-1, :, :, 0] / L**2
        spreads.append(dens.std())
    assert spreads[0] > spreads[1] > spreads[2]


def test_suppressed_fraction_vanishes_with_range():
    # from one seed the lattice process approaches a branching walk as L grows
    fracs = []
    for L in (25, 50, 100):
        spec = LatticeSpec(2 * L + 1, L)
        p = single((2.0, 2.0), (1.0, 1.0))
        cfg = init_configuration(spec, 1, "point")
        births = suppressed = 0
        for k in range(300):
            st = SimState(cfg.copy(), p, spec, make_rng(L * 1000 + k))
            st.advance_to(2.0)
            births += st.counters[0, 0]
            suppressed += st.counters[0, 1]
        fracs.append(suppressed / (births + suppressed))
    assert fracs[0] > fracs[1] > fracs[2]


def _traj(times, dens, t_end, absorbed=None):
    return Trajectory(times=np.array(times, float), densities=np.array(dens, float), t_end=t_end, absorbed_at=absorbed)


def test_quasi_coexistence_examples():
    tr = _traj([0, 1, 2, 3], [[0.5, 0.5], [0.3, 0.01], [0.2, 0.05], [0.1, 0.1]], 3.0)
    assert quasi_coexistence(tr, (2.0, 3.0), 0.02) == (True, True)
    assert quasi_coexistence(tr, (1.0, 3.0), 0.02) == (True, False)
    dead = _traj([0, 1, 1.5], [[0.5, 0.5], [0.3, 0.3], [0.0, 0.0]], 3.0, absorbed=1.5)
    assert quasi_coexistence(dead, (2.0, 3.0)) == (False, False)
    with pytest.raises(ValueError):
        quasi_coexistence(tr, (2.0, 5.0))
    with pytest.raises(ValueError):
        quasi_coexistence(tr, (2.0, 2.0))


def test_majority():
    assert majority([(True, False), (True, True), (False, False)]) == (True, False)
    assert majority([(True,), (False,)]) == (False,)
