"""Acceptance criteria, one test per criterion, tolerances pinned."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from seasonal_cp.brw import (
    PeriodicSchedule,
    brw_batch,
    expected_count,
    killed_count_identity_test,
    killed_walk_batch,
)
from seasonal_cp.cli import main
from seasonal_cp.invasibility import corollary3_check, invasion_index, theorem1_check, worked_example_params
from seasonal_cp.lattice import LatticeSpec, SeasonalParams
from seasonal_cp.meanfield import (
    LogisticFlow,
    equilibrium_curve,
    iterate_fixed_point,
    ode_solve,
    rho,
    rho_integral,
    season_fixed_point,
)
from seasonal_cp.simulator import SimState, init_configuration, majority, make_rng, quasi_coexistence, run

from .oracles import rk4_logistic


def test_ac01_worked_example_integral():
    c2 = equilibrium_curve(worked_example_params(), 2)
    assert abs(c2.season_integral(1) - 0.366066) <= 1e-4


def test_ac02_worked_example_invadability():
    p = worked_example_params()
    integral = equilibrium_curve(p, 2).season_integral(1)
    i1 = 5000 * (1 - integral)
    assert i1 == pytest.approx(invasion_index(p, 1, 2), rel=1e-12)
    assert i1 > 3050
    assert abs(i1 - 3169.7) <= 0.5
    i2 = invasion_index(p, 2, 1)
    assert i2 > 2.0
    assert i2 >= 2.058 - 1e-3


def test_ac03_flow_oracle_equivalence():
    rng = np.random.default_rng(2024)
    n = 500
    u0 = rng.uniform(0, 1, n)
    t = rng.uniform(0.01, 3.0, n)
    delta = rng.uniform(0.1, 5.0, n)
    branch = np.arange(n) % 4
    beta = np.select(
        [branch == 0, branch == 1, branch == 2],
        [np.zeros(n), delta, rng.uniform(0, 1, n) * delta],
        delta + rng.uniform(0.01, 5.0, n),
    )
    ref = rk4_logistic(u0, t, beta, delta, steps=4000)
    worst_flow = worst_int = 0.0
    for k in range(n):
        worst_flow = max(worst_flow, abs(rho(u0[k], t[k], beta[k], delta[k]) - ref[k]))
        q, _ = quad(lambda s: rho(u0[k], s, beta[k], delta[k]), 0, t[k], epsabs=1e-13, epsrel=1e-13)
        worst_int = max(worst_int, abs(rho_integral(u0[k], t[k], beta[k], delta[k]) - q))
    assert {0, 1, 2, 3} == set(branch.tolist())
    assert worst_flow <= 1e-8, worst_flow
    assert worst_int <= 1e-8, worst_int


def test_ac04_fixed_point_duality():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(200):
        delta = rng.uniform(0.2, 4.0)
        b_good = rng.uniform(delta, delta + 8.0)
        b_bad = rng.uniform(0.0, b_good)
        D = rng.uniform(0.05, 3.0)
        f1, f2 = LogisticFlow(b_good, delta), LogisticFlow(b_bad, delta)
        closed, _ = season_fixed_point(f1, f2, D, check=False)
        iterated, _ = iterate_fixed_point(f1, f2, D)
        worst = max(worst, abs(closed - iterated))
    assert worst <= 1e-10, worst
    for beta, delta in ((4.0, 1.0), (5.2, 2.0), (3.0, 1.0)):
        f = LogisticFlow(beta, delta)
        assert season_fixed_point(f, f, 1.0) == (1 - delta / beta, 1 - delta / beta)


def test_ac05_corollary_consistency():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(500):
        d1, d2 = rng.uniform(0.2, 3.0, 2)
        b11 = rng.uniform(0.5, 12.0)
        b22 = rng.uniform(0.5, 12.0)
        p = SeasonalParams(
            S=2, D=rng.uniform(0.1, 3.0),
            beta=[(b11, rng.uniform(0, b11)), (rng.uniform(0, b22), b22)],
            delta=[(d1, d1), (d2, d2)],
        )
        rep = corollary3_check(p)
        assert rep.applicable
        if rep.verdict:
            assert rep.theorem1_verdict
        c2 = equilibrium_curve(p, 2)
        assert 1 - c2.season_integral(1) / p.D >= 1 - (c2.p1 + c2.p2) / 2 - 1e-12
        assert 1 - c2.season_integral(2) / p.D >= 1 - c2.p1 - 1e-12
        c1 = equilibrium_curve(p, 1)
        assert 1 - c1.season_integral(2) / p.D >= 1 - (c1.p1 + c1.p2) / 2 - 1e-12
        assert 1 - c1.season_integral(1) / p.D >= 1 - c1.p2 - 1e-12
        checked += 1
    assert checked == 500


def test_ac06_meanfield_coexistence_and_exclusion():
    p = worked_example_params()
    traj = ode_solve(p, [0.05, 0.05], 100.0, 0.01)
    window = (traj.times >= 20 - 1e-9) & (traj.times <= 100 + 1e-9)
    mins = traj.u[window].min(axis=0)

    b1, b2 = 3.0, 2.0
    hom = SeasonalParams.constant_death(1.0, [(b1, b1), (b2, b2)], [1.0, 1.0])
    t_ex = 200 / (b1 - b2)
    excl = ode_solve(hom, [0.05, 0.05], t_ex, t_ex / 200)
    exclusion_ok = excl.u[-1, 1] < 1e-4

    assert exclusion_ok, excl.u[-1]
    assert mins[0] > 0.01 and mins[1] > 0.01, f"window minima {mins}"


def test_ac07_simulator_tracks_meanfield():
    spec = LatticeSpec(200, 100)
    p = SeasonalParams.constant_death(10.0, [(3.0, 1.0)], [1.0])
    curve = equilibrium_curve(p, 1)
    cfg = init_configuration(spec, 1, "full")
    good = 0
    errors = []
    for seed in range(5):
        traj = run(p, spec, cfg, 80.0, snapshot_dt=0, seed=seed)
        after = traj.times >= 20.0
        err = np.max(np.abs(traj.densities[after, 0] - curve(traj.times[after])))
        errors.append(err)
        good += err <= 0.03
    assert good >= 4, errors


def test_ac08_brw_mean_count():
    flat = PeriodicSchedule.constant(1.0)
    res = brw_batch(flat, 0.0, 2.0, 10_000, seed=81)
    assert res.n_capped == 0
    assert abs(res.mean - math.exp(2.0)) <= 3 * res.stderr
    seasonal = PeriodicSchedule(5.2, 1.0, 1.0)
    res = brw_batch(seasonal, 2.0, 2.0, 10_000, seed=82)
    target = math.exp(quad(lambda s: seasonal.rate(s) - 2.0, 0, 2, points=[1.0])[0])
    assert target == pytest.approx(expected_count(seasonal, 2.0, 2.0), rel=1e-12)
    assert abs(res.mean - target) <= 3 * res.stderr


def test_ac09_killed_count_identity():
    cases = [
        (PeriodicSchedule.constant(1.5), 1.0, 25.0, (0.0, 0.0), ((0.0, 0.0), 1.0), 4.0),
        (PeriodicSchedule(3.0, 0.5, 1.0), 1.0, 4.0, (0.5, -0.5), ((-1.0, -1.0), 1.0), 3.0),
        (PeriodicSchedule.constant(1.0), 1.0, None, (0.0, 0.0), ((0.5, 0.5), 1.0), 2.0),
    ]
    reports = [killed_count_identity_test(*c, replicas=100_000, seed=90 + k) for k, c in enumerate(cases)]
    # the second case's kill square must actually remove walks
    sched, _, T, x, box, t = cases[1]
    killed = killed_walk_batch(sched, T, x, box, t, 20_000, seed=7)
    free = killed_walk_batch(sched, None, x, box, t, 20_000, seed=7)
    assert killed < free
    for rep in reports:
        assert not rep.degenerate
        assert rep.passed, rep.to_text()


def _two_species_verdicts(params, seeds):
    spec = LatticeSpec(200, 100)
    dens = []
    verdicts = []
    for seed in seeds:
        rng = make_rng(seed)
        cfg = init_configuration(spec, 2, "product", densities=[1 / 3, 1 / 3], rng=rng)
        traj = run(params, spec, cfg, 8.0, sample_dt=0.05, snapshot_dt=0, rng=rng)
        verdicts.append(quasi_coexistence(traj, (2.0, 8.0), 0.02))
        dens.append(traj)
    return verdicts, dens


@pytest.mark.slow
def test_ac10_spatial_quasi_coexistence():
    p = worked_example_params()
    control = SeasonalParams(S=2, D=1.0, beta=[p.beta[0], (1.5, 1.0)], delta=[p.delta[0], (2.0, 2.0)])
    assert control.mean_birth(2) <= control.mean_death(2)
    _, ctrl = _two_species_verdicts(control, [100])
    # density_at reads zeros once the control run is absorbed
    ctrl_ok = ctrl[0].density_at(8.0)[1] < 0.005

    verdicts, _ = _two_species_verdicts(p, range(5))
    assert ctrl_ok
    assert majority(verdicts) == (True, True), verdicts


def test_ac11_determinism_and_bookkeeping(tmp_path):
    ini = tmp_path / "det.ini"
    ini.write_text(
        "[lattice]\nM = 60\nL = 10\n[season]\nD = 0.5\n"
        "[species.1]\nbeta = 6, 1\n[species.2]\nbeta = 1, 6\n[run]\nseed = 21\nt_end = 3\n"
    )
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["simulate", "--config", str(ini), "--out", str(out), "--no-plot"]) == 0
        outs.append(sorted((f.name, f.read_bytes()) for f in out.iterdir()))
    assert outs[0] == outs[1]

    rng = np.random.default_rng(11)
    for trial in range(3):
        S = trial + 1
        spec = LatticeSpec(int(rng.integers(20, 35)), int(rng.integers(1, 12)))
        p = SeasonalParams(S=S, D=float(rng.uniform(0.05, 0.5)),
                           beta=rng.uniform(0.5, 5, (S, 2)), delta=rng.uniform(0.5, 2, (S, 2)))
        cfg = init_configuration(spec, S, "product", densities=[0.6 / S] * S, rng=make_rng(trial))
        st = SimState(cfg, p, spec, make_rng(500 + trial), check_bookkeeping=True)
        t = 0.0
        while st.events < 1_000_000:
            t += 1.0
            if st.advance_to(t, max_events=1_000_000 - st.events) == 2:
                break
        assert st.events == 1_000_000
        assert st.bookkeeping_errors == 0
        assert st.total_rate() == st.recomputed_total_rate()
