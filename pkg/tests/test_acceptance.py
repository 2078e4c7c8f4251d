"""The ten acceptance criteria at their stated tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import math

import numpy as np
import pytest

from pullback_lab.attractor import (absorption_entry, attractor_approximation,
                                    in_regular_ball, pullback_ensemble, sample_ball,
                                    semidistance, solve_decomposed)
from pullback_lab.energy import (MONITOR_SLACK, absorbing_radius, bound_report,
                                 contraction_series, derive_constants)
from pullback_lab.errors import DelayTooStrong, HypothesisViolation
from pullback_lab.oracle import cross_check, single_mode_closed_form
from pullback_lab.problem import (DelayKernel, DiffusionLaw, DomainSpec, Forcing, ForcingTerm,
                                  HistoryTerm, InitialHistory, TimeProfile, audit,
                                  cubic_nonlinearity, require_audited)
from pullback_lab.scenarios import default_scenario
from pullback_lab.solver import SolverConfig, integrate


def endpoint_error(spec, dt):
    rec = integrate(spec, SolverConfig(dt=dt, record_every=int(round(1 / dt))), 0.0, 1.0)
    exact = single_mode_closed_form(3.0, 1.0, 1.0, 1.0, 0.0, 1.0)
    return abs(rec.final_state[0] - exact) / exact


def test_c1_closed_form_accuracy(verdict):
    spec = default_scenario("linear-single-mode")
    errs = [endpoint_error(spec, dt) for dt in (4e-3, 2e-3, 1e-3)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = errs[-1] < 1e-6 and min(ratios) >= 12
    verdict("1 closed-form accuracy", ok,
            f"rel err {errs[-1]:.2e} at dt=1e-3, halving ratios {ratios[0]:.1f}, {ratios[1]:.1f}")
    assert ok


def test_c2_energy_equality(verdict):
    spec = default_scenario("cubic-delayed")
    assert spec.domain.mode_count == 16
    res = [float(np.max(np.abs(integrate(spec, SolverConfig(dt=dt), 0.0, 2.0)
                               .monitors["energy_residual"]))) for dt in (2e-3, 1e-3)]
    ratio = res[0] / res[1]
    ok = ratio >= 8 and res[1] < 1e-7
    verdict("2 energy equality", ok,
            f"max residual {res[0]:.2e} -> {res[1]:.2e}, ratio {ratio:.1f}")
    assert ok


def random_scenario(rng, i):
    kind = "decreasing-tanh" if i % 2 == 0 else "increasing-tanh"
    alpha = rng.uniform(0.0, 0.5)
    eps = TimeProfile(kind=kind, amplitude=alpha)
    L, k, lam1 = eps.bound, 1.0, 1.0
    eta_max = (1 + L) * lam1 / (1 + lam1 * L)
    # largest C_g keeping some eta in (0, eta_max) with eta1 > 0
    grid = np.linspace(1e-6, eta_max, 2001)[:-1]
    cg_max = float(np.max(grid * (1 + lam1 * L) * np.exp(-grid * k)))
    C_g = rng.uniform(0.0, 0.9) * cg_max
    modes = int(rng.integers(4, 13))
    forcing = Forcing(terms=tuple(
        ForcingTerm(mode=j, constant=rng.uniform(-0.5, 0.5), amplitude=rng.uniform(0, 0.3),
                    frequency=rng.uniform(0.5, 2.0), phase=rng.uniform(0, math.pi))
        for j in (1, 2, 3)))
    history = InitialHistory(terms=tuple(
        HistoryTerm(mode=j, value=rng.uniform(-1.5, 1.5), rate=rng.uniform(0, 1))
        for j in (1, 2, 3)))
    return default_scenario("cubic-delayed").replace(
        domain=DomainSpec(length=math.pi, mode_count=modes),
        epsilon=eps,
        diffusion=DiffusionLaw(base=2.5 + L, amplitude=0.5),
        delay=DelayKernel(kind="discrete", window=k, lag=rng.uniform(0.2, 1.0),
                          gain=math.sqrt(C_g)),
        forcing=forcing, initial_history=history, name=f"random-{i}")


def test_c3_pullback_bound_monitor(verdict):
    rng = np.random.default_rng(20240)
    worst = math.inf
    violations = 0
    for i in range(20):
        spec = random_scenario(rng, i)
        require_audited(spec)
        consts = derive_constants(spec)
        rec = integrate(spec, SolverConfig(dt=1e-2), 0.0, 4.0)
        rep = bound_report(rec, spec, consts, with_rho=False)
        violations += int(np.sum(rep.slack < -MONITOR_SLACK * (1.0 + rep.rhs)))
        worst = min(worst, float(np.min(rep.slack / (1.0 + rep.rhs))))
    ok = violations == 0
    verdict("3 pullback bound monitor", ok,
            f"20 scenarios, {violations} violations, min relative slack {worst:.3g}")
    assert ok


def test_c4_coef_c_identity(verdict):
    rng = np.random.default_rng(4)
    base = default_scenario("cubic-delayed")
    worst = 0.0
    for _ in range(100):
        k = rng.uniform(0.2, 3.0)
        length = rng.uniform(0.5, 2.0) * math.pi
        level = rng.uniform(0.5, 3.0)
        eps = TimeProfile(level=level, bound=level * rng.uniform(1.0, 2.0))
        L, lam1 = eps.bound, (math.pi / length) ** 2
        eta_max = (1 + L) * lam1 / (1 + lam1 * L)
        eta = rng.uniform(0.05, 0.95) * eta_max
        C_g = rng.uniform(0.01, 0.99) * eta * (1 + lam1 * L) * math.exp(-eta * k)
        spec = base.replace(domain=DomainSpec(length=length, mode_count=4), epsilon=eps,
                            delay=DelayKernel(kind="discrete", window=k, lag=k,
                                              gain=math.sqrt(C_g)))
        c = derive_constants(spec, eta_choice=eta)
        worst = max(worst, abs(c.coef_c - 2.0) / 2.0)
    ok = worst <= 1e-12
    verdict("4 coef_c = 2 identity", ok, f"100 tuples, worst relative deviation {worst:.1e}")
    assert ok


def test_c5_absorbing_entry(verdict):
    spec = default_scenario("cubic-delayed")
    consts = derive_constants(spec)
    entries = [absorption_entry(spec, SolverConfig(dt=1e-2), 0.0, 100.0, seed=s, consts=consts)
               for s in range(5)]
    ok = all(e.within for e in entries)
    verdict("5 absorbing entry", ok,
            "entry " + ", ".join(f"{e.entry_time:.2f}" for e in entries)
            + f" vs T* {min(e.T_star for e in entries):.2f}")
    assert ok


def test_c6_contraction(verdict):
    spec = default_scenario("cubic-delayed")
    consts = derive_constants(spec)
    tau = 0.0
    rho_sq = absorbing_radius(consts, spec, tau)
    rng = np.random.default_rng(6)
    cfg = SolverConfig(dt=1e-2)
    violations = 0
    worst = math.inf
    for _ in range(10):
        c1, c2 = sample_ball(spec, tau, rho_sq, 2, rng)
        r1 = integrate(spec, cfg, tau, 3.0, history=InitialHistory.constant(c1))
        r2 = integrate(spec, cfg, tau, 3.0, history=InitialHistory.constant(c2))
        _, lhs, rhs = contraction_series(r1, r2, consts, spec, tau)
        slack = rhs - lhs
        violations += int(np.sum(slack < -MONITOR_SLACK * (1.0 + rhs)))
        worst = min(worst, float(np.min(slack / (1.0 + rhs))))
    ok = violations == 0
    verdict("6 contraction inequality", ok,
            f"10 pairs, {violations} violations, min relative slack {worst:.3g}")
    assert ok


def test_c7_pullback_attraction(verdict):
    spec = default_scenario("linear-single-mode")
    cfg = SolverConfig(dt=1e-2)
    consts = derive_constants(spec)
    t = 0.0
    cloud = attractor_approximation(spec, cfg, t, tau_far=t - 40.0, samples=4, consts=consts)
    run = pullback_ensemble(spec, cfg, t, [t - 5.0, t - 10.0, t - 20.0], 4, seed=1,
                            consts=consts)
    d = [semidistance(run.endpoints[tau], cloud, "C_Ht", spec.eigenvalues, spec.epsilon.value)
         for tau in run.taus]
    ok = all(b <= a + 1e-6 for a, b in zip(d, d[1:])) and d[-1] < 1e-3
    verdict("7 pullback attraction", ok,
            "semidistances " + ", ".join(f"{x:.2e}" for x in d))
    assert ok


@pytest.fixture(scope="module")
def regularity():
    spec = default_scenario("cubic-delayed")
    consts = derive_constants(spec)
    cfg = SolverConfig(dt=1e-2)
    rep = solve_decomposed(spec, cfg, 0.0, 2.0, consts=consts)
    cloud = attractor_approximation(spec, cfg, 2.0, samples=4, consts=consts)
    return spec, rep, cloud


def test_c8_regularity_decomposition(regularity, verdict):
    spec, rep, cloud = regularity
    inside, vals = in_regular_ball(cloud, spec, rep.R2)
    checks = {
        "superposition": rep.superposition_rel < 1e-8,
        "I1 decay": rep.I1_holds("printed"),
        "I2 bound": rep.I2_holds(),
        "attractor in R2 ball": inside,
    }
    ratio = float(np.max(rep.I1 / rep.I1_bound("printed")))
    ok = all(checks.values())
    verdict("8 regularity decomposition", ok,
            f"superposition {rep.superposition_rel:.1e}, I1/bound max {ratio:.3g}, "
            f"R2 {rep.R2:.4g}, cloud max {max(vals):.3g}; failing: "
            + (", ".join(k for k, v in checks.items() if not v) or "none"))
    assert ok


def test_c8_shifted_decay_form(regularity):
    # the same Gronwall bound with the window shift taken as t - k - tau
    _, rep, _ = regularity
    assert rep.I1_holds("shifted")
    assert rep.superposition_rel < 1e-8
    assert rep.I2_holds()


def test_c9_cross_discretization(verdict):
    spec = default_scenario("cubic-delayed")
    cfg = SolverConfig(dt=1e-2)
    ladder = [(8, 64), (12, 128), (16, 256)]
    diffs = []
    for n, m in ladder:
        s = spec.replace(domain=DomainSpec(length=math.pi, mode_count=n))
        diffs.append(cross_check(s, cfg, 0.0, 1.0, grid_points=m).l2_difference)
    ok = diffs[-1] < 1e-4 and all(b < a for a, b in zip(diffs, diffs[1:]))
    verdict("9 cross-discretization", ok, "L2 differences " + ", ".join(f"{d:.2e}" for d in diffs))
    assert ok


def test_c10_audit_mutations(verdict):
    base = default_scenario("cubic-delayed")
    named = {}

    low_m = base.replace(diffusion=DiffusionLaw(base=2.0))
    with pytest.raises(HypothesisViolation) as exc:
        require_audited(low_m)
    named["m lowered"] = exc.value.name == "diffusion-bounds"

    strong = base.replace(delay=DelayKernel(kind="discrete", lag=1.0, gain=1.5))
    with pytest.raises(DelayTooStrong) as exc2:
        derive_constants(strong)
    named["C_g raised"] = exc2.value.sup_eta1 <= 0

    bad_f = base.replace(nonlinearity=cubic_nonlinearity(1.0, 1.0, C2=2.0))
    with pytest.raises(HypothesisViolation) as exc3:
        require_audited(bad_f)
    named["f not dissipative"] = exc3.value.name == "dissipativity"

    assert audit(base).passed
    ok = all(named.values())
    verdict("10 audit mutations", ok,
            ", ".join(f"{k}: {'named' if v else 'wrong error'}" for k, v in named.items()))
    assert ok
