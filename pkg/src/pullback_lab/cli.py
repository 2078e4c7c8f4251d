"""pullback-lab command line.

Exit codes: 0 all monitored inequalities hold, 2 usage or scenario error,
3 a structural hypothesis fails, 4 a monitored bound is violated.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import attractor, energy, oracle
from .errors import (DelayTooStrong, HypothesisViolation, NonFinite, PullbackLabError,
                     ScenarioFormatError, UnknownScenario)
from .problem import audit
from .scenarios import SCENARIOS, load_scenario
from .solver import SolverConfig, integrate, write_trajectory_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_HYPOTHESIS = 3
EXIT_BOUND = 4

DEFAULTS = {
    "bound_slack": energy.MONITOR_SLACK,
    "energy_tol": 1e-7,
    "energy_min_ratio": 8.0,
    "superposition_tol": 1e-8,
    "semidistance_slack": 1e-6,
    "cross_check_tol": 1e-4,
    "tail_rtol": energy.TAIL_RTOL,
    "delta_fraction": 1e-3,
    "theta_fraction": 1e-2,
    "absorb_scale": 100.0,
    "threads_env": attractor.THREADS_ENV,
    "scenarios": list(SCENARIOS),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def build_parser():
    p = _Parser(prog="pullback-lab", description=__doc__.splitlines()[0])
    p.add_argument("--print-config", action="store_true",
                   help="print default tolerances (and the scenario, if given) as JSON")
    sub = p.add_subparsers(dest="command")

    def common(sp, run=True):
        sp.add_argument("scenario", help="JSON file or default:<name>")
        if run:
            sp.add_argument("--tau", type=float, default=None)
            sp.add_argument("--t-end", type=float, default=None)
            sp.add_argument("--dt", type=float, default=None)
            sp.add_argument("--grid-size", type=int, default=None)
            sp.add_argument("--eta", type=float, default=None, help="override the default eta")
            sp.add_argument("--out", default=None, help="CSV path (default: stdout)")
        return sp

    common(sub.add_parser("audit", help="check every structural hypothesis"), run=False)

    sp = common(sub.add_parser("simulate", help="integrate and write the trajectory CSV"))
    sp.add_argument("--record-every", type=int, default=None)

    sp = common(sub.add_parser("verify-energy", help="energy-identity residual under step halving"))
    sp.add_argument("--levels", type=int, default=2)
    sp.add_argument("--tol", type=float, default=DEFAULTS["energy_tol"])
    sp.add_argument("--min-ratio", type=float, default=DEFAULTS["energy_min_ratio"])

    sp = common(sub.add_parser("verify-bound", help="pullback energy bound monitor"))
    sp.add_argument("--slack", type=float, default=DEFAULTS["bound_slack"])

    sp = common(sub.add_parser("absorb", help="absorbing-ball entry times"))
    sp.add_argument("--taus", type=_floats, default=[0.0])
    sp.add_argument("--samples", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scale", type=float, default=DEFAULTS["absorb_scale"])

    sp = common(sub.add_parser("pullback", help="ensembles and semidistance to the attractor"))
    sp.add_argument("--taus", type=_floats, default=None,
                    help="receding initial times (default t-5, t-10, t-20)")
    sp.add_argument("--tau-far", type=float, default=None)
    sp.add_argument("--samples", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--slack", type=float, default=DEFAULTS["semidistance_slack"])

    sp = common(sub.add_parser("regularity", help="split u = v + v1 and monitor both parts"))
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--decay-form", choices=("printed", "shifted"), default="printed")
    sp.add_argument("--tol", type=float, default=DEFAULTS["superposition_tol"])

    sp = common(sub.add_parser("oracle", help="closed-form and finite-difference cross-checks"))
    sp.add_argument("--grid-points", type=int, default=256)
    sp.add_argument("--tol", type=float, default=DEFAULTS["cross_check_tol"])
    return p


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _settings(args, settings, spec):
    tau = settings.tau if getattr(args, "tau", None) is None else args.tau
    t_end = settings.t_end if getattr(args, "t_end", None) is None else args.t_end
    dt = settings.dt if getattr(args, "dt", None) is None else args.dt
    grid = settings.grid_size if getattr(args, "grid_size", None) is None else args.grid_size
    rec = getattr(args, "record_every", None) or settings.record_every
    return tau, t_end, SolverConfig(dt=dt, grid_size=grid, record_every=rec)


def _cmd_audit(args, spec, settings):
    report = audit(spec)
    for line in report.lines():
        print(line)
    if not report.passed:
        bad = report.violations[0]
        print(f"hypothesis {bad.name} violated", file=sys.stderr)
        return EXIT_HYPOTHESIS
    c = energy.derive_constants(spec)
    print(f"     eta = {c.eta:.6g}  eta1 = {c.eta1:.6g}  rho_sq(0) = "
          f"{energy.absorbing_radius(c, spec, 0.0):.6g}")
    return EXIT_OK


def _cmd_simulate(args, spec, settings):
    tau, t_end, cfg = _settings(args, settings, spec)
    rec = integrate(spec, cfg, tau, t_end)
    fh, own = _open_out(args.out)
    try:
        write_trajectory_csv(rec, fh)
    finally:
        if own:
            fh.close()
    return EXIT_OK


def _cmd_verify_energy(args, spec, settings):
    tau, t_end, cfg = _settings(args, settings, spec)
    worst = []
    for level in range(max(1, args.levels)):
        dt = cfg.dt / 2 ** level
        rec = integrate(spec, SolverConfig(dt=dt, grid_size=cfg.grid_size), tau, t_end)
        worst.append(float(np.max(np.abs(rec.monitors["energy_residual"]))))
        ratio = worst[-2] / worst[-1] if level and worst[-1] > 0 else math.inf
        print(f"dt={dt:.6g} max_residual={worst[-1]:.3e}"
              + (f" ratio={ratio:.3g}" if level else ""))
    ok = worst[-1] < args.tol
    if len(worst) > 1 and worst[-1] > 0:
        ok = ok and worst[-2] / worst[-1] >= args.min_ratio
    return EXIT_OK if ok else EXIT_BOUND


def _cmd_verify_bound(args, spec, settings):
    tau, t_end, cfg = _settings(args, settings, spec)
    consts = energy.derive_constants(spec, args.eta)
    rec = integrate(spec, cfg, tau, t_end)
    rep = energy.bound_report(rec, spec, consts)
    fh, own = _open_out(args.out)
    try:
        energy.write_bound_csv(rep, fh)
    finally:
        if own:
            fh.close()
    bad = int(np.sum(rep.slack < -args.slack * (1.0 + rep.rhs)))
    print(f"bound violations: {bad} of {len(rep.times)}", file=sys.stderr)
    return EXIT_OK if bad == 0 else EXIT_BOUND


def _cmd_absorb(args, spec, settings):
    _, _, cfg = _settings(args, settings, spec)
    consts = energy.derive_constants(spec, args.eta)
    fh, own = _open_out(args.out)
    failed = 0
    try:
        fh.write("tau,sample_id,entry_time,T_star,within\n")
        for tau in args.taus:
            for i in range(args.samples):
                res = attractor.absorption_entry(spec, cfg, tau, args.scale, seed=args.seed + i,
                                                 consts=consts)
                failed += not res.within
                fh.write(f"{tau:.17g},{i},{res.entry_time:.17g},{res.T_star:.17g},"
                         f"{int(res.within)}\n")
    finally:
        if own:
            fh.close()
    return EXIT_OK if failed == 0 else EXIT_BOUND


def _cmd_pullback(args, spec, settings):
    _, t_end, cfg = _settings(args, settings, spec)
    t = t_end
    taus = args.taus or [t - 5.0, t - 10.0, t - 20.0]
    tau_far = t - 40.0 if args.tau_far is None else args.tau_far
    consts = energy.derive_constants(spec, args.eta)
    ref = attractor.attractor_approximation(spec, cfg, t, tau_far, args.samples, args.seed,
                                            consts, args.threads)
    run = attractor.pullback_ensemble(spec, cfg, t, taus, args.samples, args.seed + 1,
                                      consts, args.threads)
    fh, own = _open_out(args.out)
    try:
        attractor.write_ensemble_csv(run, fh)
    finally:
        if own:
            fh.close()
    dists = [attractor.semidistance(run.endpoints[tau], ref, "C_Ht", spec.eigenvalues,
                                    spec.epsilon.value) for tau in run.taus]
    for tau, d in zip(run.taus, dists):
        print(f"tau={tau:.6g} semidistance={d:.6e}", file=sys.stderr)
    ok = all(b <= a + args.slack for a, b in zip(dists, dists[1:]))
    return EXIT_OK if ok else EXIT_BOUND


def _cmd_regularity(args, spec, settings):
    tau, t_end, cfg = _settings(args, settings, spec)
    consts = energy.derive_constants(spec, args.eta)
    rep = attractor.solve_decomposed(spec, cfg, tau, t_end, theta=args.theta, consts=consts)
    fh, own = _open_out(args.out)
    try:
        attractor.write_regularity_csv(rep, fh, args.decay_form)
    finally:
        if own:
            fh.close()
    ok_i1 = rep.I1_holds(args.decay_form)
    ok_i2 = rep.I2_holds()
    ok_sp = rep.superposition_rel < args.tol
    print(f"theta={rep.theta:.6g} R2={rep.R2:.6g} superposition={rep.superposition_rel:.3e} "
          f"I1[{args.decay_form}]={'ok' if ok_i1 else 'FAIL'} I2={'ok' if ok_i2 else 'FAIL'}",
          file=sys.stderr)
    return EXIT_OK if (ok_i1 and ok_i2 and ok_sp) else EXIT_BOUND


def _cmd_oracle(args, spec, settings):
    tau, t_end, cfg = _settings(args, settings, spec)
    ok = True
    zero_f = spec.nonlinearity.kind == "zero"
    if (spec.domain.mode_count == 1 and zero_f and not spec.delay.active
            and spec.forcing.is_zero(1) and spec.epsilon.kind == "constant"
            and spec.diffusion.amplitude == 0.0):
        rec = integrate(spec, cfg, tau, t_end)
        c = spec.initial_history.value(0.0, 1)[0]
        exact = oracle.single_mode_closed_form(spec.diffusion.base, spec.epsilon.level,
                                               spec.lambda1, c, tau, t_end)
        rel = abs(rec.final_state[0] - exact) / max(abs(exact), 1e-300)
        print(f"closed-form relative error = {rel:.3e}")
        ok = ok and rel < 1e-6
    chk = oracle.cross_check(spec, cfg, tau, t_end, args.grid_points)
    print(f"finite-difference L2 difference ({chk.grid_points} points, N = "
          f"{chk.mode_count}) = {chk.l2_difference:.3e}")
    ok = ok and chk.l2_difference < args.tol
    return EXIT_OK if ok else EXIT_BOUND


COMMANDS = {
    "audit": _cmd_audit,
    "simulate": _cmd_simulate,
    "verify-energy": _cmd_verify_energy,
    "verify-bound": _cmd_verify_bound,
    "absorb": _cmd_absorb,
    "pullback": _cmd_pullback,
    "regularity": _cmd_regularity,
    "oracle": _cmd_oracle,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return EXIT_USAGE
    except SystemExit as exc:   # --help
        return int(exc.code or 0)

    spec = settings = None
    if getattr(args, "scenario", None):
        try:
            spec, settings = load_scenario(args.scenario)
        except (UnknownScenario, ScenarioFormatError) as exc:
            print(f"pullback-lab: {exc}", file=sys.stderr)
            return EXIT_USAGE

    if args.print_config:
        cfg = dict(DEFAULTS)
        if spec is not None:
            from .scenarios import spec_to_dict
            cfg["scenario"] = spec_to_dict(spec, settings)
        print(json.dumps(cfg, indent=2, default=float))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        if args.command != "audit":
            audit(spec).raise_if_failed()
        return COMMANDS[args.command](args, spec, settings)
    except (HypothesisViolation, DelayTooStrong) as exc:
        print(f"pullback-lab: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except NonFinite as exc:
        print(f"pullback-lab: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (ValueError, PullbackLabError) as exc:
        print(f"pullback-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
