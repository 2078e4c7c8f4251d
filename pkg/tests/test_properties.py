import math
from dataclasses import replace

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pullback_lab.energy import constants_from, derive_constants, lemma41_rhs
from pullback_lab.history import composite_sq, hermite
from pullback_lab.oracle import single_mode_closed_form
from pullback_lab.problem import DiffusionLaw, InitialHistory, TimeProfile
from pullback_lab.scenarios import default_scenario
from pullback_lab.solver import SolverConfig, integrate
from pullback_lab.spectral import SineTransform, eigenvalues_for, norms

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def coeff_vectors(max_n=12):
    return st.integers(1, max_n).flatmap(lambda n: arrays(float, n, elements=finite))


@given(coeff_vectors(), st.floats(0.5, 6.0))
def test_parseval(c, length):
    n = c.shape[0]
    tr = SineTransform(length, n)
    h = length / (tr.grid_size + 1)
    grid = tr.to_grid(c)
    assert math.isclose(h * float(grid @ grid), float(c @ c), rel_tol=1e-11, abs_tol=1e-11)
    assert np.allclose(tr.to_coeffs(grid), c, atol=1e-11)


@given(coeff_vectors(), st.floats(0.5, 6.0))
def test_poincare(c, length):
    lam = eigenvalues_for(length, c.shape[0])
    nb = norms(c, 1.0, lam)
    assert nb.grad_sq >= lam[0] * nb.L2_sq * (1 - 1e-12)
    assert nb.L2_sq >= lam[0] * nb.Hminus1_sq * (1 - 1e-12)


@given(st.integers(1, 10).flatmap(lambda n: st.tuples(arrays(float, n, elements=finite),
                                                       arrays(float, n, elements=finite))))
def test_duality(pair):
    f, u = pair
    lam = eigenvalues_for(math.pi, f.shape[0])
    lhs = abs(float(f @ u))
    rhs = math.sqrt(float((f * f / lam).sum()) * float((lam * u * u).sum()))
    assert lhs <= rhs * (1 + 1e-12) + 1e-12


@given(arrays(float, (6, 3), elements=finite), st.integers(1, 5), st.floats(0.1, 3.0))
def test_window_sup_monotone(values, cut, eps):
    times = np.linspace(-1, 0, 6)
    lam = eigenvalues_for(math.pi, 3)
    const = lambda s: eps
    for kind in ("C_L2", "C_Ht", "C_Ht1"):
        whole = composite_sq(times, values, lam, const, kind)
        part = composite_sq(times[cut:], values[cut:], lam, const, kind)
        assert part <= whole * (1 + 1e-12)
    assert (composite_sq(times, values, lam, const, "C_Ht")
            >= composite_sq(times, values, lam, const, "C_L2"))


@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(0.1, 3.0),
       st.floats(0.5, 10.0), st.floats(0.1, 3.0))
def test_coef_c_identity(frac, cg_frac, k, lam1, L):
    eta_max = (1 + L) * lam1 / (1 + lam1 * L)
    eta = frac * eta_max * 0.999
    # keep eta1 > 0: C_g below eta (1 + lam1 L) e^{-eta k}
    C_g = cg_frac * 0.999 * eta * (1 + lam1 * L) * math.exp(-eta * k)
    eta1, a, b, c = constants_from(eta, C_g, k, lam1, L)
    assert eta1 > 0
    assert math.isclose(c, 2.0, rel_tol=1e-12)
    assert a == c
    assert b >= 1.0


SPEC = default_scenario("cubic-delayed")
CONSTS = derive_constants(SPEC)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 5), st.floats(0, 5), st.floats(0, 8))
def test_bound_monotone(p1, p2, h1, h2, t):
    lo, hi = sorted((p1, p2))
    hlo, hhi = sorted((h1, h2))
    def value(phi, h, consts=CONSTS):
        return lemma41_rhs(consts, SPEC, 0.0, t, {"C_L2_sq": phi, "eps_tau_grad_sq": 0.0},
                           h_integral_fn=lambda s: h)
    assert value(lo, hlo) <= value(hi, hlo) * (1 + 1e-14)
    assert value(lo, hlo) <= value(lo, hhi) * (1 + 1e-14)
    bigger = replace(CONSTS, const_term=2 * CONSTS.const_term)
    assert value(lo, hlo) <= value(lo, hlo, bigger)


@given(arrays(float, (4,), elements=finite), st.floats(0.0, 1.0), st.floats(0.01, 2.0))
def test_hermite_exact_on_cubics(p, s, h):
    poly = np.polynomial.Polynomial(p)
    d = poly.deriv()
    got = hermite(s, h, np.array([poly(0.0)]), np.array([d(0.0)]),
                  np.array([poly(h)]), np.array([d(h)]))
    assert math.isclose(float(got[0]), poly(s * h), rel_tol=1e-9, abs_tol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(2.5, 6.0), st.floats(0.2, 2.0), st.floats(-3, 3))
def test_solver_matches_closed_form(a0, eps0, c):
    spec = default_scenario("linear-single-mode").replace(
        diffusion=DiffusionLaw(base=a0), epsilon=TimeProfile(level=eps0),
        initial_history=InitialHistory.constant([c]))
    rec = integrate(spec, SolverConfig(dt=1e-2, record_every=100), 0.0, 1.0)
    exact = single_mode_closed_form(a0, eps0, 1.0, c, 0.0, 1.0)
    assert abs(rec.final_state[0] - exact) <= 1e-8 * (abs(c) + 1e-300)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.5), st.sampled_from(["decreasing-tanh", "increasing-tanh"]))
def test_superposition_any_profile(alpha, kind):
    from pullback_lab.attractor import solve_decomposed
    spec = SPEC.replace(epsilon=TimeProfile(kind=kind, amplitude=alpha))
    rep = solve_decomposed(spec, SolverConfig(dt=0.05), 0.0, 1.0)
    assert rep.superposition_rel < 1e-10
