"""Property-based checks of structural invariants."""

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from degheat import assemble, build_graded_mesh, GridFunction, weighted_integral
from degheat import config as cfgmod
from degheat.carleman import (admissibility_report, bounded_tail, coefficient_signs,
                              exponent_orderings, validate_context)
from degheat.control import h10_inner, riesz_h10
from degheat.evolution import march_forward_values
from degheat.errors import AdmissibilityError, InvalidParameterError

alphas = st.floats(0.0, 0.95)
open_alphas = st.floats(0.01, 0.99)
coeffs = st.floats(-10, 10)
seeds = st.integers(0, 2 ** 32 - 1)
MESH = build_graded_mesh(30, 2.0, 30, 1.0)
FAST = settings(max_examples=40, deadline=None)


def _vec(seed, n, pin=True):
    v = np.random.default_rng(seed).standard_normal(n)
    if pin:
        v[0] = v[-1] = 0.0
    return v


@FAST
@given(a=coeffs, b=coeffs, sigma=st.floats(-0.9, 3.0), seed=seeds)
def test_quadrature_linear(a, b, sigma, seed):
    f, g = _vec(seed, 31, False), _vec(seed + 1, 31, False)
    lhs = weighted_integral(GridFunction(MESH, a * f + b * g), sigma)
    rhs = a * weighted_integral(GridFunction(MESH, f), sigma) + b * weighted_integral(GridFunction(MESH, g), sigma)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(a) + abs(b)) * (1 + np.abs(f).sum() + np.abs(g).sum())


@FAST
@given(alpha=alphas, gamma=st.floats(1.0, 3.0), seed=seeds)
def test_operator_symmetric_and_dissipative(alpha, gamma, seed):
    mesh = build_graded_mesh(25, gamma, 4, 1.0)
    op = assemble(alpha, mesh)
    u, v = _vec(seed, 26), _vec(seed + 1, 26)
    w = mesh.dual_widths
    uAv = np.sum(w * u * op.apply_values(v))
    vAu = np.sum(w * v * op.apply_values(u))
    scale = np.sum(w * np.abs(u * op.apply_values(u))) + np.sum(w * np.abs(v * op.apply_values(v)))
    assert abs(uAv - vAu) <= 1e-12 * scale
    assert np.sum(w * u * op.apply_values(u)) <= 0.0


@FAST
@given(alpha=alphas, a=coeffs, seed=seeds, scheme=st.sampled_from(["crank_nicolson", "implicit_euler"]))
def test_solution_superposition(alpha, a, seed, scheme):
    u0 = _vec(seed, 31)
    g1, g2 = _vec(seed + 2, 31), _vec(seed + 3, 31)
    _, U = march_forward_values(alpha, MESH, u0, g1 + a * g2, scheme)
    _, U0 = march_forward_values(alpha, MESH, u0, np.zeros(31), scheme)
    _, U1 = march_forward_values(alpha, MESH, np.zeros(31), g1, scheme)
    _, U2 = march_forward_values(alpha, MESH, np.zeros(31), g2, scheme)
    assert np.max(np.abs(U - (U0 + U1 + a * U2))) <= 1e-10 * (1 + abs(a)) * (1 + np.abs(U).max())


@FAST
@given(M=st.integers(4, 200), seed=seeds)
def test_riesz_representation(M, seed):
    dt = 1.0 / M
    psi, d = _vec(seed, M + 1, False), _vec(seed + 1, M + 1)
    G = riesz_h10(psi, dt)
    assert G[0] == 0.0 and G[-1] == 0.0
    ref = np.sum(psi[1:-1] * d[1:-1]) * dt
    assert abs(h10_inner(G, d, dt) - ref) <= 1e-9 * (1 + np.abs(psi).sum() * np.abs(d).sum() * dt)


@FAST
@given(alpha=open_alphas, beta=st.floats(0.0, 1.5))
def test_admissibility_matches_interval(alpha, beta):
    lo, hi = 1 - alpha, 1 - alpha / 2
    assume(min(abs(beta - lo), abs(beta - hi)) > 1e-9)
    inside = lo < beta < hi
    assert admissibility_report(alpha, beta)["valid"] == inside
    try:
        validate_context(alpha, beta)
        accepted = True
    except AdmissibilityError:
        accepted = False
    assert accepted == inside


@FAST
@given(alpha=open_alphas, frac=st.floats(0.01, 0.99), s=st.floats(0.1, 100.0))
def test_valid_contexts_have_right_signs(alpha, frac, s):
    beta = (1 - alpha) + frac * alpha / 2
    ctx = validate_context(alpha, beta, 1.0, s)
    c = coefficient_signs(ctx)
    assert c["j4_coefficient"] > 0 and c["j5_coefficient"] > 0
    assert c["third_derivative_product"] > 0
    assert all(exponent_orderings(ctx).values())


@FAST
@given(ratios=st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=12), k=st.floats(1e-3, 1e3))
def test_bounded_tail_scale_invariant(ratios, k):
    assert bounded_tail(ratios) == bounded_tail([k * r for r in ratios])
    assert bounded_tail([ratios[0]] * len(ratios)) is True


@given(r=st.floats(1e-3, 1e3))
def test_bounded_tail_needs_two_points(r):
    assert bounded_tail([r]) is None and bounded_tail([]) is None


@FAST
@given(alpha=st.floats(0.0, 0.99), T=st.floats(0.01, 100.0), N=st.integers(4, 5000),
       beta=st.floats(0.01, 2.0), rho=st.floats(1e-12, 1.0),
       s_list=st.lists(st.floats(0.01, 1e4), min_size=1, max_size=6),
       seed=st.integers(0, 2 ** 31), mode=st.sampled_from(["direct", "two_stage"]))
def test_config_round_trip(alpha, T, N, beta, rho, s_list, seed, mode):
    cfg = cfgmod.ExperimentConfig().with_overrides(
        problem={"alpha": alpha, "T": T}, mesh={"N": N}, carleman={"beta": beta, "s_list": tuple(s_list)},
        control={"rho": rho, "mode": mode}, run={"seed": seed})
    text = cfgmod.dumps(cfg)
    assert cfgmod.loads(text) == cfg
    assert cfgmod.dumps(cfgmod.loads(text)) == text


@FAST
@given(values=st.lists(st.floats(allow_nan=True, allow_infinity=True), min_size=31, max_size=31))
def test_grid_functions_are_finite(values):
    try:
        f = GridFunction(MESH, values)
    except InvalidParameterError:
        assert not np.all(np.isfinite(values))
    else:
        assert np.all(np.isfinite(f.values))
