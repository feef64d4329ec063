"""Independent reference computations used to freeze expected test values.

None of these touch the package's discretization: they use Bessel zeros,
ODE shooting, adaptive quadrature and symbolic differentiation.
"""

import numpy as np
import sympy as sp
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq
from scipy.special import jv


def bessel_eigenvalue(alpha, k=1):
    """k-th Dirichlet eigenvalue of -(x^a u')' via zeros of J_nu, nu=(1-a)/(2-a)."""
    nu = (1 - alpha) / (2 - alpha)
    grid = np.linspace(0.5, 10.0 * k + 10.0, 4000)
    vals = jv(nu, grid)
    zeros = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa * fb < 0:
            zeros.append(brentq(lambda z: jv(nu, z), a, b, xtol=1e-15))
        if len(zeros) == k:
            break
    return ((2 - alpha) * zeros[k - 1] / 2) ** 2


def _shoot(alpha, lam, x0=1e-6):
    # Frobenius start u ~ x^(1-a) + c x^(3-2a), flux p = x^a u'
    c = -lam / ((3 - 2 * alpha) * (2 - alpha))
    u0 = x0 ** (1 - alpha) + c * x0 ** (3 - 2 * alpha)
    p0 = (1 - alpha) + c * (3 - 2 * alpha) * x0 ** (2 - alpha)
    rhs = lambda x, y: [y[1] * x ** (-alpha), -lam * y[0]]
    sol = solve_ivp(rhs, (x0, 1.0), [u0, p0], method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[0, -1]


def shooting_eigenvalue(alpha, bracket):
    return brentq(lambda lam: _shoot(alpha, lam), *bracket, xtol=1e-12)


def hardy_oracle(expr_str, alpha, beta):
    """Continuum |f|_D(A), the integral LHS and their ratio for f given as text in x."""
    x = sp.symbols("x", positive=True)
    f = sp.sympify(expr_str, locals={"x": x})
    fx = sp.diff(f, x)
    Af = sp.simplify(sp.diff(x ** sp.Rational(alpha).limit_denominator(100) * fx, x))
    F = sp.lambdify(x, f, "numpy")
    Fx = sp.lambdify(x, fx, "numpy")
    AF = sp.lambdify(x, Af, "numpy")
    opts = dict(limit=400, epsabs=1e-13, epsrel=1e-11)
    l2 = np.sqrt(quad(lambda t: F(t) ** 2, 0, 1, **opts)[0])
    al2 = np.sqrt(quad(lambda t: AF(t) ** 2, 0, 1, **opts)[0])
    gnorm = l2 + al2
    lhs = quad(lambda t: t ** (2 * alpha + beta - 4) * F(t) ** 2, 0, 1, **opts)[0] \
        + quad(lambda t: t ** (2 * alpha + beta - 2) * Fx(t) ** 2, 0, 1, **opts)[0]
    return {"graph_norm": gnorm, "lhs": lhs, "ratio": lhs / gnorm ** 2}


def classical_duality_integral(T=0.5):
    """int_0^T pi exp(-pi^2 (T-t)) sin^2(pi t/T) dt."""
    return quad(lambda t: np.pi * np.exp(-np.pi ** 2 * (T - t)) * np.sin(np.pi * t / T) ** 2, 0, T,
                epsabs=1e-14, epsrel=1e-13)[0]


if __name__ == "__main__":
    for a in (0.0, 0.25, 0.5, 0.75):
        print("bessel", a, repr(bessel_eigenvalue(a, 1)), repr(bessel_eigenvalue(a, 2)))
    for a in (0.25, 0.5, 0.75):
        lb = bessel_eigenvalue(a, 1)
        print("shoot", a, repr(shooting_eigenvalue(a, (0.8 * lb, 1.2 * lb))))
    print("hardy x^1.5", hardy_oracle("x**(3/2)", 0.5, 0.6))
    print("hardy sin", hardy_oracle("sin(pi*x)*x**(3/2)", 0.25, 0.8))
    print("weighted x^2 x^-0.5", quad(lambda t: t ** 1.5, 0, 1)[0])
    print("classical duality", repr(classical_duality_integral()))
