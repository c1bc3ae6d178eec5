"""Independent symbolic oracles for the closed-form benchmark solutions.

All derivatives here come from sympy, never from the package's own
machinery, so tests that use them are genuine cross-checks.
"""

import numpy as np
import sympy as sp

_t, _x = sp.symbols("t x")

# Scalar tracking problem: optimal triple and its time derivatives.
_E3 = sp.exp(3)
_y_star = (2 * sp.exp(3 * _t) + _E3) / (sp.exp(sp.Rational(3, 2) * _t) * (2 + _E3))
_u_star = 2 * (sp.exp(3 * _t) - _E3) / (sp.exp(sp.Rational(3, 2) * _t) * (2 + _E3))

analytical_y = sp.lambdify(_t, _y_star, "numpy")
analytical_u = sp.lambdify(_t, _u_star, "numpy")
analytical_lam = sp.lambdify(_t, -_u_star, "numpy")
analytical_y_dot = sp.lambdify(_t, sp.diff(_y_star, _t), "numpy")
analytical_u_dot = sp.lambdify(_t, sp.diff(_u_star, _t), "numpy")
analytical_lam_dot = sp.lambdify(_t, sp.diff(-_u_star, _t), "numpy")

# Heated rod: reference state/control and the partials the residuals need.
_amp = 2 / (sp.pi + 4 * sp.pi**3)
_heat_y = _amp * (sp.exp(-sp.pi**2 * _t) - sp.cos(sp.pi * _t / 2) + 2 * sp.pi * sp.sin(sp.pi * _t / 2)) * sp.sin(
    sp.pi * _x
)
_heat_u = sp.sin(sp.pi * _x) * sp.sin(sp.pi * _t / 2)

heat_y = sp.lambdify((_t, _x), _heat_y, "numpy")
heat_u = sp.lambdify((_t, _x), _heat_u, "numpy")
heat_y_t = sp.lambdify((_t, _x), sp.diff(_heat_y, _t), "numpy")
heat_y_xx = sp.lambdify((_t, _x), sp.diff(_heat_y, _x, 2), "numpy")


def central_first(f, z, h):
    return (f(z + h) - f(z - h)) / (2.0 * h)


def central_second(f, z, h):
    return (f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h)


def rel_err(a, b, floor=1.0):
    """|a - b| scaled by max(|b|, floor): relative where b is O(1) or larger."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), floor))
