"""Closed-form solution cases for verification runs.

Each case provides the displacement, the fluid pressure, their derivatives,
the derived total pressure / total fluid content, and the loads that make
the pair solve the single-step consolidation system for a given parameter
tuple. All callables accept numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import MaterialParams

__all__ = ["ManufacturedCase", "manufactured", "CASE_IDS"]

CASE_IDS = ("trig", "zero")


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    params: MaterialParams
    u: Callable
    grad_u: Callable  # (2, 2, ...) with [i][j] = d_j u_i
    div_u: Callable
    p_f: Callable
    grad_p_f: Callable
    p_t: Callable
    m: Callable
    f: Callable
    g: Callable


def manufactured(case_id: str, params: MaterialParams) -> ManufacturedCase:
    """Bind a named closed-form case to a parameter tuple."""
    if case_id == "zero":
        zero = lambda x, y: np.zeros_like(x)
        vec0 = lambda x, y: np.stack([np.zeros_like(x), np.zeros_like(x)])
        mat0 = lambda x, y: np.zeros((2, 2) + np.shape(x))
        return ManufacturedCase(
            name="zero", params=params, u=vec0, grad_u=mat0, div_u=zero,
            p_f=zero, grad_p_f=vec0, p_t=zero, m=zero, f=vec0, g=zero,
        )
    if case_id != "trig":
        raise ValueError(f"unknown manufactured case {case_id!r}")

    mu, lam = params.mu, params.lam
    alpha, sigma, kappa = params.alpha, params.sigma, params.kappa
    amp = 0.1  # displacement amplitude keeps both scales comparable
    pi = np.pi

    s = lambda x, y: np.sin(pi * x) * np.sin(pi * y)
    sx = lambda x, y: pi * np.cos(pi * x) * np.sin(pi * y)
    sy = lambda x, y: pi * np.sin(pi * x) * np.cos(pi * y)
    sxx = lambda x, y: -pi * pi * s(x, y)
    syy = lambda x, y: -pi * pi * s(x, y)
    sxy = lambda x, y: pi * pi * np.cos(pi * x) * np.cos(pi * y)
    mean_s = 4.0 / (pi * pi)  # average of s over the unit square

    def u(x, y):
        v = amp * s(x, y)
        return np.stack([v, v])

    def grad_u(x, y):
        gx, gy = amp * sx(x, y), amp * sy(x, y)
        return np.stack([np.stack([gx, gy]), np.stack([gx, gy])])

    def div_u(x, y):
        return amp * (sx(x, y) + sy(x, y))

    def p_f(x, y):
        return s(x, y)

    def grad_p_f(x, y):
        return np.stack([sx(x, y), sy(x, y)])

    def p_t(x, y):
        return lam * div_u(x, y) - alpha * (s(x, y) - mean_s)

    def m(x, y):
        return alpha * div_u(x, y) + sigma * s(x, y)

    def f(x, y):
        f1 = -(
            2.0 * mu * amp * sxx(x, y)
            + mu * amp * (sxy(x, y) + syy(x, y))
            + lam * amp * (sxx(x, y) + sxy(x, y))
            - alpha * sx(x, y)
        )
        f2 = -(
            mu * amp * (sxx(x, y) + sxy(x, y))
            + 2.0 * mu * amp * syy(x, y)
            + lam * amp * (sxy(x, y) + syy(x, y))
            - alpha * sy(x, y)
        )
        return np.stack([f1, f2])

    def g(x, y):
        return m(x, y) + 2.0 * kappa * pi * pi * s(x, y)

    return ManufacturedCase(
        name="trig", params=params, u=u, grad_u=grad_u, div_u=div_u,
        p_f=p_f, grad_p_f=grad_p_f, p_t=p_t, m=m, f=f, g=g,
    )
