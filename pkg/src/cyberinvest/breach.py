"""Security-breach probability functions and the static one-shot investment optimum.

Two standard families map an investment (or protection level) z and a baseline
vulnerability v to a breach probability:

    class I:  v / (a z + 1)^b        class II:  v^(a z + 1)

Both are decreasing and convex in z, equal to v at z = 0 and to 0 when v = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "BreachFamily",
    "BreachModel",
    "breach_prob",
    "breach_prob_derivative",
    "enbis",
    "static_optimum",
]


class BreachFamily(Enum):
    CLASS_I = "class1"
    CLASS_II = "class2"


@dataclass(frozen=True)
class BreachModel:
    """Breach-function family with vulnerability v and shape parameters a, b."""

    family: BreachFamily
    v: float
    a: float
    b: float = 1.0

    def __post_init__(self):
        if not isinstance(self.family, BreachFamily):
            object.__setattr__(self, "family", BreachFamily(self.family))
        if not (0.0 <= self.v <= 1.0):
            raise ValueError(f"vulnerability v must lie in [0, 1], got {self.v}")
        if self.a <= 0:
            raise ValueError(f"productivity parameter a must be positive, got {self.a}")
        if self.b <= 0:
            raise ValueError(f"exponent parameter b must be positive, got {self.b}")


def breach_prob(model: BreachModel, z):
    """Breach probability S(z, v) for investment/protection level z >= 0."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise ValueError("investment level z must be nonnegative")
    if model.family is BreachFamily.CLASS_I:
        out = model.v / (model.a * z_arr + 1.0) ** model.b
    else:
        out = model.v ** (model.a * z_arr + 1.0) if model.v > 0 else np.zeros_like(z_arr)
    return float(out) if out.ndim == 0 else out


def breach_prob_derivative(model: BreachModel, z):
    """Analytic dS/dz; strictly negative whenever v > 0 (class II needs v < 1)."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise ValueError("investment level z must be nonnegative")
    if model.family is BreachFamily.CLASS_I:
        out = -model.v * model.a * model.b / (model.a * z_arr + 1.0) ** (model.b + 1.0)
    else:
        if model.v == 0:
            out = np.zeros_like(z_arr)
        else:
            out = model.a * math.log(model.v) * model.v ** (model.a * z_arr + 1.0)
    return float(out) if out.ndim == 0 else out


def enbis(model: BreachModel, p: float, loss: float, z) -> float:
    """Expected net benefit of the one-shot investment: (v - S(z,v)) p loss - z."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"attack probability p must lie in [0, 1], got {p}")
    if loss < 0:
        raise ValueError("loss must be nonnegative")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise ValueError("investment level z must be nonnegative")
    out = (model.v - breach_prob(model, z_arr)) * p * loss - z_arr
    return float(out) if out.ndim == 0 else out


def static_optimum(model: BreachModel, p: float, loss: float) -> float:
    """One-shot optimal investment: root of -S_z(z) p loss = 1, clamped at 0.

    The optimum never exceeds v p loss / e, which gives a guaranteed bracket
    for the root search.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"attack probability p must lie in [0, 1], got {p}")
    if loss < 0:
        raise ValueError("loss must be nonnegative")
    pl = p * loss
    # corner: marginal benefit at z = 0 does not cover the marginal cost of 1
    if -breach_prob_derivative(model, 0.0) * pl <= 1.0:
        return 0.0
    if model.family is BreachFamily.CLASS_I and model.b == 1.0:
        return (math.sqrt(model.v * model.a * pl) - 1.0) / model.a

    def foc(z):
        return -breach_prob_derivative(model, z) * pl - 1.0

    hi = model.v * pl / math.e
    # foc(0) > 0 by the corner check; the 1/e bound puts the root strictly inside
    return float(brentq(foc, 0.0, hi, xtol=1e-14, rtol=8.9e-16))
