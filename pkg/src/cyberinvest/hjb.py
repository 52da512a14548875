"""Backward solve of the investment value surface on an (intensity, level) grid.

The dynamic-programming equation for the value V(t, lambda, h) couples a
mean-reverting drift in lambda, an obsolescence drift in h, a nonlocal shift
lambda (V(lambda + beta) - V(lambda)), a running reward
eta_mean (v - S(h, v)) lambda, and a quadratic Hamiltonian in the investment
rate. Space is discretized with central differences (one-sided at the four
boundaries) and the nonlocal term with a node shift clamped at the top
boundary; the resulting ODE system is integrated backward in time with an
adaptive A-stable implicit scheme and an analytic sparse Jacobian.

Internally the state is kept as W[m, n] = V(lambda_n, h_m) flattened with the
lambda index fastest, which keeps the Jacobian bandwidth at the lambda count.
Stored fields use the (snapshot, lambda, h) layout.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .breach import BreachModel, breach_prob
from .dynamics import CostParams
from .errors import SolverError
from .hawkes import HawkesParams

__all__ = [
    "SolverGrid",
    "SolverOptions",
    "FieldMeta",
    "ValueField",
    "PolicyField",
    "SolveResult",
    "assemble_rhs",
    "solve",
    "query",
    "hjb_residual",
]

EXTRAPOLATION_RULE = "clamp-at-lambda-max"


@dataclass(frozen=True)
class SolverGrid:
    """Regular discretization of (lambda, h) plus decreasing-from-T snapshot times."""

    lambda_min: float
    lambda_max: float
    d_lambda: float
    h_min: float
    h_max: float
    d_h: float
    t_snapshots: np.ndarray

    def __post_init__(self):
        snaps = np.asarray(self.t_snapshots, dtype=float)
        object.__setattr__(self, "t_snapshots", snaps)
        if self.d_lambda <= 0 or self.d_h <= 0:
            raise ValueError("grid steps must be positive")
        if self.h_min < 0:
            raise ValueError("h_min must be nonnegative")
        if self.lambda_max < self.lambda_min or self.h_max <= self.h_min:
            raise ValueError("grid bounds must be ordered")
        for lo, hi, step, name in (
            (self.lambda_min, self.lambda_max, self.d_lambda, "lambda"),
            (self.h_min, self.h_max, self.d_h, "h"),
        ):
            ratio = (hi - lo) / step
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(f"({name}_max - {name}_min) must be an integer multiple of d_{name}")
        if snaps.ndim != 1 or snaps.size < 2 or np.any(np.diff(snaps) >= 0):
            raise ValueError("t_snapshots must be strictly decreasing from the horizon")
        if snaps[-1] < 0:
            raise ValueError("snapshot times must be nonnegative")

    @classmethod
    def regular(
        cls,
        lambda_min: float,
        lambda_max: float,
        d_lambda: float,
        h_min: float,
        h_max: float,
        d_h: float,
        horizon: float,
        time_steps: int = 200,
    ) -> "SolverGrid":
        snaps = np.linspace(horizon, 0.0, time_steps + 1)
        return cls(lambda_min, lambda_max, d_lambda, h_min, h_max, d_h, snaps)

    @property
    def lambdas(self) -> np.ndarray:
        n = int(round((self.lambda_max - self.lambda_min) / self.d_lambda)) + 1
        return self.lambda_min + self.d_lambda * np.arange(n)

    @property
    def hs(self) -> np.ndarray:
        n = int(round((self.h_max - self.h_min) / self.d_h)) + 1
        return self.h_min + self.d_h * np.arange(n)

    @property
    def n_lambda(self) -> int:
        return int(round((self.lambda_max - self.lambda_min) / self.d_lambda)) + 1

    @property
    def n_h(self) -> int:
        return int(round((self.h_max - self.h_min) / self.d_h)) + 1

    @property
    def horizon(self) -> float:
        return float(self.t_snapshots[0])

    @property
    def d_t(self) -> float:
        return float(self.t_snapshots[0] - self.t_snapshots[1])

    def refined(self, factor: int = 2) -> "SolverGrid":
        """Same bounds with spatial steps divided by `factor`."""
        return replace(self, d_lambda=self.d_lambda / factor, d_h=self.d_h / factor)


@dataclass(frozen=True)
class SolverOptions:
    """Integrator and scheme options for the backward solve."""

    rtol: float = 1e-6
    atol: float = 1e-9
    method: str = "Radau"
    upwind: bool = False
    jump_interp: bool = False
    interp_query: bool = False
    max_nodes: int = 200_000_000


@dataclass(frozen=True)
class FieldMeta:
    """Provenance of a solved field: inputs, options, extrapolation rule."""

    kind: str
    hawkes: HawkesParams
    model: BreachModel
    costs: CostParams
    options: SolverOptions
    dimension: str = "hawkes"
    poisson_intensity: Optional[float] = None
    extrapolation: str = EXTRAPOLATION_RULE


@dataclass(frozen=True)
class ValueField:
    """Value surface V stored as (snapshot, lambda, h)."""

    grid: SolverGrid
    values: np.ndarray
    meta: FieldMeta

    def __post_init__(self):
        expected = (self.grid.t_snapshots.size, self.grid.n_lambda, self.grid.n_h)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != grid shape {expected}")

    def terminal_values(self) -> np.ndarray:
        """V at the horizon snapshot, shape (n_lambda, n_h)."""
        return self.values[0]


@dataclass(frozen=True)
class PolicyField:
    """Optimal investment-rate surface z* stored like ValueField."""

    grid: SolverGrid
    controls: np.ndarray
    meta: FieldMeta

    def __post_init__(self):
        expected = (self.grid.t_snapshots.size, self.grid.n_lambda, self.grid.n_h)
        if self.controls.shape != expected:
            raise ValueError(f"controls shape {self.controls.shape} != grid shape {expected}")


@dataclass(frozen=True)
class SolveResult:
    value: ValueField
    policy: PolicyField
    quality: dict


def _onesided_central_1d(n: int, step: float) -> sp.csr_matrix:
    """Central difference with one-sided first/last rows; zero matrix when n = 1."""
    if n == 1:
        return sp.csr_matrix((1, 1))
    rows, cols, vals = [], [], []
    inv = 1.0 / step
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i + 1, i - 1]
        vals += [0.5 * inv, -0.5 * inv]
    rows += [0, 0, n - 1, n - 1]
    cols += [1, 0, n - 1, n - 2]
    vals += [inv, -inv, inv, -inv]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _upwind_1d(n: int, step: float, coeff: np.ndarray) -> sp.csr_matrix:
    """One-sided differences chosen row-wise so the transport term is monotone."""
    if n == 1:
        return sp.csr_matrix((1, 1))
    rows, cols, vals = [], [], []
    inv = 1.0 / step
    for i in range(n):
        c = coeff[i]
        if c == 0:
            continue
        if c > 0:
            j = i - 1 if i > 0 else i + 1
            sgn = 1.0 if i > 0 else -1.0
        else:
            j = i + 1 if i < n - 1 else i - 1
            sgn = -1.0 if i < n - 1 else 1.0
        rows += [i, i]
        cols += [i, j]
        vals += [sgn * inv, -sgn * inv]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _jump_shift_1d(n: int, d_lambda: float, beta: float, interp: bool) -> sp.csr_matrix:
    """Selector (or two-point interpolator) approximating V(lambda + beta)."""
    if interp:
        pos = beta / d_lambda
    else:
        pos = math.floor(beta) / d_lambda
        if abs(pos - round(pos)) > 1e-9:
            warnings.warn(
                "floor(beta)/d_lambda is not an integer; flooring the jump node shift",
                RuntimeWarning,
            )
            pos = math.floor(pos)
    lo = int(math.floor(pos + 1e-12))
    w = pos - lo
    rows, cols, vals = [], [], []
    for i in range(n):
        j0 = min(i + lo, n - 1)
        if w > 1e-12:
            j1 = min(i + lo + 1, n - 1)
            rows += [i, i]
            cols += [j0, j1]
            vals += [1.0 - w, w]
        else:
            rows.append(i)
            cols.append(j0)
            vals.append(1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class _PideOperator:
    """Semi-discrete spatial operator: dV/dt = L V - reward - Hamiltonian(DhV)."""

    def __init__(self, grid: SolverGrid, hawkes: HawkesParams, model: BreachModel, costs: CostParams, options: SolverOptions):
        self.grid = grid
        self.costs = costs
        self.options = options
        lam = grid.lambdas
        hs = grid.hs
        nl, nh = lam.size, hs.size
        self.shape = (nh, nl)
        self.n = nl * nh
        self.gamma = costs.gamma
        self.delta = costs.delta

        clam = hawkes.xi * (lam - hawkes.alpha)
        ch = costs.rho * hs
        # reward per node, flattened lambda-fastest
        rew = costs.eta_mean * (model.v - breach_prob(model, hs))[:, None] * lam[None, :]
        self.reward = rew.ravel()

        if options.upwind:
            dlam_1d = _upwind_1d(nl, grid.d_lambda, clam)
            dh_1d = _upwind_1d(nh, grid.d_h, ch)
        else:
            dlam_1d = _onesided_central_1d(nl, grid.d_lambda)
            dh_1d = _onesided_central_1d(nh, grid.d_h)
        dh_ham_1d = _onesided_central_1d(nh, grid.d_h)
        jump_1d = _jump_shift_1d(nl, grid.d_lambda, hawkes.beta, options.jump_interp)

        eye_l = sp.identity(nl, format="csr")
        eye_h = sp.identity(nh, format="csr")
        dlam_full = sp.kron(eye_h, dlam_1d, format="csr")
        dh_full = sp.kron(dh_1d, eye_l, format="csr")
        self.dh_ham = sp.kron(dh_ham_1d, eye_l, format="csr")
        jump_full = sp.kron(eye_h, jump_1d - sp.identity(nl), format="csr")

        clam_flat = np.tile(clam, nh)
        ch_flat = np.repeat(ch, nl)
        lam_flat = np.tile(lam, nh)
        self.linear = (
            sp.diags(clam_flat) @ dlam_full
            + sp.diags(ch_flat) @ dh_full
            - sp.diags(lam_flat) @ jump_full
        ).tocsr()

    def grad_h(self, y: np.ndarray) -> np.ndarray:
        return self.dh_ham @ y

    def policy(self, y: np.ndarray) -> np.ndarray:
        """Pointwise maximizer (grad_h V - delta)^+ / gamma, flattened."""
        return np.maximum(self.grad_h(y) - self.delta, 0.0) / self.gamma

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite value surface during integration")
        excess = np.maximum(self.grad_h(y) - self.delta, 0.0)
        ham = excess * excess / (2.0 * self.gamma)
        return self.linear @ y - self.reward - ham

    def jac(self, t: float, y: np.ndarray):
        w = np.maximum(self.grad_h(y) - self.delta, 0.0) / self.gamma
        return (self.linear - sp.diags(w) @ self.dh_ham).tocsc()


def assemble_rhs(
    state: np.ndarray,
    grid: SolverGrid,
    hawkes: HawkesParams,
    model: BreachModel,
    costs: CostParams,
    options: Optional[SolverOptions] = None,
    t: float = 0.0,
) -> np.ndarray:
    """Time derivative of the flattened surface (one entry per (lambda, h) node).

    The state and the result are flattened in (lambda, h) row-major order to
    match the stored-field layout.
    """
    options = options or SolverOptions()
    op = _PideOperator(grid, hawkes, model, costs, options)
    state = np.asarray(state, dtype=float)
    if state.size != op.n:
        raise ValueError(f"state must have {op.n} entries, got {state.size}")
    w = state.reshape(grid.n_lambda, grid.n_h).T.ravel()
    out = op.rhs(t, w)
    return out.reshape(grid.n_h, grid.n_lambda).T.ravel()


def _terminal_state(grid: SolverGrid, costs: CostParams) -> np.ndarray:
    u = costs.utility
    vals = np.asarray(u(grid.hs), dtype=float)
    return np.repeat(vals, grid.n_lambda).astype(float)  # W[m, n] layout, lambda fastest


def solve(
    grid: SolverGrid,
    hawkes: HawkesParams,
    model: BreachModel,
    costs: CostParams,
    options: Optional[SolverOptions] = None,
) -> SolveResult:
    """Integrate the value surface backward from the horizon; extract the policy.

    Returns the value and policy fields at every snapshot together with a
    quality report (monotonicity statistics, residual norms, integrator
    counters). Values above lambda_max are understood as clamped to the
    lambda_max column, which is recorded in the field metadata.
    """
    options = options or SolverOptions()
    if abs(grid.horizon - costs.horizon) > 1e-12:
        raise ValueError(
            f"grid horizon {grid.horizon} does not match costs.horizon {costs.horizon}"
        )
    snaps = grid.t_snapshots
    n_nodes = snaps.size * grid.n_lambda * grid.n_h
    if n_nodes > options.max_nodes:
        raise SolverError(
            f"{n_nodes} stored nodes exceed the in-memory limit {options.max_nodes}; "
            "coarsen the grid or reduce snapshots"
        )
    op = _PideOperator(grid, hawkes, model, costs, options)
    y0 = _terminal_state(grid, costs)
    t0 = time.perf_counter()
    try:
        sol = solve_ivp(
            op.rhs,
            (snaps[0], snaps[-1]),
            y0,
            method=options.method,
            t_eval=snaps,
            jac=op.jac,
            rtol=options.rtol,
            atol=options.atol,
        )
    except FloatingPointError as exc:
        raise SolverError(f"integration diverged: {exc}") from exc
    wall = time.perf_counter() - t0
    diagnostics = {
        "nfev": int(sol.nfev),
        "njev": int(sol.njev),
        "nlu": int(sol.nlu),
        "status": int(sol.status),
        "message": str(sol.message),
    }
    if not sol.success:
        raise SolverError(f"stiff integration failed: {sol.message}", diagnostics)

    nl, nh = grid.n_lambda, grid.n_h
    n_snap = snaps.size
    values = np.empty((n_snap, nl, nh))
    controls = np.empty((n_snap, nl, nh))
    for k in range(n_snap):
        w = sol.y[:, k]
        values[k] = w.reshape(nh, nl).T
        controls[k] = op.policy(w).reshape(nh, nl).T

    meta_v = FieldMeta("value", hawkes, model, costs, options)
    meta_p = FieldMeta("policy", hawkes, model, costs, options)
    vf = ValueField(grid, values, meta_v)
    pf = PolicyField(grid, controls, meta_p)
    quality = _quality_report(vf, op, wall, diagnostics)
    return SolveResult(vf, pf, quality)


def _monotonicity_stats(values: np.ndarray, axis: int, tol: float) -> dict:
    diffs = np.diff(values, axis=axis)
    viol = diffs < -tol
    return {
        "violations": int(viol.sum()),
        "fraction": float(viol.sum() / max(values.size, 1)),
        "worst": float(max(-diffs.min(), 0.0)) if diffs.size else 0.0,
    }


def _quality_report(vf: ValueField, op: _PideOperator, wall: float, diagnostics: dict) -> dict:
    values = vf.values
    scale = max(1.0, float(np.max(np.abs(values))))
    tol = 1e-6 * scale
    report = {
        "n_nodes": int(values.size),
        "scale": scale,
        "monotonicity_tolerance": tol,
        "monotone_lambda": _monotonicity_stats(values, axis=1, tol=tol),
        "monotone_h": _monotonicity_stats(values, axis=2, tol=tol),
        "integrator": dict(diagnostics, method=op.options.method, rtol=op.options.rtol, atol=op.options.atol),
        "wall_time_s": float(wall),
    }
    if values.shape[0] >= 3:
        mid = values.shape[0] // 2
        interior, boundary = _residual_split(vf, mid, op)
        report["residual"] = {
            "snapshot": int(mid),
            "time": float(vf.grid.t_snapshots[mid]),
            "interior_max": interior,
            "boundary_max": boundary,
        }
    return report


def _residual_split(field: ValueField, at: int, op: _PideOperator) -> tuple:
    grid = field.grid
    snaps = grid.t_snapshots
    v_prev = field.values[at - 1].T.ravel()
    v_next = field.values[at + 1].T.ravel()
    dvdt = (v_next - v_prev) / (snaps[at + 1] - snaps[at - 1])
    resid = np.abs(dvdt - op.rhs(snaps[at], field.values[at].T.ravel()))
    res = resid.reshape(grid.n_h, grid.n_lambda)
    nl, nh = grid.n_lambda, grid.n_h
    interior_mask = np.zeros((nh, nl), dtype=bool)
    if nh > 2 and nl > 2:
        interior_mask[1:-1, 1:-1] = True
    elif nl == 1 and nh > 2:
        interior_mask[1:-1, :] = True
    interior = float(res[interior_mask].max()) if interior_mask.any() else float(res.max())
    boundary = float(res[~interior_mask].max()) if (~interior_mask).any() else 0.0
    return interior, boundary


def hjb_residual(field: ValueField, at: int) -> float:
    """Max-norm equation residual at an interior snapshot, interior nodes only.

    The time derivative is approximated by the central difference of the two
    neighboring snapshots and compared against the spatial operator applied to
    the stored surface.
    """
    if field.grid.t_snapshots.size < 3:
        raise ValueError("need at least three snapshots to form a time derivative")
    if not (1 <= at <= field.grid.t_snapshots.size - 2):
        raise ValueError(f"snapshot index {at} is not interior")
    meta = field.meta
    op = _PideOperator(field.grid, meta.hawkes, meta.model, meta.costs, meta.options)
    interior, _ = _residual_split(field, at, op)
    return interior


def _nearest_index(x: float, lo: float, step: float, n: int) -> int:
    return int(np.clip(round((x - lo) / step), 0, n - 1))


def query(field, t: float, lam: float, h: float, mode: Optional[str] = None) -> float:
    """Field value at (t, lambda, h): nearest snapshot in t, nearest node or
    bilinear interpolation in (lambda, h).

    lambda above the grid is clamped to lambda_max (the extrapolation rule);
    h outside the grid is clamped with a warning.
    """
    grid = field.grid
    data = field.values if isinstance(field, ValueField) else field.controls
    T = grid.horizon
    if not (0.0 <= t <= T + 1e-12):
        raise ValueError(f"query time {t} outside [0, {T}]")
    if mode is None:
        mode = "linear" if field.meta.options.interp_query else "nearest"
    snaps = grid.t_snapshots
    k = int(np.argmin(np.abs(snaps - t)))
    if h < grid.h_min - 1e-12 or h > grid.h_max + 1e-12:
        warnings.warn(f"level {h} outside [{grid.h_min}, {grid.h_max}]; clamping", RuntimeWarning)
    lam_c = min(max(lam, grid.lambda_min), grid.lambda_max)
    h_c = min(max(h, grid.h_min), grid.h_max)
    if mode == "nearest":
        i = _nearest_index(lam_c, grid.lambda_min, grid.d_lambda, grid.n_lambda)
        j = _nearest_index(h_c, grid.h_min, grid.d_h, grid.n_h)
        return float(data[k, i, j])
    if mode != "linear":
        raise ValueError(f"unknown query mode {mode!r}")
    fi = (lam_c - grid.lambda_min) / grid.d_lambda
    fj = (h_c - grid.h_min) / grid.d_h
    i0 = int(np.clip(math.floor(fi), 0, grid.n_lambda - 1))
    j0 = int(np.clip(math.floor(fj), 0, grid.n_h - 1))
    i1 = min(i0 + 1, grid.n_lambda - 1)
    j1 = min(j0 + 1, grid.n_h - 1)
    wi = fi - i0
    wj = fj - j0
    v00, v01 = data[k, i0, j0], data[k, i0, j1]
    v10, v11 = data[k, i1, j0], data[k, i1, j1]
    return float((1 - wi) * ((1 - wj) * v00 + wj * v01) + wi * ((1 - wj) * v10 + wj * v11))
