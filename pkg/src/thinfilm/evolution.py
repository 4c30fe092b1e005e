"""Mass-conservative implicit time stepping for the regularized flow

    u_t + d/dx [ f_eps(u) d/dx (u_xx + alpha^2 u + cos x) ] = 0,
    f_eps(z) = max(z, 0)^n + eps,

on the periodic grid.  Space is discretized in conservative flux form with
second-order stencils: nodal pressure p_i = (u_{i-1} - 2u_i + u_{i+1})/h^2
+ alpha^2 u_i + cos x_i and edge fluxes F_{i+1/2} = m_{i+1/2} (p_{i+1} -
p_i)/h, so the discrete mass h*sum(u) telescopes to a constant at every
step.  Time is backward Euler: unconditionally stable for the stiff
fourth-order operator, and first-order accuracy is acceptable because the
scheme's job is to land on steady states, not to track transients to high
order.

Each step solves the nonlinear system by Newton iteration with an
analytically assembled Jacobian.  The pressure stencil couples each flux
divergence to five consecutive nodes, so the Jacobian is cyclic
pentadiagonal; it is solved by sparse LU.  A step is accepted only if
Newton converged, the iterate stayed positive (when the run guards
positivity), and the energy did not increase beyond a round-off slack.
On rejection the step size halves; after five consecutive accepts it
doubles, within [dt_min, dt_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import steady
from .functionals import DiagnosticsSample, Params, diagnostics_sample, energy
from .grid import Field, integrate


class NonConvergence(RuntimeError):
    """Newton (or the energy guard) kept failing all the way down to dt_min."""


class PositivityLoss(RuntimeError):
    """The positivity guard kept rejecting steps all the way down to dt_min."""


@dataclass(frozen=True)
class SchemeConfig:
    N: int
    dt0: float
    dt_min: float
    dt_max: float
    t_end: float
    log_times: tuple = ()
    newton_tol: float = 1e-10
    newton_max: int = 12
    energy_slack: float = 1e-10  # allowed energy increase per step, times (1 + |E|)
    edge_mobility: str = "arithmetic"  # or "harmonic", for degenerate-front experiments
    sample_every: int = 1

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt0 <= self.dt_max):
            raise ValueError("require 0 < dt_min <= dt0 <= dt_max")
        if self.newton_tol <= 0 or self.newton_max < 1:
            raise ValueError("newton_tol must be positive, newton_max >= 1")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if any(t < 0 or t > self.t_end + 1e-12 for t in self.log_times):
            raise ValueError("log_times must lie in [0, t_end]")
        if self.edge_mobility not in ("arithmetic", "harmonic"):
            raise ValueError("edge_mobility must be 'arithmetic' or 'harmonic'")
        object.__setattr__(self, "log_times", tuple(sorted(self.log_times)))


@dataclass
class EvolutionState:
    t: float
    u: Field
    step_count: int = 0
    dt_current: float = 0.0
    accepts_in_row: int = 0
    enforce_positive: bool = False
    samples: list = dataclass_field(default_factory=list)


def pressure(u: Field, alpha: float) -> Field:
    """Discrete pressure p = u_xx + alpha^2 u + cos x with the 3-point stencil."""
    v = u.values
    h = u.grid.h
    pxx = (np.roll(v, 1) - 2.0 * v + np.roll(v, -1)) / (h * h)
    return Field(u.grid, pxx + alpha**2 * v + np.cos(u.grid.nodes))


def _mobility(v: np.ndarray, params: Params) -> np.ndarray:
    return np.where(v > 0.0, v, 0.0) ** params.n + params.eps


def _edge_mobility(f: np.ndarray, kind: str) -> np.ndarray:
    fr = np.roll(f, -1)
    if kind == "arithmetic":
        return 0.5 * (f + fr)
    s = f + fr
    return np.where(s > 0.0, 2.0 * f * fr / np.where(s > 0.0, s, 1.0), 0.0)


def flux(u: Field, p: Field, params: Params, edge_mobility: str = "arithmetic") -> np.ndarray:
    """Edge fluxes F[i] = m_{i+1/2} (p_{i+1} - p_i)/h between nodes i and i+1."""
    f = _mobility(u.values, params)
    m = _edge_mobility(f, edge_mobility)
    return m * (np.roll(p.values, -1) - p.values) / u.grid.h


def divergence(F: np.ndarray, h: float) -> np.ndarray:
    return (F - np.roll(F, 1)) / h


def _gradients(v, h, alpha, cos_x):
    """Edge pressure gradients (p_{i+1} - p_i)/h via cascaded differences.

    Forming p first and differencing it amplifies round-off by 1/h^4 across
    the whole chain; successive differences of neighbouring values are exact
    (or nearly so) in floating point, which keeps the flux evaluation at
    relative precision.  Returns (du, gp) with du the edge differences.
    """
    du = np.roll(v, -1) - v
    ddu = du - np.roll(du, 1)
    dddu = np.roll(ddu, -1) - ddu
    dcos = np.roll(cos_x, -1) - cos_x
    gp = dddu / h**3 + alpha**2 * du / h + dcos / h
    return du, gp


def _residual(v, u_old, dt, grid, params, cos_x, kind):
    """G(v) = v - u_old + dt * div(F(v)); the step equation in u-units."""
    h = grid.h
    du, gp = _gradients(v, h, params.alpha, cos_x)
    f = _mobility(v, params)
    m = _edge_mobility(f, kind)
    F = m * gp
    ddu = du - np.roll(du, 1)
    p = ddu / (h * h) + params.alpha**2 * v + cos_x
    return v - u_old + dt * (F - np.roll(F, 1)) / h, p, m, F


def _jacobian(v, p, m, dt, grid, params, kind) -> sp.csc_matrix:
    """Analytic Jacobian of the residual: cyclic pentadiagonal."""
    N = grid.N
    h = grid.h
    a2 = params.alpha**2
    c = dt / h
    h2 = h * h
    h3 = h2 * h
    n = params.n
    # d f_eps / dv and its effect on the two edge mobilities adjacent to a node
    fp = np.where(v > 0.0, n * np.where(v > 0.0, v, 1.0) ** (n - 1.0), 0.0)
    if kind == "harmonic":
        f = _mobility(v, params)
        fr = np.roll(f, -1)
        s = f + fr
        s = np.where(s > 0.0, s, 1.0)
        dm_left = 2.0 * fp * (fr / s) ** 2               # d m_{i+1/2} / d v_i
        dm_right = 2.0 * np.roll(fp, -1) * (f / s) ** 2  # d m_{i+1/2} / d v_{i+1}
    else:
        dm_left = 0.5 * fp
        dm_right = 0.5 * np.roll(fp, -1)
    gp = (np.roll(p, -1) - p) / h  # pressure gradient on edge i

    # F_e couples v_{e-1}..v_{e+2}; row i sees edges i and i-1.
    m_prev = np.roll(m, 1)
    gp_prev = np.roll(gp, 1)
    d_m2 = c * m_prev / h3
    d_m1 = c * (-m / h3 - np.roll(dm_left, 1) * gp_prev - m_prev * (3.0 / h2 - a2) / h)
    d_0 = 1.0 + c * (dm_left * gp - np.roll(dm_right, 1) * gp_prev
                     + (m + m_prev) * (3.0 / h2 - a2) / h)
    d_p1 = c * (dm_right * gp + m * (a2 - 3.0 / h2) / h - m_prev / h3)
    d_p2 = c * m / h3

    idx = np.arange(N)
    rows = np.concatenate([idx] * 5)
    cols = np.concatenate([(idx - 2) % N, (idx - 1) % N, idx, (idx + 1) % N, (idx + 2) % N])
    data = np.concatenate([d_m2, d_m1, d_0, d_p1, d_p2])
    return sp.csc_matrix((data, (rows, cols)), shape=(N, N))


_FLOOR_SAFETY = 4.0


def _representability_floor(u_old, dt, grid, params) -> float:
    """Smallest residual magnitude attainable at the solution.

    The iterate carries at best eps * |u| of resolution; pushed through the
    implicit operator, whose norm grows like 16 dt max(f_eps)/h^4 along the
    fourth-difference chain, that resolution limit reappears as a residual
    of this size.  Newton cannot do better in double precision.
    """
    eps_m = float(np.finfo(float).eps)
    umax = float(np.abs(u_old).max())
    fmax = float(_mobility(u_old, params).max())
    return _FLOOR_SAFETY * eps_m * max(1.0, umax) * (1.0 + 16.0 * dt * fmax / grid.h**4)


def _newton(u_old, dt, grid, params, cos_x, tol_abs, newton_max, kind):
    """Newton iteration for the backward-Euler system.

    Converged when the residual reaches newton_tol scale -- or, after at
    least one real update has absorbed the resolved physics, when it
    reaches the double-precision representability floor.  The floor is
    never applied to the unmoved initial iterate, so near-steady states
    still take their genuine relaxation step.
    """
    floor = max(tol_abs, _representability_floor(u_old, dt, grid, params))
    v = u_old.copy()
    for it in range(newton_max):
        G, p, m, _ = _residual(v, u_old, dt, grid, params, cos_x, kind)
        gmax = float(np.abs(G).max())
        if gmax <= tol_abs or (it > 0 and gmax <= floor):
            return v, True
        J = _jacobian(v, p, m, dt, grid, params, kind)
        v_new = v + spsolve(J, -G)
        if np.array_equal(v_new, v):  # update below the last ulp; cannot improve
            return v, bool(gmax <= floor)
        v = v_new
    G, _, _, _ = _residual(v, u_old, dt, grid, params, cos_x, kind)
    return v, bool(np.abs(G).max() <= floor)


def step(state: EvolutionState, config: SchemeConfig, params: Params,
         max_dt: Optional[float] = None) -> EvolutionState:
    """Advance one accepted backward-Euler step, adapting dt on rejection.

    The Newton convergence test is on the u-units residual,
    sup|v - u + dt div F(v)| <= newton_tol (1 + sup|u|), i.e. the PDE-form
    residual scaled by dt, which keeps accept/reject behaviour uniform
    across step sizes.  Raises NonConvergence or PositivityLoss once dt_min
    is reached.
    """
    grid = state.u.grid
    cos_x = np.cos(grid.nodes)
    u_old = state.u.values
    tol_abs = config.newton_tol * (1.0 + float(np.abs(u_old).max()))
    E_old = energy(state.u, params.alpha)
    dt_nominal = min(state.dt_current if state.dt_current > 0 else config.dt0, config.dt_max)

    while True:
        dt = dt_nominal if max_dt is None else min(dt_nominal, max_dt)
        v, converged = _newton(u_old, dt, grid, params, cos_x,
                               tol_abs, config.newton_max, config.edge_mobility)
        # The conservative form makes sum(v) = sum(u_old) an identity of the
        # step equation; re-impose it exactly so linear-solver round-off
        # cannot random-walk the mass over long runs.
        v = v - (math.fsum(v) - math.fsum(u_old)) / grid.N
        reason = None
        if not converged:
            reason = "newton"
        elif state.enforce_positive and v.min() <= 0.0:
            reason = "positivity"
        else:
            E_new = energy(Field(grid, v), params.alpha)
            if E_new > E_old + config.energy_slack * (1.0 + abs(E_old)):
                reason = "energy"
        if reason is None:
            break
        if dt <= config.dt_min * (1.0 + 1e-12):
            if reason == "positivity":
                raise PositivityLoss(f"step rejected ({reason}) at dt_min = {config.dt_min}")
            raise NonConvergence(f"step rejected ({reason}) at dt_min = {config.dt_min}")
        dt_nominal = max(dt / 2.0, config.dt_min)

    accepts = state.accepts_in_row + 1
    if accepts >= 5:
        dt_nominal = min(2.0 * dt_nominal, config.dt_max)
        accepts = 0
    return EvolutionState(
        t=state.t + dt,
        u=Field(grid, v),
        step_count=state.step_count + 1,
        dt_current=dt_nominal,
        accepts_in_row=accepts,
        enforce_positive=state.enforce_positive,
        samples=state.samples,
    )


@dataclass
class TrajectoryRecord:
    """Everything a run produces: per-step diagnostics, snapshot fields at the
    requested log times, the reference minimizer, and the entropy excess."""

    params: Params
    config: SchemeConfig
    samples: list
    snapshots: dict
    reference: steady.SteadyState
    ref_field: Field
    final: Field
    entropy_excess_max: float

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


def run(u0: Field, params: Params, config: SchemeConfig) -> TrajectoryRecord:
    """Integrate to t_end, recording diagnostics each accepted step (subject
    to sample_every) and snapshots exactly at the log times.

    eps = 0 needs nonnegative data: with exact zeros the dry set carries no
    mobility and stays inert (the positive-interior variant, used for
    steady-preservation runs); strictly positive data additionally keeps
    the positivity guard on, so a nonpositive Newton solution rejects the
    step.
    """
    if u0.values.min() < -1e-13:
        raise ValueError("initial data must be nonnegative (eps = 0 included: "
                         "exact zeros are inert, negative values are not)")
    ref_state = steady.minimizer(params.alpha, integrate(u0))
    ref_field = steady.evaluate(ref_state, u0.grid)

    state = EvolutionState(
        t=0.0, u=u0, dt_current=config.dt0,
        enforce_positive=bool(u0.values.min() > 0.0),
    )
    kad_beta = params.n - 1.5

    def measure(st: EvolutionState) -> DiagnosticsSample:
        sample = diagnostics_sample(st.t, st.u, params, ref_field)
        st.samples.append(sample)
        return sample

    first = measure(state)
    s_kad0 = float(first.S[kad_beta]) if kad_beta in first.S else math.nan
    entropy_excess = 0.0

    snapshots = {}
    remaining = list(config.log_times)
    def near(a, b):
        return abs(a - b) <= 1e-12 * max(1.0, abs(b))
    while remaining and near(state.t, remaining[0]):
        snapshots[remaining.pop(0)] = state.u

    steps_since_sample = 0
    while state.t < config.t_end and not near(state.t, config.t_end):
        target = remaining[0] if remaining else config.t_end
        state = step(state, config, params, max_dt=target - state.t)
        steps_since_sample += 1
        at_target = near(state.t, target)
        if steps_since_sample >= config.sample_every or at_target:
            sample = measure(state)
            steps_since_sample = 0
            if kad_beta in sample.S:
                entropy_excess = max(entropy_excess, float(sample.S[kad_beta]) - s_kad0)
        while remaining and near(state.t, remaining[0]):
            snapshots[remaining.pop(0)] = state.u

    return TrajectoryRecord(
        params=params, config=config, samples=state.samples,
        snapshots=snapshots, reference=ref_state, ref_field=ref_field,
        final=state.u, entropy_excess_max=entropy_excess,
    )
