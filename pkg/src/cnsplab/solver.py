"""Nonlinear time evolution in velocity form (a, u) and momentum form (a, m).

Velocity form (density fluctuation a = rho - 1, equilibrium rho* = 1):

    dt a + div u = -div(a u),
    dt u - Abar u + gamma grad a + kappa grad (-Lap)^{-1} a
        = -(u.grad)u + (1+Q(a)) (div(2 mu1t(a) D(u)) + grad(mu2t(a) div u))
          + G(a) grad a + Q(a) Abar u,

with Q(a) = 1/(1+a) - 1, G(a) = (1+a)P'(1+a) - gamma, mu_it(a) = mu_i(1+a)
- mu_i(1), and Abar u = mu1 Lap u + (mu1+mu2) grad div u.  The Q(a) Abar u
term is the quadratic remainder of the variable-coefficient viscous operator
(1/rho) A(u); it is kept so the velocity and momentum forms are consistent
reformulations of the same system through quadratic order (the per-component
breakdown still reports g2 = 0 for constant viscosities).

Momentum form (m = rho u): every nonlinear term sits under a divergence,

    dt a + div m = 0,
    dt m - Abar m + gamma grad a + kappa grad (-Lap)^{-1} a = div N,

    N = -u (x) u - H(a) Id + kappa (grad psi (x) grad psi - |grad psi|^2/2 Id)
        + 2 mu1t(a) D(m) + mu2t(a) div m Id
        + 2 (mu1 + mu1t(a)) D(Q(a) m) + (mu2 + mu2t(a)) div(Q(a) m) Id,

with psi = (-Lap)^{-1} a and H(a) = P(1+a) - P(1) - gamma a (H(0) = H'(0) = 0).
Mass is conserved exactly (the a-nonlinearity is a divergence), and in
momentum form the flow mean is conserved as well.

Time stepping is exponential (ETD1 / ETD2RK): the linear flow is applied
exactly per mode via the closed-form propagator, so stiffness imposes no
time-step limit; only the advective CFL condition remains.  Derivatives are
spectral, products are formed pointwise in physical space and dealiased by
the 2/3 rule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import grid as gridmod
from . import kernels
from .grid import Grid
from .semigroup import ModelParams


class VacuumError(RuntimeError):
    """Density dropped to the vacuum guard (min rho <= 0.05) or left the
    perturbative regime (||a||_inf >= 1)."""


class CflError(RuntimeError):
    """Advective CFL violated; the message suggests an admissible dt."""


class NumericsError(RuntimeError):
    """Non-finite values appeared in the state."""


# ----------------------------------------------------------------------
# constitutive laws
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PressureLaw:
    """Barotropic pressure P(rho) with its derivative; gamma = dP(1)."""

    P: Callable
    dP: Callable
    name: str = "linear"


def linear_pressure(gamma: float = 1.0) -> PressureLaw:
    return PressureLaw(P=lambda rho: gamma * rho,
                       dP=lambda rho: gamma * np.ones_like(np.asarray(rho)),
                       name="linear")


@dataclass(frozen=True)
class ViscosityLaw:
    """Density-dependent shear/bulk viscosities; constant by default."""

    mu1: Callable
    mu2: Callable
    constant: bool = True
    name: str = "constant"


def constant_viscosity(params: ModelParams) -> ViscosityLaw:
    return ViscosityLaw(
        mu1=lambda rho: params.mu1_bar * np.ones_like(np.asarray(rho)),
        mu2=lambda rho: params.mu2_bar * np.ones_like(np.asarray(rho)),
        constant=True)


# ----------------------------------------------------------------------
# state
# ----------------------------------------------------------------------

@dataclass
class CnspState:
    """Spectral state (a_hat, flow_hat); flow is u or m depending on form."""

    grid: Grid
    params: ModelParams
    a_hat: np.ndarray
    flow_hat: np.ndarray
    form: str = "velocity"
    pressure: PressureLaw | None = None
    viscosity: ViscosityLaw | None = None

    def __post_init__(self):
        if self.form not in ("velocity", "momentum"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.pressure is None:
            self.pressure = linear_pressure(self.params.gamma)
        if self.viscosity is None:
            self.viscosity = constant_viscosity(self.params)
        if abs(float(np.asarray(self.pressure.dP(1.0)).ravel()[0])
               - self.params.gamma) > 1e-12:
            raise ValueError("pressure law must satisfy P'(1) = gamma")

    def with_fields(self, **kw) -> "CnspState":
        return replace(self, **kw)

    def a_phys(self) -> np.ndarray:
        return gridmod.inverse(self.grid, self.a_hat)

    def flow_phys(self) -> np.ndarray:
        return gridmod.inverse(self.grid, self.flow_hat)

    def mean_a(self) -> complex:
        return complex(self.a_hat.flat[0])

    def to_velocity(self) -> "CnspState":
        if self.form == "velocity":
            return self
        a = self.a_phys()
        _guard_vacuum(a)
        u = self.flow_phys() / (1.0 + a)
        return self.with_fields(flow_hat=gridmod.forward(self.grid, u),
                                form="velocity")

    def to_momentum(self) -> "CnspState":
        if self.form == "momentum":
            return self
        a = self.a_phys()
        _guard_vacuum(a)
        m = (1.0 + a) * self.flow_phys()
        return self.with_fields(flow_hat=gridmod.forward(self.grid, m),
                                form="momentum")


def _guard_vacuum(a_phys: np.ndarray) -> None:
    amax = float(np.max(np.abs(a_phys)))
    rho_min = float(np.min(1.0 + a_phys))
    if rho_min <= 0.05:
        raise VacuumError(f"vacuum guard tripped: min(rho) = {rho_min:.3g}")
    if amax >= 1.0:
        raise VacuumError(f"perturbation left |a| < 1: ||a||_inf = {amax:.3g}")


# ----------------------------------------------------------------------
# composite coefficient functions
# ----------------------------------------------------------------------

def composite(fn: str, a_phys: np.ndarray, pressure: PressureLaw,
              viscosity: ViscosityLaw, params: ModelParams) -> np.ndarray:
    """Pointwise composites of the density fluctuation; all vanish at a = 0.

    fn: 'Q'    -> 1/(1+a) - 1
        'Gfun' -> (1+a) P'(1+a) - gamma
        'mu1t' -> mu1(1+a) - mu1(1)
        'mu2t' -> mu2(1+a) - mu2(1)
        'Hfun' -> P(1+a) - P(1) - gamma a
    """
    _guard_vacuum(a_phys)
    rho = 1.0 + a_phys
    if fn == "Q":
        return 1.0 / rho - 1.0
    if fn == "Gfun":
        return rho * pressure.dP(rho) - params.gamma
    if fn == "mu1t":
        return viscosity.mu1(rho) - params.mu1_bar
    if fn == "mu2t":
        return viscosity.mu2(rho) - params.mu2_bar
    if fn == "Hfun":
        return pressure.P(rho) - pressure.P(np.asarray(1.0)) - params.gamma * a_phys
    raise ValueError(f"unknown composite {fn!r}")


# ----------------------------------------------------------------------
# nonlinearities
# ----------------------------------------------------------------------

def _dealias(grid: Grid, coef: np.ndarray, mask: np.ndarray | None):
    return coef if mask is None else coef * mask


def _abar_hat(grid: Grid, params: ModelParams, u_hat: np.ndarray) -> np.ndarray:
    """Spectral linearized viscous operator Abar u."""
    div = sum(grid.ks[c] * u_hat[c] for c in range(grid.dim))
    return np.stack([-params.mu1_bar * grid.xi2 * u_hat[c]
                     - (params.mu1_bar + params.mu2_bar) * grid.ks[c] * div
                     for c in range(grid.dim)])


def _deformation_phys(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    """D(u)_{ij} = (d_i u_j + d_j u_i)/2 in physical space, shape (d, d, ...)."""
    d = grid.dim
    du = np.empty((d, d) + grid.shape)
    for i in range(d):
        for jx in range(d):
            du[i, jx] = gridmod.inverse(grid, 1j * grid.ks[i] * u_hat[jx])
    return 0.5 * (du + np.swapaxes(du, 0, 1))


def nonlinear_g(state: CnspState, dealias: bool = True,
                return_parts: bool = False):
    """Velocity-form nonlinearity g = g1 + g2 + g3 + g4 (spectral, dealiased).

    g1 = -(u.grad)u, g2 = (1+Q)(div(2 mu1t D(u)) + grad(mu2t div u)),
    g3 = G(a) grad a, g4 = Q(a) Abar u (quadratic viscous remainder; zero at
    a = 0, and g2 = 0 identically for constant viscosities).
    """
    if state.form != "velocity":
        raise ValueError("nonlinear_g expects a velocity-form state")
    g = state.grid
    mask = gridmod.dealias_mask(g) if dealias else None
    a = state.a_phys()
    _guard_vacuum(a)
    u_hat = state.flow_hat
    u = state.flow_phys()
    d = g.dim

    grad_u = np.empty((d, d) + g.shape)   # grad_u[i, j] = d_i u_j
    for i in range(d):
        for jx in range(d):
            grad_u[i, jx] = gridmod.inverse(g, 1j * g.ks[i] * u_hat[jx])
    adv = np.stack([sum(u[c] * grad_u[c, i] for c in range(d)) for i in range(d)])
    g1 = _dealias(g, gridmod.forward(g, -adv), mask)

    Qa = composite("Q", a, state.pressure, state.viscosity, state.params)
    if state.viscosity.constant:
        g2 = np.zeros_like(g1)
    else:
        mu1t = composite("mu1t", a, state.pressure, state.viscosity, state.params)
        mu2t = composite("mu2t", a, state.pressure, state.viscosity, state.params)
        Du = 0.5 * (grad_u + np.swapaxes(grad_u, 0, 1))
        T_hat = gridmod.forward(g, 2.0 * mu1t * Du)
        divT = np.stack([sum(1j * g.ks[jx] * T_hat[i, jx] for jx in range(d))
                         for i in range(d)])
        divu = np.trace(grad_u)
        s_hat = gridmod.forward(g, mu2t * divu)
        divT = divT + np.stack([1j * g.ks[c] * s_hat for c in range(d)])
        g2 = _dealias(g, gridmod.forward(
            g, (1.0 + Qa) * gridmod.inverse(g, divT)), mask)

    Ga = composite("Gfun", a, state.pressure, state.viscosity, state.params)
    grad_a = gridmod.inverse(g, gridmod.grad_hat(g, state.a_hat))
    g3 = _dealias(g, gridmod.forward(g, Ga * grad_a), mask)

    abar_u = gridmod.inverse(g, _abar_hat(g, state.params, u_hat))
    g4 = _dealias(g, gridmod.forward(g, Qa * abar_u), mask)

    total = g1 + g2 + g3 + g4
    if return_parts:
        return total, {"g1": g1, "g2": g2, "g3": g3, "g4": g4}
    return total


def nonlinear_N(state: CnspState, dealias: bool = True) -> np.ndarray:
    """Momentum-form quadratic flux tensor N (spectral, dealiased), whose
    divergence forces the m-equation.  u is recovered as u = m + Q(a) m."""
    if state.form != "momentum":
        raise ValueError("nonlinear_N expects a momentum-form state")
    g = state.grid
    d = g.dim
    mask = gridmod.dealias_mask(g) if dealias else None
    a = state.a_phys()
    _guard_vacuum(a)
    m = state.flow_phys()
    Qa = composite("Q", a, state.pressure, state.viscosity, state.params)
    u = m + Qa * m

    N = np.empty((d, d) + g.shape)
    for i in range(d):
        for jx in range(d):
            N[i, jx] = -u[i] * u[jx]

    Ha = composite("Hfun", a, state.pressure, state.viscosity, state.params)
    for i in range(d):
        N[i, i] -= Ha

    # electrostatic stress, psi = (-Lap)^{-1} a
    xi2 = np.where(g.xi2 > 0, g.xi2, 1.0)
    psi_hat = state.a_hat / xi2
    psi_hat[g.xi2 == 0] = 0.0
    gpsi = gridmod.inverse(g, gridmod.grad_hat(g, psi_hat))
    kap = state.params.kappa
    for i in range(d):
        for jx in range(d):
            N[i, jx] += kap * gpsi[i] * gpsi[jx]
        N[i, i] -= 0.5 * kap * sum(gpsi[c] ** 2 for c in range(d))

    # viscous couplings in m and Q(a) m
    mu1t = composite("mu1t", a, state.pressure, state.viscosity, state.params)
    mu2t = composite("mu2t", a, state.pressure, state.viscosity, state.params)
    Dm = _deformation_phys(g, state.flow_hat)
    qm_hat = gridmod.forward(g, Qa * m)
    Dqm = _deformation_phys(g, qm_hat)
    divm = gridmod.inverse(g, gridmod.div_hat(g, state.flow_hat))
    divqm = gridmod.inverse(g, gridmod.div_hat(g, qm_hat))
    mu1b, mu2b = state.params.mu1_bar, state.params.mu2_bar
    N += 2.0 * mu1t * Dm + 2.0 * (mu1b + mu1t) * Dqm
    for i in range(d):
        N[i, i] += mu2t * divm + (mu2b + mu2t) * divqm

    return _dealias(g, gridmod.forward(g, N), mask)


def _rhs(state: CnspState, dealias: bool):
    """(f_hat, g_hat, max|u|): nonlinear sources of the a- and flow-equations."""
    g = state.grid
    if state.form == "velocity":
        a = state.a_phys()
        u = state.flow_phys()
        prod = gridmod.forward(g, a * u)
        if dealias:
            prod = prod * gridmod.dealias_mask(g)
        f_hat = -gridmod.div_hat(g, prod)
        g_hat = nonlinear_g(state, dealias=dealias)
        umax = float(np.max(np.sqrt(sum(u[c] ** 2 for c in range(g.dim)))))
        return f_hat, g_hat, umax
    N_hat = nonlinear_N(state, dealias=dealias)
    g_hat = np.stack([sum(1j * g.ks[jx] * N_hat[i, jx] for jx in range(g.dim))
                      for i in range(g.dim)])
    a = state.a_phys()
    m = state.flow_phys()
    Qa = composite("Q", a, state.pressure, state.viscosity, state.params)
    u = m + Qa * m
    umax = float(np.max(np.sqrt(sum(u[c] ** 2 for c in range(g.dim)))))
    return np.zeros_like(state.a_hat), g_hat, umax


# ----------------------------------------------------------------------
# exponential integrator
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "etd2rk"
    dealias: bool = True
    cfl_target: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("etd1", "etd2rk"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


class EtdStepper:
    """Exponential integrator with the exact per-mode linear propagator.

    The linear symbol is applied in the (a_hat, V_hat, solenoidal) splitting;
    phi_1/phi_2 weights of the same 2x2 blocks multiply the nonlinear
    increments (Cox-Matthews ETD1/ETD2RK).  Caches are built once per
    (grid, params, dt).
    """

    def __init__(self, grid: Grid, params: ModelParams, config: StepperConfig):
        self.grid = grid
        self.params = params
        self.config = config
        dt = config.dt
        xi2 = grid.xi2
        p0, p1, beta, e22 = kernels.green_core(
            dt, xi2, params.mu1_bar, params.mu2_bar, params.kappa, params.gamma)
        xin = np.where(grid.xi > 0, grid.xi, 1.0)
        H = params.kappa + params.gamma * xi2
        self.e_heat = p0
        self.E11, self.E22 = p1, e22
        self.E12 = -1j * grid.xi * beta
        self.E21 = -1j * H * beta / xin
        zero = xi2 == 0
        self.E11 = np.where(zero, 1.0, self.E11)
        self.E22 = np.where(zero, 1.0, self.E22)
        self.E12 = np.where(zero, 0.0, self.E12)
        self.E21 = np.where(zero, 0.0, self.E21)

        from ._green_py import stable_eigenvalues
        lp, lm = stable_eigenvalues(xi2, params.mu1_bar, params.mu2_bar,
                                    params.kappa, params.gamma)
        wbar = 0.5 * (lp + lm) * dt
        w12 = -1j * grid.xi * dt
        w21 = -1j * H * dt / xin
        self._phi = {}
        for order in (1, 2):
            a_f, b_f = kernels.phi_pair_2x2(order, lp * dt, lm * dt)
            f11 = a_f - b_f * wbar
            f22 = a_f + b_f * wbar
            f12 = b_f * w12
            f21 = b_f * w21
            f11 = np.where(zero, 1.0 if order == 1 else 0.5, f11)
            f22 = np.where(zero, 1.0 if order == 1 else 0.5, f22)
            f12 = np.where(zero, 0.0, f12)
            f21 = np.where(zero, 0.0, f21)
            heat = kernels.phi_scalar(order, -params.mu1_bar * xi2 * dt)
            self._phi[order] = (f11, f12, f21, f22, heat)

    # -- helpers on the (a, V, sol) splitting -------------------------------

    def _decompose(self, flow_hat):
        g = self.grid
        xin = np.where(g.xi > 0, g.xi, 1.0)
        V = sum(g.ks[c] * flow_hat[c] for c in range(g.dim)) / xin
        sol = flow_hat - np.stack([g.ks[c] * V / xin for c in range(g.dim)])
        return V, sol

    def _recompose(self, V, sol):
        g = self.grid
        xin = np.where(g.xi > 0, g.xi, 1.0)
        return sol + np.stack([g.ks[c] * V / xin for c in range(g.dim)])

    def _check_cfl(self, umax: float):
        g = self.grid
        kmax = np.pi * g.n_per_dim / g.box_length
        if umax * self.config.dt * kmax > self.config.cfl_target:
            good = self.config.cfl_target / (umax * kmax)
            raise CflError(f"advective CFL violated; use dt <= {good:.3g}")

    def step(self, state: CnspState, linear_only: bool = False) -> CnspState:
        """One ETD step; ``linear_only`` reduces to the exact semigroup."""
        if state.grid is not self.grid and state.grid.shape != self.grid.shape:
            raise ValueError("state grid does not match stepper grid")
        dt = self.config.dt
        a0 = state.a_hat
        V0, sol0 = self._decompose(state.flow_hat)

        aL = self.E11 * a0 + self.E12 * V0
        VL = self.E21 * a0 + self.E22 * V0
        solL = self.e_heat * sol0
        if linear_only:
            out = state.with_fields(a_hat=aL, flow_hat=self._recompose(VL, solL))
            self._guard_finite(out)
            return out

        f0, g0, umax = _rhs(state, self.config.dealias)
        self._check_cfl(umax)
        gV0, gsol0 = self._decompose(g0)
        f11, f12, f21, f22, heat1 = self._phi[1]
        a1 = aL + dt * (f11 * f0 + f12 * gV0)
        V1 = VL + dt * (f21 * f0 + f22 * gV0)
        sol1 = solL + dt * heat1 * gsol0
        stage = state.with_fields(a_hat=a1,
                                  flow_hat=self._recompose(V1, sol1))
        if self.config.scheme == "etd1":
            self._guard_finite(stage)
            return stage

        f1, g1, _ = _rhs(stage, self.config.dealias)
        gV1, gsol1 = self._decompose(g1)
        f11, f12, f21, f22, heat2 = self._phi[2]
        df, dgV, dgsol = f1 - f0, gV1 - gV0, gsol1 - gsol0
        a2 = a1 + dt * (f11 * df + f12 * dgV)
        V2 = V1 + dt * (f21 * df + f22 * dgV)
        sol2 = sol1 + dt * heat2 * dgsol
        out = state.with_fields(a_hat=a2, flow_hat=self._recompose(V2, sol2))
        self._guard_finite(out)
        return out

    @staticmethod
    def _guard_finite(state: CnspState):
        if not (np.all(np.isfinite(state.a_hat.view(float)))
                and np.all(np.isfinite(state.flow_hat.view(float)))):
            raise NumericsError("non-finite values in state")


def step(state: CnspState, stepper: EtdStepper,
         partition=None, linear_only: bool = False) -> CnspState:
    """One step; ``partition`` is accepted for interface parity."""
    return stepper.step(state, linear_only=linear_only)


def run(initial: CnspState, config: StepperConfig, t_end: float,
        observers=(), linear_only: bool = False):
    """Advance to t_end with fixed dt, invoking observers after every step
    (and once at t = 0).  Returns (final_state, t_final).

    On a numerical abort the exception carries the last healthy state in its
    ``last_state`` attribute so it can be persisted.
    """
    stepper = EtdStepper(initial.grid, initial.params, config)
    state, t = initial, 0.0
    for obs in observers:
        obs(t, state)
    if t_end <= 0:
        return state, t
    n_steps = int(np.ceil(t_end / config.dt - 1e-12))
    for _ in range(n_steps):
        try:
            state_new = stepper.step(state, linear_only=linear_only)
        except (VacuumError, CflError, NumericsError) as exc:
            exc.last_state = state
            exc.abort_time = t
            raise
        state = state_new
        t += config.dt
        for obs in observers:
            obs(t, state)
    return state, t


# ----------------------------------------------------------------------
# effective velocity
# ----------------------------------------------------------------------

def effective_velocity(state: CnspState) -> np.ndarray:
    """w = Qu + (1/mubar) grad (-Lap)^{-1} (gamma a + kappa (-Lap)^{-1} a).

    Returned in spectral form, zero-mode corrections set to 0.  This choice
    makes -mubar Lap(Qu) + gamma grad a + kappa grad(-Lap)^{-1} a equal to
    mubar Lambda^2 w, so on linear trajectories the density satisfies the
    damped transport identity
    dt a + (gamma/mubar) a + (kappa/mubar)(-Lap)^{-1} a + div w = 0
    mode by mode (kappa = gamma = 1 is the usual normalization).
    """
    if state.form != "velocity":
        raise ValueError("effective_velocity expects a velocity-form state")
    g = state.grid
    p = state.params
    u_hat = state.flow_hat
    q = gridmod.apply_projector(g, "Q", u_hat)
    xi2 = np.where(g.xi2 > 0, g.xi2, 1.0)
    corr = (p.gamma + p.kappa / xi2) / xi2 * state.a_hat
    corr[g.xi2 == 0] = 0.0
    w = q + (1.0 / p.mu_bar) * np.stack(
        [1j * g.ks[c] * corr for c in range(g.dim)])
    return w
