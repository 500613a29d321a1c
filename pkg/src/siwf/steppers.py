"""Time-stepping kernels for the five dynamical equations.

All steppers are pure functions of (context, state, noise increment).  Each
has an Euler-Maruyama form and an exponential variant that propagates the
linear drift by the exact matrix flow exp(G dt) (computed once per context
by scaling-and-squaring) while keeping the nonlinear and noise terms
explicit; for a closed system the exponential variant is exactly unitary.

The batched kernels advance whole stacks of independent trajectories at
once; the public single-trajectory operations wrap them, except the
nonlinear pure-state step which is implemented directly from its own
equation so the ensemble reduction (a one-component stack must reproduce
it) remains a genuine cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NormViolationError, DensityMatrixError
from .linalg import DEFAULT_TOLS, Tolerances, as_state, frozen, hermitize
from .model import ModelSpec
from .states import WaveEnsemble

SCHEMES = ("euler_maruyama", "exponential_em")


@dataclass(frozen=True)
class StepContext:
    """Everything a stepper needs besides the state and the noise."""

    model: ModelSpec
    scheme: str = "euler_maruyama"
    dt: float = 1e-3
    renormalize: bool = True
    tols: Tolerances = DEFAULT_TOLS
    propagator: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme '{self.scheme}', choose from {SCHEMES}")
        if self.scheme == "exponential_em" and self.propagator is None:
            prop = frozen(scipy.linalg.expm(self.model.drift_generator * self.dt))
            object.__setattr__(self, "propagator", prop)


def _check_dw(ctx: StepContext, dw) -> np.ndarray:
    dw = np.asarray(dw, dtype=float)
    if dw.ndim != 1 or dw.shape[0] < ctx.model.n_channels:
        raise DimensionMismatchError(
            f"noise increment has {dw.shape} entries, model has "
            f"{ctx.model.n_channels} channels"
        )
    return dw[: ctx.model.n_channels]


# ---------------------------------------------------------------------------
# batched kernels: states carry a leading batch axis
# ---------------------------------------------------------------------------

def linear_step_batch(ctx: StepContext, phi: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """One step of the linear equation d phi = G phi dt + sum_l L_l phi dB_l.

    ``phi`` has shape (B, N, d), ``dw`` shape (B, M).  Never normalizes:
    the growing/shrinking norm is the reweighting density.
    """
    ls = ctx.model.lindblads
    stoch = np.zeros_like(phi)
    for l, l_op in enumerate(ls):
        stoch += (phi @ l_op.T) * dw[:, l, None, None]
    if ctx.scheme == "exponential_em":
        return (phi + stoch) @ ctx.propagator.T
    return phi + (phi @ ctx.model.drift_generator.T) * ctx.dt + stoch


def siwf_step_batch(
    ctx: StepContext, psi: np.ndarray, dw: np.ndarray, renormalize: bool | None = None
):
    """One step of the interacting-ensemble equations.

    ``psi`` has shape (B, N, d), ``dw`` shape (B, M).  The coupling
    p_l = sum_n Re<psi_n, L_l psi_n> is evaluated once from the pre-step
    stack (non-anticipating), every component is advanced with drift
    G psi_n + sum_l (p_l L_l psi_n - p_l^2/2 psi_n) and diffusion
    sum_l (L_l psi_n - p_l psi_n) dW_l, and, if renormalizing, the whole
    stack is rescaled by one common factor.

    Returns (new stack, couplings p (B, M), pre-rescale squared norms (B,)).
    """
    if renormalize is None:
        renormalize = ctx.renormalize
    ls = ctx.model.lindblads
    n_ch = len(ls)
    b = psi.shape[0]
    p = np.empty((b, n_ch))
    lpsi = []
    for l, l_op in enumerate(ls):
        lp = psi @ l_op.T
        lpsi.append(lp)
        p[:, l] = np.einsum("bni,bni->b", psi.conj(), lp).real
    nl_drift = np.zeros_like(psi)
    diffusion = np.zeros_like(psi)
    for l in range(n_ch):
        pl = p[:, l, None, None]
        nl_drift += pl * lpsi[l] - 0.5 * pl**2 * psi
        diffusion += (lpsi[l] - pl * psi) * dw[:, l, None, None]
    if ctx.scheme == "exponential_em":
        new = (psi + nl_drift * ctx.dt + diffusion) @ ctx.propagator.T
    else:
        new = (
            psi
            + (psi @ ctx.model.drift_generator.T + nl_drift) * ctx.dt
            + diffusion
        )
    norm_sq = np.einsum("bni,bni->b", new.conj(), new).real
    if renormalize:
        new = new / np.sqrt(norm_sq)[:, None, None]
    return new, p, norm_sq


def belavkin_step_batch(
    ctx: StepContext, rho: np.ndarray, dw: np.ndarray, renormalize: bool | None = None
):
    """One step of the diffusive conditioned master equation.

    ``rho`` has shape (B, d, d), ``dw`` shape (B, M).  Drift is
    G rho + rho G^dag + sum_l L_l rho L_l^dag and diffusion
    sum_l (L_l rho + rho L_l^dag - 2 Re tr(L_l rho) rho) dW_l.  The result
    is re-Hermitized and, if renormalizing, divided by its trace.

    Returns (new stack, Re tr(L_l rho) per channel (B, M)).
    """
    if renormalize is None:
        renormalize = ctx.renormalize
    ls = ctx.model.lindblads
    n_ch = len(ls)
    b = rho.shape[0]
    tr = np.empty((b, n_ch))
    hop = np.zeros_like(rho)
    diffusion = np.zeros_like(rho)
    for l, l_op in enumerate(ls):
        lrho = np.einsum("ij,bjk->bik", l_op, rho)
        rhold = lrho.conj().transpose(0, 2, 1)  # rho L^dag for Hermitian rho
        tr[:, l] = np.einsum("bii->b", lrho).real
        hop += np.einsum("bij,kj->bik", lrho, l_op.conj())
        diffusion += (lrho + rhold - 2.0 * tr[:, l, None, None] * rho) * dw[
            :, l, None, None
        ]
    if ctx.scheme == "exponential_em":
        inner = rho + hop * ctx.dt + diffusion
        prop = ctx.propagator
        new = np.einsum("ij,bjk,lk->bil", prop, inner, prop.conj())
    else:
        g = ctx.model.drift_generator
        grho = np.einsum("ij,bjk->bik", g, rho)
        new = rho + (grho + grho.conj().transpose(0, 2, 1) + hop) * ctx.dt + diffusion
    new = (new + new.conj().transpose(0, 2, 1)) / 2.0
    if renormalize:
        traces = np.einsum("bii->b", new).real
        new = new / traces[:, None, None]
    return new, tr


def gksl_rhs(model: ModelSpec, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the mean (unconditioned) master equation."""
    g = model.drift_generator
    out = g @ rho + rho @ g.conj().T
    for l_op in model.lindblads:
        out += l_op @ rho @ l_op.conj().T
    return out


# ---------------------------------------------------------------------------
# public single-trajectory steps
# ---------------------------------------------------------------------------

def step_linear_sse(ctx: StepContext, phi, dw) -> np.ndarray:
    """Advance one unnormalized state by the linear equation."""
    v = as_state(phi, ctx.model.dim)
    dwv = _check_dw(ctx, dw)
    return linear_step_batch(ctx, v[None, None, :], dwv[None, :])[0, 0]


def step_nonlinear_sse(ctx: StepContext, phi_hat, dw) -> np.ndarray:
    """Advance one normalized pure state by the conditioned state equation.

    With m_l = Re<phi, L_l phi>: drift G phi + sum_l (m_l L_l phi
    - m_l^2/2 phi), diffusion sum_l (L_l phi - m_l phi) dW_l.
    """
    v = as_state(phi_hat, ctx.model.dim)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise NormViolationError("nonlinear step requires a nonzero state", 1.0)
    if abs(norm - 1.0) > 10 * ctx.tols.norm_tol:
        raise NormViolationError("nonlinear step requires a unit state", abs(norm - 1.0))
    dwv = _check_dw(ctx, dw)
    nl_drift = np.zeros_like(v)
    diffusion = np.zeros_like(v)
    for l, l_op in enumerate(ctx.model.lindblads):
        lv = l_op @ v
        m = float(np.real(np.vdot(v, lv)))
        nl_drift += m * lv - 0.5 * m * m * v
        diffusion += (lv - m * v) * dwv[l]
    if ctx.scheme == "exponential_em":
        new = ctx.propagator @ (v + nl_drift * ctx.dt + diffusion)
    else:
        new = v + (ctx.model.drift_generator @ v + nl_drift) * ctx.dt + diffusion
    if ctx.renormalize:
        new = new / np.linalg.norm(new)
    return new


def step_siwf(ctx: StepContext, ensemble: WaveEnsemble, dw) -> WaveEnsemble:
    """Advance a wave-function ensemble by one step."""
    if ensemble.n_components == 0:
        raise DimensionMismatchError("ensemble is empty")
    if ensemble.dim != ctx.model.dim:
        raise DimensionMismatchError(
            f"ensemble dimension {ensemble.dim} does not match model dim "
            f"{ctx.model.dim}"
        )
    drift = abs(ensemble.total_norm_sq() - 1.0)
    if drift > 10 * ctx.tols.norm_tol:
        raise NormViolationError(
            "ensemble weight drifted too far from 1 to step safely", drift
        )
    dwv = _check_dw(ctx, dw)
    new, _, _ = siwf_step_batch(ctx, ensemble.components[None], dwv[None, :])
    return WaveEnsemble(components=frozen(new[0]))


def step_belavkin(ctx: StepContext, rho, dw) -> np.ndarray:
    """Advance a conditioned density matrix by one step."""
    r = np.asarray(rho, dtype=np.complex128)
    if r.shape != (ctx.model.dim, ctx.model.dim):
        raise DimensionMismatchError(
            f"density shape {r.shape} does not match model dim {ctx.model.dim}"
        )
    drift = abs(float(np.trace(r).real) - 1.0)
    if not ctx.renormalize and drift > 10 * ctx.tols.trace_tol:
        raise DensityMatrixError(
            "trace drifted too far from 1 with renormalization disabled", drift
        )
    dwv = _check_dw(ctx, dw)
    new, _ = belavkin_step_batch(ctx, r[None], dwv[None, :])
    return new[0]


def step_gksl(ctx: StepContext, rho) -> np.ndarray:
    """Classical 4th-order Runge-Kutta step of the mean master equation."""
    r = np.asarray(rho, dtype=np.complex128)
    if r.shape != (ctx.model.dim, ctx.model.dim):
        raise DimensionMismatchError(
            f"density shape {r.shape} does not match model dim {ctx.model.dim}"
        )
    dt = ctx.dt
    k1 = gksl_rhs(ctx.model, r)
    k2 = gksl_rhs(ctx.model, r + 0.5 * dt * k1)
    k3 = gksl_rhs(ctx.model, r + 0.5 * dt * k2)
    k4 = gksl_rhs(ctx.model, r + dt * k3)
    new = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return hermitize(new)
