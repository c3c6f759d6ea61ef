"""Relaxed two-field minimum-compliance topology optimization.

Every element carries a topological variable gamma and a microstructural
relative density kappa; the physical relative density is rho = gamma*kappa.
The element tensor is gamma^p * C*(a(kappa), E, nu) with C* from the
material net, so gamma acts as a SIMP-style penalized indicator while
kappa grades the lattice.  Compliance sensitivities for both fields come
from the adjoint method, are filtered with a density-weighted cone filter
and averaged with the previous iteration, and both fields are updated by
an optimality-criteria rule with a single shared Lagrange multiplier
resolved by bisection on the volume constraint.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import fe_core, pann
from .isotropy import isotropic_stiffness, plane_strain_reduce

__all__ = [
    "DesignField",
    "OptConfig",
    "SensitivityField",
    "OptRun",
    "penalized_tensor",
    "element_tensors",
    "sensitivities",
    "build_filter",
    "filter_sensitivities",
    "history_average",
    "oc_update",
    "check_convergence",
    "run",
]

RHO_VOID = 1e-15

ROLE_EXCLUDED = 0
ROLE_DESIGN = 1
ROLE_FROZEN = 2

_PLANE_IDX = np.array([0, 1, 5])


@dataclass
class DesignField:
    """Per-element design state (gamma, kappa, role)."""

    gamma: np.ndarray
    kappa: np.ndarray
    roles: np.ndarray
    rho_min: float
    rho_max: float
    rho_void: float = RHO_VOID

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, float)
        self.kappa = np.asarray(self.kappa, float)
        self.roles = np.asarray(self.roles, int)
        if not (0.0 < self.rho_min <= self.rho_max <= 1.0):
            raise ValueError("require 0 < rho_min <= rho_max <= 1")
        if np.any((self.gamma < self.rho_void) | (self.gamma > 1.0)):
            raise ValueError("gamma outside [rho_void, 1]")
        if np.any((self.kappa < self.rho_min) | (self.kappa > self.rho_max)):
            raise ValueError("kappa outside [rho_min, rho_max]")

    @property
    def rho(self):
        return self.gamma * self.kappa

    @property
    def n_elements(self):
        return len(self.gamma)

    @classmethod
    def uniform(cls, n, gamma, kappa, rho_min, rho_max, roles=None):
        if roles is None:
            roles = np.full(n, ROLE_DESIGN)
        return cls(
            gamma=np.full(n, float(gamma)),
            kappa=np.full(n, float(kappa)),
            roles=roles,
            rho_min=rho_min,
            rho_max=rho_max,
        )


@dataclass
class OptConfig:
    """Optimizer parameters."""

    V_frac: float
    r_min: float
    p: float = 3.0
    move: float = 0.05
    eta: float = 0.5
    eps: float = 1e-4
    N: int = 5
    max_iter: int = 100
    bisect_tol: float = 1e-6
    frozen_in_volume: bool = False
    solver: str = "direct"

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError("penalty p must exceed 1")
        if not 0.0 < self.move < 1.0:
            raise ValueError("move limit must lie in (0, 1)")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("damping eta must lie in (0, 1]")
        if not 0.0 < self.V_frac <= 1.0:
            raise ValueError("volume fraction must lie in (0, 1]")
        if self.N < 1:
            raise ValueError("convergence window N must be >= 1")


@dataclass
class SensitivityField:
    """Raw and filtered/averaged compliance sensitivities."""

    alpha_gamma: np.ndarray
    alpha_kappa: np.ndarray
    hat_gamma: np.ndarray = None
    hat_kappa: np.ndarray = None


@dataclass
class OptRun:
    """Optimization trace: histories, final field, convergence flag."""

    field: DesignField
    compliance: list
    volume: list
    lam: list
    snapshots: list
    converged: bool
    iterations: int


def _solid_tensor(E, nu, dim):
    if dim == 2:
        return plane_strain_reduce(E, nu)
    return isotropic_stiffness(E, nu)


def element_tensors(kappa, net, E, nu, dim, fit=None):
    """Unpenalized micro stiffness C*(a(kappa)) and its kappa-derivative.

    Returns (n, k, k) arrays with k = 3 (plane strain) or 6.
    """
    C6, dC6 = pann.dstiffness_dkappa(net, kappa, E, nu, fit)
    if dim == 2:
        ix = np.ix_(_PLANE_IDX, _PLANE_IDX)
        return C6[(slice(None),) + ix], dC6[(slice(None),) + ix]
    return C6, dC6


def penalized_tensor(gamma, kappa, net, E, nu, p=3.0, dim=3, fit=None):
    """gamma^p-penalized effective tensor(s) for design elements."""
    gamma = np.atleast_1d(np.asarray(gamma, float))
    Cstar, _ = element_tensors(np.atleast_1d(kappa), net, E, nu, dim, fit)
    out = gamma[:, None, None] ** p * Cstar
    return out if out.shape[0] > 1 else out[0]


def sensitivities(grid, u, fld, Cstar, dCdk, p):
    """Adjoint compliance sensitivities for both design fields.

    alpha_gamma = u_e^T (p gamma^{p-1} k0_e) u_e with k0_e built from the
    unpenalized micro tensor; alpha_kappa = u_e^T (gamma^p kd_e) u_e with
    kd_e built from dC*/dkappa.  Both are nonnegative for a compliance
    objective; negatives (possible only through model error) are flagged.
    """
    dofs = grid.element_dofs()
    ue = u[dofs]
    k0 = fe_core.element_stiffness_batch(grid, Cstar)
    kd = fe_core.element_stiffness_batch(grid, dCdk)
    quad0 = np.einsum("ei,eij,ej->e", ue, k0, ue, optimize=True)
    quadd = np.einsum("ei,eij,ej->e", ue, kd, ue, optimize=True)
    ag = p * fld.gamma ** (p - 1.0) * quad0
    ak = fld.gamma**p * quadd
    design = fld.roles == ROLE_DESIGN
    ag[~design] = 0.0
    ak[~design] = 0.0
    if np.any(ag < -1e-12 * max(ag.max(), 1.0)) or np.any(
        ak < -1e-12 * max(ak.max(), 1.0)
    ):
        warnings.warn("negative compliance sensitivities encountered", RuntimeWarning)
    return SensitivityField(alpha_gamma=ag, alpha_kappa=ak)


def build_filter(grid, r_min):
    """Sparse cone-weight matrix H with entries r_min - dist within r_min."""
    centers = grid.element_centers()
    if r_min <= 0.0:
        return sp.identity(grid.n_elements, format="csr")
    tree = cKDTree(centers)
    pairs = tree.query_pairs(r_min, output_type="ndarray")
    dist = np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]], axis=1)
    w = r_min - dist
    n = grid.n_elements
    rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
    vals = np.concatenate([w, w, np.full(n, r_min)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def filter_sensitivities(sens, fld, H):
    """Density-weighted cone filtering of raw sensitivities.

    hat_e = sum_e' rho_e' H_ee' alpha_e' / (rho_e sum_e' H_ee'), with rho
    taken at the current iteration.
    """
    rho = fld.rho
    denom = rho * np.asarray(H.sum(axis=1)).ravel()
    hg = (H @ (rho * sens.alpha_gamma)) / denom
    hk = (H @ (rho * sens.alpha_kappa)) / denom
    return SensitivityField(
        alpha_gamma=sens.alpha_gamma,
        alpha_kappa=sens.alpha_kappa,
        hat_gamma=hg,
        hat_kappa=hk,
    )


def history_average(current, previous):
    """Mean of the current and previous filtered sensitivities."""
    if previous is None:
        return current
    return SensitivityField(
        alpha_gamma=current.alpha_gamma,
        alpha_kappa=current.alpha_kappa,
        hat_gamma=0.5 * (current.hat_gamma + previous.hat_gamma),
        hat_kappa=0.5 * (current.hat_kappa + previous.hat_kappa),
    )


def _domain_volume(fld, config, vol_e):
    mask = fld.roles == ROLE_DESIGN
    if config.frozen_in_volume:
        mask = mask | (fld.roles == ROLE_FROZEN)
    return float(mask.sum()) * vol_e, mask


def _material_volume(gamma, kappa, fld, config, vol_e):
    design = fld.roles == ROLE_DESIGN
    v = float(np.sum(gamma[design] * kappa[design])) * vol_e
    if config.frozen_in_volume:
        v += float(np.count_nonzero(fld.roles == ROLE_FROZEN)) * vol_e
    return v


def oc_update(fld, sens, config, vol_e):
    """Optimality-criteria update of gamma and kappa under one multiplier.

    For a trial multiplier lam, each design element moves by the damped
    factors B_gamma^eta and B_kappa^eta, with B_gamma =
    hat_gamma/(lam kappa vol) and B_kappa = hat_kappa/(lam gamma vol),
    clipped to the move window [(1-move) x, (1+move) x] and the bounds.
    lam is bisected so the post-update volume meets V_frac; an inactive
    constraint (target unreachable even at vanishing lam) accepts the
    unconstrained step.  Returns (new_field, lam).
    """
    design = fld.roles == ROLE_DESIGN
    hg = np.clip(sens.hat_gamma, 0.0, None)
    hk = np.clip(sens.hat_kappa, 0.0, None)
    g0, k0 = fld.gamma, fld.kappa
    mv = config.move

    def trial(lam):
        with np.errstate(divide="ignore", over="ignore"):
            bg = hg / (lam * k0 * vol_e)
            bk = hk / (lam * g0 * vol_e)
            g = np.clip(g0 * bg**config.eta, (1.0 - mv) * g0, (1.0 + mv) * g0)
            k = np.clip(k0 * bk**config.eta, (1.0 - mv) * k0, (1.0 + mv) * k0)
        g = np.clip(g, fld.rho_void, 1.0)
        k = np.clip(k, fld.rho_min, fld.rho_max)
        g = np.where(design, g, g0)
        k = np.where(design, k, k0)
        return g, k

    domain, _ = _domain_volume(fld, config, vol_e)
    target = config.V_frac * domain

    lo = 1e-9
    g, k = trial(lo)
    if _material_volume(g, k, fld, config, vol_e) <= target + config.bisect_tol * domain:
        # constraint inactive: even the maximal step stays under budget
        return _new_field(fld, g, k), lo

    # infeasible start: when even the maximal shrink cannot reach the
    # target this iteration, take it and let feasibility arrive later
    g, k = trial(1e30)
    if _material_volume(g, k, fld, config, vol_e) > target:
        return _new_field(fld, g, k), 1e30

    hi = lo
    for _ in range(64):
        hi *= 2.0
        g, k = trial(hi)
        if _material_volume(g, k, fld, config, vol_e) <= target:
            break
    else:
        raise RuntimeError("volume bisection failed to bracket the multiplier")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g, k = trial(mid)
        v = _material_volume(g, k, fld, config, vol_e)
        if abs(v - target) <= config.bisect_tol * domain:
            return _new_field(fld, g, k), mid
        if v > target:
            lo = mid
        else:
            hi = mid
    return _new_field(fld, g, k), mid


def _new_field(fld, gamma, kappa):
    return replace(fld, gamma=gamma, kappa=kappa)


def check_convergence(history, eps, N=5):
    """Windowed relative compliance stability test.

    sum_i |c[k-i+1] - c[k-N-i+1]| / sum_i c[k-i+1] <= eps over the last N
    iterations against the N before them; needs at least 2N entries.
    """
    if len(history) < 2 * N:
        return False
    c = np.asarray(history, float)
    num = np.sum(np.abs(c[-N:] - c[-2 * N : -N]))
    den = np.sum(c[-N:])
    if den == 0.0:
        return True
    return num / den <= eps


def run(grid, fld, net, config, E, nu, fit=None, record_snapshots=True):
    """Full optimization loop; returns an OptRun trace.

    Each iteration: evaluate element tensors, solve, measure compliance,
    form adjoint sensitivities, filter, history-average, OC-update, then
    test windowed convergence together with constraint satisfaction.
    """
    vol_e = grid.element_volume
    H = build_filter(grid, config.r_min)
    solid = _solid_tensor(E, nu, grid.dimension)
    frozen = fld.roles == ROLE_FROZEN
    comp_hist, vol_hist, lam_hist, snaps = [], [], [], []
    prev_sens = None
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        Cstar, dCdk = element_tensors(fld.kappa, net, E, nu, grid.dimension, fit)
        Cpen = fld.gamma[:, None, None] ** config.p * Cstar
        if np.any(frozen):
            Cpen[frozen] = solid
            dCdk[frozen] = 0.0
        sys = fe_core.assemble_and_solve(grid, Cpen, method=config.solver)
        c = fe_core.compliance(sys)
        domain, _ = _domain_volume(fld, config, vol_e)
        vfrac = _material_volume(fld.gamma, fld.kappa, fld, config, vol_e) / domain
        comp_hist.append(c)
        vol_hist.append(vfrac)
        if record_snapshots:
            snaps.append((fld.gamma.copy(), fld.kappa.copy()))
        raw = sensitivities(grid, sys.u, fld, Cstar, dCdk, config.p)
        if c == 0.0 or (raw.alpha_gamma.max() == 0.0 and raw.alpha_kappa.max() == 0.0):
            # unloaded problem: nothing to optimize
            lam_hist.append(0.0)
            converged = True
            break
        filt = filter_sensitivities(raw, fld, H)
        avg = history_average(filt, prev_sens)
        prev_sens = avg
        fld, lam = oc_update(fld, avg, config, vol_e)
        lam_hist.append(lam)
        feasible = vfrac <= config.V_frac + 1e-4
        if feasible and check_convergence(comp_hist, config.eps, config.N):
            converged = True
            break
    return OptRun(
        field=fld,
        compliance=comp_hist,
        volume=vol_hist,
        lam=lam_hist,
        snapshots=snaps,
        converged=converged,
        iterations=it,
    )
