"""Relative density of a lattice versus strut aspect ratio.

Monte Carlo estimation of the volume fraction occupied by struts of a given
aspect ratio, plus the fitted inverse-sigmoid map a(kappa) and its
derivative used by the optimizer.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "DensitySample",
    "SigmoidFit",
    "estimate_density",
    "naive_density",
    "fit_sigmoid",
    "aspect_from_density",
]


@dataclass(frozen=True)
class DensitySample:
    """One Monte Carlo estimate of kappa at aspect ratio ``a``."""

    a: float
    kappa: float
    points: int
    seed: int


@dataclass(frozen=True)
class SigmoidFit:
    """Parameters of the inverse-sigmoid map a(kappa).

    a(kappa) = c1 ln(1/(c2 c3) - 1) - c1 ln(1/(c2 (kappa + c3)) - 1),
    which satisfies a(0) = 0 by construction.
    """

    c1: float
    c2: float
    c3: float
    rms_residual: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.c2 * self.c3 < 1.0:
            raise ValueError("invalid fit: c2*c3 must lie in (0, 1)")

    @property
    def kappa_max(self):
        """Upper end of the valid kappa domain: c2 (kappa + c3) < 1."""
        return 1.0 / self.c2 - self.c3

    def to_dict(self):
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "rms_residual": self.rms_residual,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["c1"], d["c2"], d["c3"], d.get("rms_residual", 0.0))


def _strut_segments(rve, periodic_pad):
    """Strut endpoint arrays (p0, p1), including periodic images near faces.

    Struts within ``periodic_pad`` of a face are duplicated shifted by
    +-L so that points close to the cube boundary see material from the
    neighboring period.
    """
    L = rve.size
    p0 = rve.nodes[rve.struts[:, 0]]
    p1 = rve.nodes[rve.struts[:, 1]]
    segs0, segs1 = [p0], [p1]
    lo = np.minimum(p0, p1)
    hi = np.maximum(p0, p1)
    for axis in range(3):
        for sign, near in ((1.0, lo[:, axis] < periodic_pad),
                           (-1.0, hi[:, axis] > L - periodic_pad)):
            if np.any(near):
                shift = np.zeros(3)
                shift[axis] = sign * L
                segs0.append(p0[near] + shift)
                segs1.append(p1[near] + shift)
    return np.vstack(segs0), np.vstack(segs1)


class _SegmentGrid:
    """Coarse uniform grid over segments to prune point-segment tests."""

    def __init__(self, p0, p1, L, cell, pad):
        self.p0 = p0
        self.p1 = p1
        self.cell = cell
        self.n = max(int(np.ceil(L / cell)), 1)
        self.L = L
        buckets = [[] for _ in range(self.n**3)]
        lo = np.floor((np.minimum(p0, p1) - pad) / cell).astype(int)
        hi = np.floor((np.maximum(p0, p1) + pad) / cell).astype(int)
        lo = np.clip(lo, 0, self.n - 1)
        hi = np.clip(hi, 0, self.n - 1)
        for s in range(len(p0)):
            for i in range(lo[s, 0], hi[s, 0] + 1):
                for j in range(lo[s, 1], hi[s, 1] + 1):
                    for k in range(lo[s, 2], hi[s, 2] + 1):
                        buckets[(k * self.n + j) * self.n + i].append(s)
        self.buckets = [np.array(b, dtype=int) for b in buckets]

    def candidates(self, pts):
        idx = np.clip((pts / self.cell).astype(int), 0, self.n - 1)
        flat = (idx[:, 2] * self.n + idx[:, 1]) * self.n + idx[:, 0]
        return flat


def _points_in_struts(pts, p0, p1, radius, grid=None):
    """Boolean mask: point within ``radius`` of any segment."""
    if grid is None:
        d = p1 - p0  # (s, 3)
        len2 = np.einsum("ij,ij->i", d, d)
        inside = np.zeros(len(pts), dtype=bool)
        todo = np.arange(len(pts))
        for s in range(len(p0)):
            w = pts[todo] - p0[s]
            t = np.clip(w @ d[s] / len2[s], 0.0, 1.0)
            closest = p0[s] + t[:, None] * d[s]
            hit = np.einsum("ij,ij->i", pts[todo] - closest, pts[todo] - closest)
            hit = hit <= radius**2
            inside[todo[hit]] = True
            todo = todo[~hit]
            if todo.size == 0:
                break
        return inside
    flat = grid.candidates(pts)
    inside = np.zeros(len(pts), dtype=bool)
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    bounds = np.searchsorted(flat_sorted, np.arange(grid.n**3 + 1))
    r2 = radius**2
    for b in range(grid.n**3):
        sel = order[bounds[b] : bounds[b + 1]]
        if sel.size == 0:
            continue
        segs = grid.buckets[b]
        if segs.size == 0:
            continue
        P = pts[sel]
        hit = np.zeros(len(P), dtype=bool)
        for s in segs:
            d = grid.p1[s] - grid.p0[s]
            len2 = d @ d
            t = np.clip((P - grid.p0[s]) @ d / len2, 0.0, 1.0)
            closest = grid.p0[s] + t[:, None] * d
            dd = P - closest
            hit |= np.einsum("ij,ij->i", dd, dd) <= r2
        inside[sel] = hit
    return inside


def estimate_density(rve, a, batch=100_000, seed=0, max_points=50_000_000,
                     min_batches=8):
    """Monte Carlo estimate of the relative density at aspect ratio ``a``.

    Uniform points are drawn in the RVE cube in batches; a point counts as
    material if it lies within d/2 = a*l/2 of any strut (periodic images
    included).  Sampling stops once the estimate changes by less than 0.1%
    between successive batches; ``min_batches`` guards against a lucky
    early pair of near-equal estimates.
    """
    if a <= 0.0:
        raise ValueError("aspect ratio must be positive")
    if batch < 1000:
        raise ValueError("batch size must be at least 1000")
    radius = 0.5 * a * rve.strut_length
    p0, p1 = _strut_segments(rve, periodic_pad=radius)
    grid = None
    if len(rve.struts) >= 1000:
        cell = max(rve.strut_length, 4.0 * radius)
        grid = _SegmentGrid(p0, p1, rve.size, cell, pad=radius)
    rng = np.random.default_rng(seed)
    hits = 0
    total = 0
    nbatch = 0
    prev = None
    while total < max_points:
        pts = rng.random((batch, 3)) * rve.size
        hits += int(np.count_nonzero(_points_in_struts(pts, p0, p1, radius, grid)))
        total += batch
        nbatch += 1
        kappa = hits / total
        if total >= 10**6 and kappa == 0.0:
            # vanishing strut volume: a genuine d->0 limit converges to 0,
            # anything else after a million misses means a broken model
            if naive_density(rve, a) >= 1e-4:
                raise RuntimeError("density estimate still zero after 1e6 points")
            return DensitySample(a=a, kappa=0.0, points=total, seed=seed)
        converged = (
            prev is not None and prev > 0.0 and abs(kappa - prev) / prev < 1e-3
        )
        if converged and nbatch >= min_batches:
            return DensitySample(a=a, kappa=kappa, points=total, seed=seed)
        prev = kappa
    return DensitySample(a=a, kappa=hits / total, points=total, seed=seed)


def naive_density(rve, a):
    """Sum of individual strut cylinder volumes over the cube volume.

    Ignores overlap at the joints, so it overestimates the density; only
    useful for low aspect ratios.  Strut weights account for boundary
    sharing under periodic tiling.
    """
    if a <= 0.0:
        raise ValueError("aspect ratio must be positive")
    d = a * rve.strut_length
    p0 = rve.nodes[rve.struts[:, 0]]
    p1 = rve.nodes[rve.struts[:, 1]]
    lengths = np.linalg.norm(p1 - p0, axis=1)
    vol = np.pi * d**2 / 4.0 * np.sum(rve.weights * lengths)
    return float(vol / rve.size**3)


def _sigmoid_model(c, kappa):
    c1, c2, c3 = c
    return c1 * np.log(1.0 / (c2 * c3) - 1.0) - c1 * np.log(
        1.0 / (c2 * (kappa + c3)) - 1.0
    )


def fit_sigmoid(samples, init=(0.12, 0.92, 0.06)):
    """Least-squares fit of the inverse-sigmoid map to (kappa, a) samples."""
    if len(samples) < 5:
        raise ValueError("need at least 5 density samples for a stable fit")
    kappas = np.array([s.kappa for s in samples])
    targets = np.array([s.a for s in samples])

    def residual(c):
        z = c[1] * (kappas + c[2])
        if np.any(z >= 1.0) or np.any(z <= 0.0) or not 0.0 < c[1] * c[2] < 1.0:
            return np.full_like(kappas, 1e3)
        return _sigmoid_model(c, kappas) - targets

    res = least_squares(residual, x0=np.asarray(init), method="lm", xtol=1e-14,
                        ftol=1e-14, max_nfev=20000)
    if not res.success:
        raise RuntimeError(f"sigmoid fit did not converge: {res.message}")
    rms = float(np.sqrt(np.mean(res.fun**2)))
    return SigmoidFit(*[float(v) for v in res.x], rms_residual=rms)


def aspect_from_density(fit, kappa):
    """Evaluate a(kappa) and its derivative da/dkappa.

    da/dkappa = c1 c2 / (z (1 - z)) with z = c2 (kappa + c3).
    """
    kappa = np.asarray(kappa, float)
    if kappa.ndim == 0:
        kappa = float(kappa)
    if np.any(np.asarray(kappa) < 0.0):
        raise ValueError("kappa must be nonnegative")
    z = fit.c2 * (kappa + fit.c3)
    if np.any(np.asarray(z) >= 1.0):
        raise ValueError(
            f"kappa outside the valid fit domain (kappa < {fit.kappa_max:.4f})"
        )
    a = _sigmoid_model((fit.c1, fit.c2, fit.c3), kappa)
    da = fit.c1 * fit.c2 / (z * (1.0 - z))
    return a, da
