"""Physics-augmented network for the lattice constitutive map.

A small feed-forward network maps p = (a, E, nu) to the two independent
Cholesky components (G11, G44) of the isotropic effective stiffness.  The
output head G44 = s(v2), G11 = s(v1) + (2/sqrt(3)) s(v2) with softplus s
makes G11 > (2/sqrt(3)) G44 hold for any weights, which in turn keeps the
reconstructed stiffness GG^T symmetric positive definite with the exact
isotropic sparsity pattern.  Training data comes from beam-lattice
homogenization followed by isotropic projection; training is full-batch
AMSGrad on a manually backpropagated MSE.

The closed-form dependent Cholesky entries, with r = G44/G11:
    G22 = 2 G44 sqrt(1 - r^2)
    G33 = G44 sqrt((3 - 4 r^2) / (1 - r^2))
    G21 = G31 = G11 (1 - 2 r^2)
    G32 = G44 (1 - 2 r^2) / sqrt(1 - r^2)
    G55 = G66 = G44
They follow from requiring GG^T to carry the isotropic pattern with
C11 = C12 + 2 C44.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dual
from .beam_rve import BeamMaterial, homogenize
from .densmap import SigmoidFit, aspect_from_density
from .isotropy import project_isotropic

__all__ = [
    "MaterialNet",
    "CholeskyPair",
    "TrainingSet",
    "forward",
    "cholesky_matrix",
    "stiffness_from_params",
    "generate_dataset",
    "train",
    "dstiffness_dkappa",
]

NET_FORMAT_VERSION = 1

_HIDDEN = 64
_C = 2.0 / np.sqrt(3.0)  # constraint slope of Eq.-(39)-style head

# default training grid: aspect ratios, base moduli, Poisson ratios
DEFAULT_A_GRID = np.linspace(0.02, 0.30, 12)
DEFAULT_E_GRID = np.linspace(50.0, 400.0, 6)
DEFAULT_NU_GRID = np.linspace(0.20, 0.45, 4)


class ConstraintError(ValueError):
    """Cholesky pair outside the admissible region G11 > (2/sqrt 3) G44."""


@dataclass
class CholeskyPair:
    """The two independent Cholesky components of an isotropic stiffness."""

    G11: float
    G44: float

    def __post_init__(self):
        if not (self.G44 > 0.0 and self.G11 > _C * self.G44):
            raise ConstraintError(
                f"require G11 > (2/sqrt3) G44 > 0, got G11={self.G11}, G44={self.G44}"
            )


@dataclass
class TrainingSet:
    """Dataset of (a, E, nu) -> (G11, G44) targets with provenance."""

    p: np.ndarray  # (n, 3)
    targets: np.ndarray  # (n, 2) columns G11, G44
    rve_seed: int
    train_idx: np.ndarray
    val_idx: np.ndarray

    def to_csv(self):
        lines = ["a,E,nu,G11,G44,rve_seed"]
        for row, tgt in zip(self.p, self.targets):
            vals = [float(row[0]), float(row[1]), float(row[2]), float(tgt[0]), float(tgt[1])]
            lines.append(",".join(repr(v) for v in vals) + f",{self.rve_seed}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text, split_seed=0):
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        arr = np.array([[float(v) for v in r[:5]] for r in rows])
        seed = int(rows[0][5]) if rows else 0
        return cls.from_records(arr[:, :3], arr[:, 3:5], seed, split_seed)

    @classmethod
    def from_records(cls, p, targets, rve_seed, split_seed=0):
        n = len(p)
        order = np.random.default_rng(split_seed).permutation(n)
        n_val = max(n // 10, 1) if n > 1 else 0
        return cls(
            p=np.asarray(p, float),
            targets=np.asarray(targets, float),
            rve_seed=int(rve_seed),
            train_idx=np.sort(order[n_val:]),
            val_idx=np.sort(order[:n_val]),
        )


@dataclass
class MaterialNet:
    """Feed-forward net with softplus hidden layers and constrained head.

    Weights follow the column convention h = s(W x + b); inputs are
    standardized with the stored per-component mean and scale.
    """

    weights: list  # [W1, b1, W2, b2, W3, b3, W4, b4]
    mu: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma: np.ndarray = field(default_factory=lambda: np.ones(3))
    fit: SigmoidFit | None = None
    version: int = NET_FORMAT_VERSION

    def __post_init__(self):
        shapes = [w.shape for w in self.weights]
        h = shapes[0][0]
        expect = [(h, 3), (h,), (h, h), (h,), (h, h), (h,), (2, h), (2,)]
        if shapes != expect:
            raise ValueError(f"bad weight shapes {shapes}")
        if np.any(self.sigma <= 0.0):
            raise ValueError("normalization scales must be positive")

    def to_json(self):
        doc = {
            "format": "latticeopt-materialnet",
            "version": self.version,
            "shapes": [list(w.shape) for w in self.weights],
            "weights": [w.ravel().tolist() for w in self.weights],
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "sigmoid_fit": self.fit.to_dict() if self.fit is not None else None,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != NET_FORMAT_VERSION:
            raise ValueError(f"unsupported net format version {doc.get('version')}")
        weights = [
            np.array(w, float).reshape(sh)
            for w, sh in zip(doc["weights"], doc["shapes"])
        ]
        fit = doc.get("sigmoid_fit")
        return cls(
            weights=weights,
            mu=np.array(doc["mu"], float),
            sigma=np.array(doc["sigma"], float),
            fit=SigmoidFit.from_dict(fit) if fit is not None else None,
        )


def init_net(seed=0, hidden=_HIDDEN):
    """Glorot-uniform initialized net with zero biases."""
    rng = np.random.default_rng(seed)
    dims = [3, hidden, hidden, hidden, 2]
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        weights.append(np.zeros(fan_out))
    return MaterialNet(weights=weights)


def _heads(net, p):
    """Raw (G11, G44) for standardized batched input; dual-number safe."""
    W1, b1, W2, b2, W3, b3, W4, b4 = net.weights
    x = (p - net.mu) / net.sigma
    h = dual.softplus(x @ W1.T + b1)
    h = dual.softplus(h @ W2.T + b2)
    h = dual.softplus(h @ W3.T + b3)
    v = h @ W4.T + b4
    v1 = v[..., 0]
    v2 = v[..., 1]
    g44 = dual.softplus(v2)
    g11 = dual.softplus(v1) + _C * g44
    return g11, g44


def _warn_if_extrapolating(net, p):
    x = (np.asarray(p, float) - net.mu) / net.sigma
    if np.any(np.abs(x) > 3.0):
        warnings.warn(
            "material net evaluated outside its standardization range",
            RuntimeWarning,
            stacklevel=3,
        )


def forward(net, p):
    """Constrained Cholesky components for parameter triples.

    ``p`` is a length-3 triple (a, E, nu) or an (n, 3) batch.  Returns a
    CholeskyPair for a single triple, else a pair of arrays.
    """
    p = np.asarray(p, float)
    _warn_if_extrapolating(net, p)
    g11, g44 = _heads(net, p)
    if p.ndim == 1:
        return CholeskyPair(float(g11), float(g44))
    return g11, g44


def _dependent_entries(g11, g44):
    """Closed-form dependent Cholesky entries; dual-number safe."""
    r2 = (g44 / g11) ** 2
    one = 1.0 - r2
    g22 = 2.0 * g44 * dual.sqrt(one)
    g33 = g44 * dual.sqrt((3.0 - 4.0 * r2) / one)
    g21 = g11 * (1.0 - 2.0 * r2)
    g31 = g21
    g32 = g44 * (1.0 - 2.0 * r2) / dual.sqrt(one)
    return g21, g22, g31, g32, g33


def cholesky_matrix(pair):
    """Lower-triangular 6x6 Cholesky factor from the two free components."""
    g11, g44 = pair.G11, pair.G44
    if not (g44 > 0.0 and g11 > _C * g44):
        raise ConstraintError("inadmissible Cholesky pair")
    g21, g22, g31, g32, g33 = _dependent_entries(g11, g44)
    G = np.zeros((6, 6))
    G[0, 0] = g11
    G[1, 0] = g21
    G[1, 1] = g22
    G[2, 0] = g31
    G[2, 1] = g32
    G[2, 2] = g33
    G[3, 3] = g44
    G[4, 4] = g44
    G[5, 5] = g44
    return G


def _iso_entries(g11, g44):
    """(C11, C12, C44) of GG^T via explicit row products; dual safe."""
    g21, g22, g31, g32, g33 = _dependent_entries(g11, g44)
    c11 = g11 * g11
    c12 = g21 * g11  # row2 . row1
    c44 = g44 * g44
    # remaining products are equal by construction; used for verification
    return c11, c12, c44


def _assemble_iso(c11, c12, c44):
    """6x6 isotropic Voigt matrix from its three entries (arrays ok)."""
    c11 = np.asarray(c11, float)
    out = np.zeros(c11.shape + (6, 6))
    for i in range(3):
        for j in range(3):
            out[..., i, j] = c11 if i == j else c12
    for k in range(3, 6):
        out[..., k, k] = c44
    return out


def stiffness_from_params(net, p):
    """Effective isotropic stiffness GG^T at parameter triple(s) ``p``."""
    p = np.asarray(p, float)
    _warn_if_extrapolating(net, p)
    g11, g44 = _heads(net, p)
    c11, c12, c44 = _iso_entries(g11, g44)
    return _assemble_iso(c11, c12, c44)


def generate_dataset(
    rve,
    a_values=DEFAULT_A_GRID,
    E_values=DEFAULT_E_GRID,
    nu_values=DEFAULT_NU_GRID,
    split_seed=0,
):
    """Homogenize over the (a, E, nu) grid and extract Cholesky targets.

    The effective stiffness is linear in E at fixed nu, so each (a, nu)
    pair is homogenized once at E = 1 and targets scale with sqrt(E).
    Non-positive-definite projected tensors are excluded with a warning.
    """
    records_p = []
    records_t = []
    for a in np.asarray(a_values, float):
        for nu in np.asarray(nu_values, float):
            mat = BeamMaterial(E=1.0, nu=float(nu), d=float(a) * rve.strut_length)
            C1 = project_isotropic(homogenize(rve, mat))
            if np.linalg.eigvalsh(C1).min() <= 0.0 or C1[0, 0] <= 4.0 / 3.0 * C1[3, 3]:
                warnings.warn(
                    f"excluding non-PD projected tensor at a={a}, nu={nu}",
                    RuntimeWarning,
                )
                continue
            for E in np.asarray(E_values, float):
                records_p.append([a, E, nu])
                records_t.append(
                    [np.sqrt(E * C1[0, 0]), np.sqrt(E * C1[3, 3])]
                )
    return TrainingSet.from_records(
        np.array(records_p), np.array(records_t), rve.seed, split_seed
    )


def _forward_cached(net, x):
    """Forward pass on pre-standardized inputs, returning activations."""
    W1, b1, W2, b2, W3, b3, W4, b4 = net.weights
    z1 = x @ W1.T + b1
    h1 = np.logaddexp(0.0, z1)
    z2 = h1 @ W2.T + b2
    h2 = np.logaddexp(0.0, z2)
    z3 = h2 @ W3.T + b3
    h3 = np.logaddexp(0.0, z3)
    v = h3 @ W4.T + b4
    g44 = np.logaddexp(0.0, v[:, 1])
    g11 = np.logaddexp(0.0, v[:, 0]) + _C * g44
    return (z1, h1, z2, h2, z3, h3, v), np.column_stack([g11, g44])


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_and_gradients(net, x, targets):
    """MSE loss (1/2n sum of squared component errors) and weight grads."""
    cache, g = _forward_cached(net, x)
    z1, h1, z2, h2, z3, h3, v = cache
    n = len(x)
    err = g - targets
    loss = 0.5 * np.sum(err**2) / n
    # head: g44 = s(v2), g11 = s(v1) + c*s(v2)
    dv = np.empty_like(v)
    dv[:, 0] = err[:, 0] * _sigmoid(v[:, 0])
    dv[:, 1] = (err[:, 0] * _C + err[:, 1]) * _sigmoid(v[:, 1])
    dv /= n
    W1, b1, W2, b2, W3, b3, W4, b4 = net.weights
    gW4 = dv.T @ h3
    gb4 = dv.sum(axis=0)
    d3 = (dv @ W4) * _sigmoid(z3)
    gW3 = d3.T @ h2
    gb3 = d3.sum(axis=0)
    d2 = (d3 @ W3) * _sigmoid(z2)
    gW2 = d2.T @ h1
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ W2) * _sigmoid(z1)
    gW1 = d1.T @ x
    gb1 = d1.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2, gW3, gb3, gW4, gb4]


def train(
    net,
    ts,
    epochs=250_000,
    lr=1e-3,
    beta1=0.9,
    beta2=0.9,
    lr_decay_every=50_000,
    patience=20_000,
    eps=1e-8,
    log_every=1_000,
):
    """Full-batch AMSGrad training of the material net.

    Standardization constants are (re)computed from the training split and
    stored on the returned net.  Targets stay in raw units.  Returns the
    trained net and a history dict with per-log-point train/validation MSE.
    Training stops early once validation loss has not improved for
    ``patience`` epochs.
    """
    if len(ts.p) == 0:
        raise ValueError("empty training set")
    p_tr = ts.p[ts.train_idx]
    t_tr = ts.targets[ts.train_idx]
    p_va = ts.p[ts.val_idx]
    t_va = ts.targets[ts.val_idx]
    mu = p_tr.mean(axis=0)
    sigma = p_tr.std(axis=0)
    sigma[sigma == 0.0] = 1.0
    net = MaterialNet(
        weights=[w.copy() for w in net.weights], mu=mu, sigma=sigma, fit=net.fit
    )
    x_tr = (p_tr - mu) / sigma
    x_va = (p_va - mu) / sigma if len(p_va) else None

    m = [np.zeros_like(w) for w in net.weights]
    v = [np.zeros_like(w) for w in net.weights]
    vhat = [np.zeros_like(w) for w in net.weights]
    history = {"epoch": [], "train": [], "val": []}
    best_val = np.inf
    best_weights = None
    stall = 0
    rate = lr
    for epoch in range(epochs):
        loss, grads = loss_and_gradients(net, x_tr, t_tr)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}: {loss}")
        if epoch and epoch % lr_decay_every == 0:
            rate *= 0.5
        for k, g in enumerate(grads):
            m[k] = beta1 * m[k] + (1.0 - beta1) * g
            v[k] = beta2 * v[k] + (1.0 - beta2) * g * g
            vhat[k] = np.maximum(vhat[k], v[k])
            net.weights[k] -= rate * m[k] / (np.sqrt(vhat[k]) + eps)
        if epoch % log_every == 0 or epoch == epochs - 1:
            if x_va is not None:
                _, gv = _forward_cached(net, x_va)
                val = 0.5 * np.sum((gv - t_va) ** 2) / len(x_va)
            else:
                val = loss
            history["epoch"].append(epoch)
            history["train"].append(float(loss))
            history["val"].append(float(val))
            if val < best_val * (1.0 - 1e-6):
                best_val = val
                best_weights = [w.copy() for w in net.weights]
                stall = 0
            else:
                stall += log_every
                if stall >= patience:
                    break
    if best_weights is not None:
        net.weights = best_weights
    return net, history


def dstiffness_dkappa(net, kappa, E, nu, fit=None):
    """d(effective stiffness)/d(kappa) by forward-mode differentiation.

    Propagates a dual number through the density map a(kappa), the
    network, the constrained head, the dependent Cholesky entries, and the
    GG^T products.  ``kappa`` may be a scalar (returns 6x6) or an array
    (returns (n, 6, 6)).  Also returns the stiffness itself, since it
    comes for free: (C, dC_dkappa).
    """
    if fit is None:
        fit = net.fit
    if fit is None:
        raise ValueError("no sigmoid fit attached or supplied")
    kappa = np.asarray(kappa, float)
    scalar = kappa.ndim == 0
    k = np.atleast_1d(kappa)
    a, dadk = aspect_from_density(fit, k)
    n = len(k)
    p_val = np.column_stack([a, np.broadcast_to(E, n), np.broadcast_to(nu, n)])
    _warn_if_extrapolating(net, p_val)
    p_dot = np.zeros_like(p_val)
    p_dot[:, 0] = dadk
    p = dual.Dual(p_val, p_dot)
    g11, g44 = _heads(net, p)
    c11, c12, c44 = _iso_entries(g11, g44)
    C = _assemble_iso(c11.val, c12.val, c44.val)
    dC = _assemble_iso(c11.dot, c12.dot, c44.dot)
    if scalar:
        return C[0], dC[0]
    return C, dC
