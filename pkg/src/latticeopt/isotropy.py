"""Isotropic projection of 6x6 stiffness matrices and effective moduli.

Voigt convention throughout: (11, 22, 33, 23, 13, 12) with engineering
shear strains, i.e. the stiffness maps [e11, e22, e33, 2*e23, 2*e13, 2*e12]
to [s11, s22, s33, s23, s13, s12].
"""

import numpy as np

__all__ = [
    "Q",
    "A1",
    "A2",
    "project_isotropic",
    "relative_anisotropy",
    "effective_moduli",
    "isotropic_stiffness",
    "plane_strain_reduce",
]

# Metric compensating the engineering-shear doubling so that the matrix
# inner product tr(Q X Q Y) equals the full fourth-order tensor contraction.
Q = np.diag([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

# Orthonormal isotropic basis under <X, Y> = tr(Q X Q Y): hydrostatic and
# deviatoric projectors.
A1 = np.zeros((6, 6))
A1[:3, :3] = 1.0 / 3.0

A2 = np.zeros((6, 6))
A2[:3, :3] = -2.0
A2[np.diag_indices(3)] = 4.0
A2[3, 3] = A2[4, 4] = A2[5, 5] = 3.0
A2 /= 6.0 * np.sqrt(5.0)

# Plane-strain reduction keeps the in-plane rows/columns (11, 22, 12).
_PLANE_STRAIN_IDX = np.array([0, 1, 5])


def project_isotropic(C):
    """Return the isotropic tensor closest to ``C`` in the tensor metric.

    ``C`` must be a symmetric 6x6 Voigt stiffness matrix. The result is
    tr(Q C Q A1) A1 + tr(Q C Q A2) A2 and always carries the exact
    isotropic sparsity pattern with C11 = C12 + 2*C44.
    """
    C = np.asarray(C, dtype=float)
    if C.shape != (6, 6):
        raise ValueError(f"expected a 6x6 matrix, got shape {C.shape}")
    QCQ = Q @ C @ Q
    return np.trace(QCQ @ A1) * A1 + np.trace(QCQ @ A2) * A2


def relative_anisotropy(C):
    """Distance of ``C`` from its isotropic projection, relative to ||C||_F."""
    C = np.asarray(C, dtype=float)
    norm = np.linalg.norm(C)
    if norm == 0.0:
        raise ValueError("relative anisotropy undefined for a zero matrix")
    return np.linalg.norm(C - project_isotropic(C)) / norm


def effective_moduli(C_iso):
    """Extract (E, nu) from an isotropic 6x6 stiffness matrix.

    Uses C66 = mu and C12 = lambda:
    E = C66 (3 C12 + 2 C66) / (C12 + C66),  nu = C12 / (2 (C12 + C66)).
    """
    C_iso = np.asarray(C_iso, dtype=float)
    c12 = C_iso[0, 1]
    c66 = C_iso[5, 5]
    denom = c12 + c66
    if denom == 0.0:
        raise ValueError("degenerate isotropic stiffness: C12 + C66 = 0")
    E = c66 * (3.0 * c12 + 2.0 * c66) / denom
    nu = c12 / (2.0 * denom)
    return E, nu


def isotropic_stiffness(E, nu):
    """Build the 6x6 isotropic stiffness matrix from (E, nu)."""
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.diag_indices(3)] = lam + 2.0 * mu
    C[3, 3] = C[4, 4] = C[5, 5] = mu
    return C


def plane_strain_reduce(E, nu):
    """Plane-strain 3x3 stiffness for an isotropic material.

    Equals the (11, 22, 12) submatrix of the 6x6 isotropic tensor, since
    plane strain constrains e33 = e23 = e13 = 0.
    """
    if nu >= 0.5:
        raise ValueError(f"plane strain requires nu < 0.5, got {nu}")
    C6 = isotropic_stiffness(E, nu)
    return C6[np.ix_(_PLANE_STRAIN_IDX, _PLANE_STRAIN_IDX)].copy()


def plane_strain_submatrix(C):
    """(11, 22, 12) submatrix of a 6x6 Voigt matrix (plane-strain contraction)."""
    C = np.asarray(C, dtype=float)
    return C[np.ix_(_PLANE_STRAIN_IDX, _PLANE_STRAIN_IDX)].copy()
