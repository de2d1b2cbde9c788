"""Dense complex operator utilities on finite tensor-product spaces.

Conventions used throughout the package:

* operators are plain complex numpy arrays of shape (dim, dim); an explicit
  ``dims`` tuple (one entry per tensor factor) accompanies them wherever the
  factor structure matters,
* tensor products put the LEFT factor on the slow (most significant) index,
  so ``tensor_product(A, B) == kron(A, B)``,
* factor ordering is fixed globally: spin first (slowest), then pseudomodes;
  for two-site objects, all factors of the left site precede those of the
  right site,
* Liouvillians are kept in standard Lindblad form
  ``drho/dt = -i[H, rho] + sum_k r_k (J_k rho J_k^+ - {J_k^+ J_k, rho}/2)``.
  H may be non-Hermitian (used by the complex-coupling mode embedding), in
  which case the commutator is applied formally and Hermiticity of the state
  is no longer protected.

Everything is dense: the memory-kernel double commutators destroy any
sparsity, and the largest supported object is a two-site density matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIM_BUDGET = 4096  # largest per-side matrix dimension we agree to allocate

# Pauli matrices with eigenvalues +-1 and the qubit identity.
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


class DimensionBudgetError(ValueError):
    """Raised when a requested operator would exceed DIM_BUDGET per side."""


def destroy(d):
    """Truncated boson annihilation operator on a d-level Fock space."""
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)


def dag(A):
    return A.conj().swapaxes(-1, -2)


def tensor_product(*ops):
    """Kronecker product of one or more operators, left factor slowest."""
    out = np.asarray(ops[0], dtype=complex)
    for B in ops[1:]:
        out = np.kron(out, np.asarray(B, dtype=complex))
    if out.shape[-1] > DIM_BUDGET:
        raise DimensionBudgetError(
            f"operator dimension {out.shape[-1]} exceeds budget {DIM_BUDGET}"
        )
    return out


def lift(op, dims, which):
    """Embed a single-factor operator at position `which` of a product space."""
    mats = [np.eye(d, dtype=complex) for d in dims]
    if op.shape[0] != dims[which]:
        raise ValueError(f"operator dim {op.shape[0]} != factor dim {dims[which]}")
    mats[which] = op
    return tensor_product(*mats)


def partial_trace(X, dims, keep):
    """Trace out all factors of X except those listed in `keep`.

    Parameters
    ----------
    X : (..., D, D) array with D = prod(dims); leading axes are batch
    dims : factor dimensions, slow index first
    keep : int or ordered sequence of factor indices to retain

    Tr(result) equals Tr(X); kept factors preserve their relative order.
    """
    if np.isscalar(keep):
        keep = (int(keep),)
    keep = tuple(keep)
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    if not keep or any(k < 0 or k >= n for k in keep):
        raise ValueError(f"keep={keep} is not a valid subset of {n} factors")
    X = np.asarray(X)
    batch = X.shape[:-2]
    X = X.reshape(batch + dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = letters[:n]
    bra = "".join(letters[n + k] if k in keep else ket[k] for k in range(n))
    out = "".join(ket[k] for k in keep) + "".join(letters[n + k] for k in keep)
    X = np.einsum(f"...{ket}{bra}->...{out}", X)
    d_keep = int(np.prod([dims[k] for k in keep]))
    return X.reshape(batch + (d_keep, d_keep))


@dataclass
class LiouvillianSpec:
    """Standard-form Lindblad generator: Hamiltonian + rated jump operators."""

    H: np.ndarray
    jumps: list = field(default_factory=list)  # [(rate, op), ...]

    @property
    def dim(self):
        return self.H.shape[0]


def apply_liouvillian(L, rho):
    """Action of the generator on rho (or on a stacked ...xDxD batch).

    Returns -i[H, rho] + sum_k r_k (J rho J^+ - {J^+J, rho}/2).  Traceless and
    Hermiticity-preserving whenever H is Hermitian.
    """
    H = L.H
    out = -1j * (H @ rho - rho @ H)
    for rate, J in L.jumps:
        JdJ = dag(J) @ J
        out += rate * (J @ rho @ dag(J) - 0.5 * (JdJ @ rho + rho @ JdJ))
    return out


def apply_adjoint_liouvillian(L, A):
    """Bilinear adjoint (Heisenberg) generator: Tr[A L(rho)] = Tr[L^(A) rho].

    For the standard form this is +i[H, A] + sum_k r_k (J^+ A J - {J^+J, A}/2),
    with H inserted as given (no conjugation), so the duality identity holds
    for non-Hermitian H too.
    """
    H = L.H
    out = 1j * (H @ A - A @ H)
    for rate, J in L.jumps:
        JdJ = dag(J) @ J
        out += rate * (dag(J) @ A @ J - 0.5 * (JdJ @ A + A @ JdJ))
    return out


def superop_matrix(L):
    """Dense matrix of the generator acting on row-major vec(rho).

    vec(A rho B) = (A kron B^T) vec(rho).
    """
    D = L.dim
    I = np.eye(D, dtype=complex)
    H = L.H
    M = -1j * (np.kron(H, I) - np.kron(I, H.T))
    for rate, J in L.jumps:
        JdJ = dag(J) @ J
        M += rate * (
            np.kron(J, J.conj())
            - 0.5 * np.kron(JdJ, I)
            - 0.5 * np.kron(I, JdJ.T)
        )
    return M


def adjoint_superop_matrix(L):
    """Dense matrix of the bilinear adjoint generator on vec(A)."""
    D = L.dim
    I = np.eye(D, dtype=complex)
    H = L.H
    M = 1j * (np.kron(H, I) - np.kron(I, H.T))
    for rate, J in L.jumps:
        JdJ = dag(J) @ J
        M += rate * (
            np.kron(dag(J), J.T)
            - 0.5 * np.kron(JdJ, I)
            - 0.5 * np.kron(I, JdJ.T)
        )
    return M


def herm_defect(rho):
    """Largest entrywise deviation of rho from its Hermitian part."""
    return float(np.max(np.abs(rho - dag(rho))))


def min_eigval(rho):
    """Smallest eigenvalue of the Hermitian part of rho."""
    w = np.linalg.eigvalsh(0.5 * (rho + dag(rho)))
    return float(w[0])


def check_density_matrix(rho, eps_herm=1e-10, eps_pos=1e-6, eps_tr=1e-8):
    """Validate Hermiticity/trace/positivity of a state.

    Hermiticity and unit trace beyond tolerance raise; negativity below
    -eps_pos is reported in the returned dict but is not fatal (truncated
    embeddings can dip slightly negative).
    """
    defect = herm_defect(rho)
    tr = complex(np.trace(rho))
    if defect > eps_herm:
        raise ValueError(f"density matrix Hermiticity defect {defect:.3e}")
    if abs(tr - 1.0) > eps_tr:
        raise ValueError(f"density matrix trace {tr}")
    lam_min = min_eigval(rho)
    return {"herm_defect": defect, "trace": tr, "min_eig": lam_min,
            "positive": lam_min >= -eps_pos}
