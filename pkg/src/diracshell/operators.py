"""Dense and symmetry-reduced representations of boundary operators.

An operator on ``C^{4N}`` acts on *scaled* panel values ``c_i = sqrt(w_i) phi_i``
so that the Euclidean norm of ``c`` is the discrete L2(Sigma) norm of ``phi``.
Two storage layouts are used:

``dense``
    one ``(4N, 4N)`` matrix in panel (mesh) order.
``fourier``
    for meshes that are invariant under the grid rotation about e3.  Such
    operators commute with "rotate the grid by one azimuth step and rotate
    the spinor accordingly", so in the twisted Fourier basis

        c_hat_j[a, s] = n_phi^{-1/2} sum_b exp(-i n(j,s) phi_b) c[a, b, s],
        n(j, s) = j + (1 - sigma_s) / 2,   sigma = (+1, -1, +1, -1),

    they are block diagonal with ``n_phi`` blocks of size ``4 n_theta`` (the
    half-integer angular momentum ``j + 1/2`` labels the blocks).  Sums,
    products, inverses and singular values then work block by block.
"""
from __future__ import annotations

import numpy as np

from .surface import SurfaceMesh

__all__ = ["DiscreteOperator", "spin_signs", "mode_index", "to_modes", "from_modes"]

SIGMA_S = np.array([1, -1, 1, -1])


def spin_signs():
    return SIGMA_S.copy()


def mode_index(n_phi: int) -> np.ndarray:
    """``n(j, s) mod n_phi`` as an array of shape (n_phi, 4)."""
    j = np.arange(n_phi)[:, None]
    return (j + (1 - SIGMA_S[None, :]) // 2) % n_phi


def to_modes(mesh: SurfaceMesh, c) -> np.ndarray:
    """Scaled panel vector (mesh order, length 4N) -> twisted Fourier coefficients (n_phi, 4 n_theta)."""
    nt, nph = mesh.n_theta, mesh.n_phi
    c = np.asarray(c, dtype=complex).reshape(mesh.N, 4, *np.shape(c)[1:])
    c = mesh.mesh_to_grid(c).reshape(nt, nph, 4, -1)
    F = np.fft.fft(c, axis=1) / np.sqrt(nph)
    idx = mode_index(nph)  # (nph, 4)
    # out[j, a, s, :] = F[a, idx[j, s], s, :]
    out = F[:, idx, np.arange(4)[None, :], :]  # (nt, nph, 4, k)
    return np.transpose(out, (1, 0, 2, 3)).reshape(nph, 4 * nt, -1)


def from_modes(mesh: SurfaceMesh, chat) -> np.ndarray:
    """Inverse of :func:`to_modes`; returns (4N, k) in mesh order."""
    nt, nph = mesh.n_theta, mesh.n_phi
    chat = np.asarray(chat, dtype=complex).reshape(nph, nt, 4, -1)
    idx = mode_index(nph)
    F = np.empty((nt, nph, 4, chat.shape[-1]), dtype=complex)
    F[:, idx, np.arange(4)[None, :], :] = np.transpose(chat, (1, 0, 2, 3))
    c = np.fft.ifft(F, axis=1) * np.sqrt(nph)
    c = c.reshape(nt * nph, 4, -1)
    return mesh.grid_to_mesh(c).reshape(4 * mesh.N, -1)


def rows_to_blocks(mesh: SurfaceMesh, rows) -> np.ndarray:
    """Meridian rows -> Fourier blocks.

    ``rows[a, jg, s, t]`` is the 4x4 coupling from grid panel ``jg`` to the
    panel (ring ``a``, azimuth 0), acting on scaled values.  Returns blocks of
    shape (n_phi, 4 n_theta, 4 n_theta).
    """
    nt, nph = mesh.n_theta, mesh.n_phi
    rows = np.asarray(rows).reshape(nt, nt, nph, 4, 4)
    F = np.fft.ifft(rows, axis=2) * nph  # sum_k rows[..k..] exp(+i n phi_k)
    idx = mode_index(nph)  # (nph, 4) indexed by column spinor t
    # B[j, a, s, a', t] = F[a, a', idx[j, t], s, t]
    B = np.stack([np.take(F[..., t], idx[:, t], axis=2) for t in range(4)], axis=-1)
    B = np.transpose(B, (2, 0, 3, 1, 4))  # (a, a', j, s, t) -> (j, a, s, a', t)
    return B.reshape(nph, 4 * nt, 4 * nt)


def _check_same(a: "DiscreteOperator", b: "DiscreteOperator"):
    if a.layout != b.layout or a.data.shape != b.data.shape:
        raise ValueError("operators live in different layouts or on different meshes")


class DiscreteOperator:
    """Boundary operator on a mesh plus provenance (lambda, scheme, tag)."""

    def __init__(self, data, layout: str, mesh: SurfaceMesh, *, lam=None, scheme: str = "",
                 tag: str = ""):
        if layout not in ("dense", "fourier"):
            raise ValueError(layout)
        data = np.asarray(data, dtype=complex)
        if data.ndim == 2:
            data = data[None]
        self.data = data
        self.layout = layout
        self.mesh = mesh
        self.lam = lam
        self.scheme = scheme
        self.tag = tag

    # ---- construction helpers ------------------------------------------
    @classmethod
    def identity(cls, mesh, layout, tag="I"):
        n = 4 * mesh.N if layout == "dense" else 4 * mesh.n_theta
        k = 1 if layout == "dense" else mesh.n_phi
        return cls(np.broadcast_to(np.eye(n, dtype=complex), (k, n, n)).copy(), layout, mesh, tag=tag)

    def _new(self, data, tag=None):
        return DiscreteOperator(data, self.layout, self.mesh, lam=self.lam, scheme=self.scheme,
                                tag=self.tag if tag is None else tag)

    # ---- algebra --------------------------------------------------------
    def __add__(self, other):
        if np.isscalar(other):
            return self._new(self.data + other * np.eye(self.data.shape[-1]))
        _check_same(self, other)
        return self._new(self.data + other.data, f"({self.tag}+{other.tag})")

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return self + (-other)
        _check_same(self, other)
        return self._new(self.data - other.data, f"({self.tag}-{other.tag})")

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __mul__(self, s):
        if not np.isscalar(s):
            return NotImplemented
        return self._new(s * self.data)

    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self.data)

    def __matmul__(self, other):
        if isinstance(other, DiscreteOperator):
            _check_same(self, other)
            return self._new(self.data @ other.data, f"{self.tag}{other.tag}")
        return self.apply(other)

    @property
    def H(self):
        return self._new(np.conj(np.swapaxes(self.data, -1, -2)), f"{self.tag}^H")

    def inv(self):
        return self._new(np.linalg.inv(self.data), f"{self.tag}^-1")

    # ---- vectors ----------------------------------------------------------
    def apply(self, c):
        """Apply to scaled panel vector(s) of length 4N (mesh order)."""
        c = np.asarray(c, dtype=complex)
        vec = c.ndim == 1 or (c.ndim == 2 and c.shape[1] == 4 and c.shape[0] == self.mesh.N)
        flat = c.reshape(4 * self.mesh.N, -1)
        if self.layout == "dense":
            out = self.data[0] @ flat
        else:
            out = from_modes(self.mesh, self.data @ to_modes(self.mesh, flat))
        return out.reshape(-1) if vec else out

    def solve(self, c):
        c = np.asarray(c, dtype=complex)
        flat = c.reshape(4 * self.mesh.N, -1)
        if self.layout == "dense":
            out = np.linalg.solve(self.data[0], flat)
        else:
            out = from_modes(self.mesh, np.linalg.solve(self.data, to_modes(self.mesh, flat)))
        return out.reshape(c.shape)

    # ---- spectral data ------------------------------------------------------
    def svdvals(self) -> np.ndarray:
        s = np.linalg.svd(self.data, compute_uv=False)
        return np.sort(s.reshape(-1))[::-1]

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvals(self.data).reshape(-1)

    def eigvalsh(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(self.data).reshape(-1))

    def norm2(self) -> float:
        return float(np.max(np.linalg.norm(self.data, 2, axis=(-2, -1))))

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.data - np.conj(np.swapaxes(self.data, -1, -2)))))

    def dense(self) -> np.ndarray:
        """Full ``(4N, 4N)`` matrix in mesh order; block (i, j) couples panel j to panel i."""
        if self.layout == "dense":
            return self.data[0].copy()
        n = 4 * self.mesh.N
        eye_modes = to_modes(self.mesh, np.eye(n))
        return from_modes(self.mesh, self.data @ eye_modes)

    @property
    def shape(self):
        n = 4 * self.mesh.N
        return (n, n)

    def __repr__(self):
        lam = None if self.lam is None else self.lam.lam
        return (f"DiscreteOperator(tag={self.tag!r}, layout={self.layout}, N={self.mesh.N}, "
                f"lambda={lam}, scheme={self.scheme!r})")
