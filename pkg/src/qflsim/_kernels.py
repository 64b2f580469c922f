"""JIT-compiled gate-application kernels for the batched hot loop.

Bit-for-bit the same arithmetic as the numpy tensor-contraction path in
sim.apply_matrix, just without the per-call reshape overhead. The numpy
path remains the reference implementation and the fallback when numba
is unavailable or QFLSIM_NO_NUMBA is set.
"""

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly by the whole suite
    if os.environ.get("QFLSIM_NO_NUMBA"):
        raise ImportError("numba disabled by QFLSIM_NO_NUMBA")
    import numba as _nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _nb = None
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @_nb.njit("void(complex128[:,:], complex128[:,:], complex128[:,:], int64)",
              cache=True)
    def _apply_1q(psi, out, u, q):
        batch, dim = psi.shape
        mask = 1 << q
        for b in range(batch):
            for i in range(dim):
                if i & mask == 0:
                    j = i | mask
                    a0 = psi[b, i]
                    a1 = psi[b, j]
                    out[b, i] = u[0, 0] * a0 + u[0, 1] * a1
                    out[b, j] = u[1, 0] * a0 + u[1, 1] * a1

    @_nb.njit("void(complex128[:,:], complex128[:,:], complex128[:,:], int64, int64)",
              cache=True)
    def _apply_2q(psi, out, u, qa, qb):
        # First target qa selects the high bit of the 4x4 local index.
        batch, dim = psi.shape
        ma = 1 << qa
        mb = 1 << qb
        for b in range(batch):
            for i in range(dim):
                if (i & ma) == 0 and (i & mb) == 0:
                    i00 = i
                    i01 = i | mb
                    i10 = i | ma
                    i11 = i | ma | mb
                    a00 = psi[b, i00]
                    a01 = psi[b, i01]
                    a10 = psi[b, i10]
                    a11 = psi[b, i11]
                    out[b, i00] = u[0, 0] * a00 + u[0, 1] * a01 + u[0, 2] * a10 + u[0, 3] * a11
                    out[b, i01] = u[1, 0] * a00 + u[1, 1] * a01 + u[1, 2] * a10 + u[1, 3] * a11
                    out[b, i10] = u[2, 0] * a00 + u[2, 1] * a01 + u[2, 2] * a10 + u[2, 3] * a11
                    out[b, i11] = u[3, 0] * a00 + u[3, 1] * a01 + u[3, 2] * a10 + u[3, 3] * a11


def apply_fast(states: np.ndarray, mat: np.ndarray, targets: tuple[int, ...],
               out: np.ndarray | None = None) -> np.ndarray | None:
    """Kernel-path gate application on a (batch, 2^n) array, or None when
    the inputs do not qualify and the caller must use the numpy path."""
    if not HAVE_NUMBA or len(targets) > 2:
        return None
    if states.dtype != np.complex128 or not states.flags.c_contiguous:
        return None
    if out is None:
        out = np.empty_like(states)
    u = np.ascontiguousarray(mat, dtype=np.complex128)
    if len(targets) == 1:
        _apply_1q(states, out, u, targets[0])
    else:
        _apply_2q(states, out, u, targets[0], targets[1])
    return out
