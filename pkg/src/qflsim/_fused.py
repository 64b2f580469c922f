"""Fused JIT evaluation of a compiled gate program.

One kernel runs the whole forward sweep (and, for gradients, the reverse
adjoint sweep with per-occurrence shift-rule contributions) over a batch
of states, so the per-gate Python dispatch of the generic path
disappears. The pure-numpy implementation in ModelEvaluator remains the
reference; tests assert both paths agree to machine precision.

Gate programs arrive as flat arrays: an integer kind code, the two
targets (second one -1 for single-qubit gates), the resolved angle, the
parameter index (-1 for fixed gates) and the occurrence sign.
"""

import math
import os

import numpy as np

try:  # pragma: no cover - exercised implicitly by the whole suite
    if os.environ.get("QFLSIM_NO_NUMBA"):
        raise ImportError("numba disabled by QFLSIM_NO_NUMBA")
    import numba as nb

    AVAILABLE = True
except ImportError:  # pragma: no cover
    nb = None
    AVAILABLE = False

KIND_CODES = {"H": 0, "CZ": 1, "CNOT": 2, "RX": 3, "RY": 4, "RZ": 5,
              "XX": 6, "YY": 7, "ZZ": 8}
_ONE_QUBIT = (0, 3, 4, 5)


if AVAILABLE:

    @nb.njit(cache=True)
    def _fill_matrix(code, angle, m):
        """Write the gate unitary into the top-left block of a 4x4 scratch."""
        for r in range(4):
            for c in range(4):
                m[r, c] = 0.0
        if code == 0:  # H
            s = 1.0 / math.sqrt(2.0)
            m[0, 0] = s; m[0, 1] = s
            m[1, 0] = s; m[1, 1] = -s
        elif code == 1:  # CZ
            m[0, 0] = 1.0; m[1, 1] = 1.0; m[2, 2] = 1.0; m[3, 3] = -1.0
        elif code == 2:  # CNOT
            m[0, 0] = 1.0; m[1, 1] = 1.0; m[2, 3] = 1.0; m[3, 2] = 1.0
        else:
            c = math.cos(0.5 * angle)
            s = math.sin(0.5 * angle)
            if code == 3:  # RX
                m[0, 0] = c; m[0, 1] = -1j * s
                m[1, 0] = -1j * s; m[1, 1] = c
            elif code == 4:  # RY
                m[0, 0] = c; m[0, 1] = -s
                m[1, 0] = s; m[1, 1] = c
            elif code == 5:  # RZ
                m[0, 0] = c - 1j * s
                m[1, 1] = c + 1j * s
            elif code == 6:  # XX
                m[0, 0] = c; m[1, 1] = c; m[2, 2] = c; m[3, 3] = c
                m[0, 3] = -1j * s; m[1, 2] = -1j * s
                m[2, 1] = -1j * s; m[3, 0] = -1j * s
            elif code == 7:  # YY
                m[0, 0] = c; m[1, 1] = c; m[2, 2] = c; m[3, 3] = c
                m[0, 3] = 1j * s; m[1, 2] = -1j * s
                m[2, 1] = -1j * s; m[3, 0] = 1j * s
            else:  # ZZ
                m[0, 0] = c - 1j * s; m[1, 1] = c + 1j * s
                m[2, 2] = c + 1j * s; m[3, 3] = c - 1j * s

    @nb.njit(cache=True)
    def _apply_1q(psi, out, m, q):
        batch, dim = psi.shape
        mask = 1 << q
        for b in range(batch):
            for i in range(dim):
                if i & mask == 0:
                    j = i | mask
                    a0 = psi[b, i]
                    a1 = psi[b, j]
                    out[b, i] = m[0, 0] * a0 + m[0, 1] * a1
                    out[b, j] = m[1, 0] * a0 + m[1, 1] * a1

    @nb.njit(cache=True)
    def _apply_2q(psi, out, m, qa, qb):
        batch, dim = psi.shape
        ma = 1 << qa
        mb = 1 << qb
        for b in range(batch):
            for i in range(dim):
                if (i & ma) == 0 and (i & mb) == 0:
                    i01 = i | mb
                    i10 = i | ma
                    i11 = i | ma | mb
                    a00 = psi[b, i]
                    a01 = psi[b, i01]
                    a10 = psi[b, i10]
                    a11 = psi[b, i11]
                    out[b, i] = m[0, 0] * a00 + m[0, 1] * a01 + m[0, 2] * a10 + m[0, 3] * a11
                    out[b, i01] = m[1, 0] * a00 + m[1, 1] * a01 + m[1, 2] * a10 + m[1, 3] * a11
                    out[b, i10] = m[2, 0] * a00 + m[2, 1] * a01 + m[2, 2] * a10 + m[2, 3] * a11
                    out[b, i11] = m[3, 0] * a00 + m[3, 1] * a01 + m[3, 2] * a10 + m[3, 3] * a11

    @nb.njit(cache=True)
    def _apply_step(psi, out, m, code, qa, qb):
        if code == 0 or code == 3 or code == 4 or code == 5:
            _apply_1q(psi, out, m, qa)
        else:
            _apply_2q(psi, out, m, qa, qb)

    @nb.njit(cache=True)
    def _apply_generator(psi, out, code, qa, qb):
        """Apply the generating Pauli of a rotation kind (X/Y/Z or pairs)."""
        batch, dim = psi.shape
        ma = 1 << qa
        if code == 3:  # X
            for b in range(batch):
                for i in range(dim):
                    out[b, i] = psi[b, i ^ ma]
        elif code == 4:  # Y
            for b in range(batch):
                for i in range(dim):
                    if i & ma == 0:
                        j = i | ma
                        out[b, i] = -1j * psi[b, j]
                        out[b, j] = 1j * psi[b, i]
        elif code == 5:  # Z
            for b in range(batch):
                for i in range(dim):
                    out[b, i] = -psi[b, i] if i & ma else psi[b, i]
        else:
            mb = 1 << qb
            mab = ma | mb
            if code == 6:  # XX
                for b in range(batch):
                    for i in range(dim):
                        out[b, i] = psi[b, i ^ mab]
            elif code == 7:  # YY
                for b in range(batch):
                    for i in range(dim):
                        src = i ^ mab
                        par = ((src >> qa) ^ (src >> qb)) & 1
                        out[b, i] = psi[b, src] if par else -psi[b, src]
            else:  # ZZ
                for b in range(batch):
                    for i in range(dim):
                        par = ((i >> qa) ^ (i >> qb)) & 1
                        out[b, i] = -psi[b, i] if par else psi[b, i]

    @nb.njit(cache=True)
    def forward_z(prep, codes, qas, qbs, angles, readout):
        batch, dim = prep.shape
        psi = prep.copy()
        out = np.empty_like(psi)
        m = np.empty((4, 4), np.complex128)
        for t in range(codes.shape[0]):
            _fill_matrix(codes[t], angles[t], m)
            _apply_step(psi, out, m, codes[t], qas[t], qbs[t])
            tmp = psi
            psi = out
            out = tmp
        z = np.zeros(batch)
        rmask = 1 << readout
        for b in range(batch):
            for i in range(dim):
                p = psi[b, i].real**2 + psi[b, i].imag**2
                z[b] += -p if i & rmask else p
        return z

    @nb.njit(cache=True)
    def forward_z_and_grad(prep, codes, qas, qbs, angles, param_idx, signs,
                           readout, n_params):
        batch, dim = prep.shape
        n_steps = codes.shape[0]
        fwd = np.empty((n_steps + 1, batch, dim), np.complex128)
        fwd[0] = prep
        m = np.empty((4, 4), np.complex128)
        for t in range(n_steps):
            _fill_matrix(codes[t], angles[t], m)
            _apply_step(fwd[t], fwd[t + 1], m, codes[t], qas[t], qbs[t])

        z = np.zeros(batch)
        rmask = 1 << readout
        lam = np.empty((batch, dim), np.complex128)
        for b in range(batch):
            for i in range(dim):
                a = fwd[n_steps, b, i]
                p = a.real**2 + a.imag**2
                if i & rmask:
                    z[b] -= p
                    lam[b, i] = -a
                else:
                    z[b] += p
                    lam[b, i] = a

        dz = np.zeros((n_params, batch))
        scratch = np.empty((batch, dim), np.complex128)
        dag = np.empty((4, 4), np.complex128)
        for t in range(n_steps - 1, -1, -1):
            idx = param_idx[t]
            if idx >= 0:
                _apply_generator(fwd[t + 1], scratch, codes[t], qas[t], qbs[t])
                for b in range(batch):
                    acc = 0.0
                    for i in range(dim):
                        s = scratch[b, i]
                        l = lam[b, i]
                        # imag part of conj(s) * l
                        acc += s.real * l.imag - s.imag * l.real
                    dz[idx, b] -= signs[t] * acc
            _fill_matrix(codes[t], angles[t], m)
            for r in range(4):
                for c in range(4):
                    dag[r, c] = m[c, r].real - 1j * m[c, r].imag
            _apply_step(lam, scratch, dag, codes[t], qas[t], qbs[t])
            tmp = lam
            lam = scratch
            scratch = tmp
        return z, dz
