"""NumPy implementation of the delay-angle spectrum denominator kernel.

Evaluates, for every (delay bin, angle) pair on the search grid,

    d(tau, phi) = || basis^H s(tau, phi) ||^2

where ``s = kron(a(phi), f(tau))`` is the space-frequency steering vector and
``basis`` holds orthonormal subspace columns.  With ``complement=True`` the
kernel returns ``||s||^2 - d`` instead, which equals the projection onto the
orthogonal complement of the basis; passing the signal subspace then yields
the same quantity as passing the noise subspace directly, at a fraction of
the cost.
"""

from __future__ import annotations

import numpy as np


def denominator_grid(
    basis: np.ndarray,
    delay_phasors: np.ndarray,
    angle_phasors: np.ndarray,
    complement: bool,
) -> np.ndarray:
    """Return the (n_delays, n_angles) float64 denominator grid.

    basis: (P*N, B) orthonormal columns, antenna-major rows (index p*N + n).
    delay_phasors: (n_delays, N) rows f(tau).
    angle_phasors: (n_angles, P) rows a(phi).
    """
    n_angles, p_count = angle_phasors.shape
    n_delays, n_tones = delay_phasors.shape
    dim, b_count = basis.shape
    if dim != p_count * n_tones:
        raise ValueError(
            f"basis rows {dim} != antenna_count*tone_count {p_count * n_tones}"
        )

    # g[t, p, b] = sum_n conj(basis[p*N+n, b]) * f[t, n], via one matmul
    mixed = (
        np.conj(basis)
        .reshape(p_count, n_tones, b_count)
        .transpose(1, 0, 2)
        .reshape(n_tones, p_count * b_count)
    )
    g = (delay_phasors @ mixed).reshape(n_delays, p_count, b_count)

    # Collapse the basis axis into a per-delay antenna Gram matrix, then
    # contract with the angle phasors; P is small so this is cheap.
    gram = np.einsum("tpb,tqb->tpq", g, np.conj(g), optimize=True)
    quad = np.einsum(
        "ap,tpq,aq->ta", angle_phasors, gram, np.conj(angle_phasors), optimize=True
    )
    out = np.ascontiguousarray(quad.real)
    if complement:
        out = float(dim) - out
    return out
