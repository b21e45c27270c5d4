"""Backend selection for the spectrum denominator kernel.

The compiled Cython kernel is preferred when its extension module was built;
otherwise the NumPy implementation is used.  Set ISACTRACK_SPECTRUM_BACKEND
to "cython" or "numpy" to force one (the former raises if the extension is
missing), or leave it unset / "auto" for the default behaviour.
"""

from __future__ import annotations

import os

import numpy as np

from . import _spectrum_np


def _load_backend() -> tuple[str, object]:
    choice = os.environ.get("ISACTRACK_SPECTRUM_BACKEND", "auto").lower()
    if choice not in {"auto", "cython", "numpy"}:
        raise ValueError(
            f"ISACTRACK_SPECTRUM_BACKEND must be auto, cython or numpy, got {choice!r}"
        )
    if choice in ("auto", "cython"):
        try:
            from . import _spectrum_cy

            return "cython", _spectrum_cy.denominator_grid
        except ImportError:
            if choice == "cython":
                raise ImportError(
                    "ISACTRACK_SPECTRUM_BACKEND=cython but the compiled kernel "
                    "is not available; reinstall with a C compiler present"
                )
    return "numpy", _spectrum_np.denominator_grid


BACKEND_NAME, _kernel = _load_backend()


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        from . import _spectrum_cy  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def get_kernel(name: str):
    """Fetch a specific backend's kernel, e.g. for benchmarking."""
    if name == "numpy":
        return _spectrum_np.denominator_grid
    if name == "cython":
        from . import _spectrum_cy

        return _spectrum_cy.denominator_grid
    raise ValueError(f"unknown spectrum backend {name!r}")


def denominator_grid(
    basis: np.ndarray,
    delay_phasors: np.ndarray,
    angle_phasors: np.ndarray,
    complement: bool,
) -> np.ndarray:
    """Dispatch to the selected backend with normalized array layouts."""
    basis = np.ascontiguousarray(basis, dtype=np.complex128)
    delay_phasors = np.ascontiguousarray(delay_phasors, dtype=np.complex128)
    angle_phasors = np.ascontiguousarray(angle_phasors, dtype=np.complex128)
    return _kernel(basis, delay_phasors, angle_phasors, complement)
