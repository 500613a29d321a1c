"""Named observables resolvable against a model.

The registry covers the natural readouts of the bundled presets: Pauli
operators (bare qubit, or the qubit factor of the composite model), the mode
number operator, field quadratures, and grid position/momentum.  Custom
matrices bypass the registry.
"""

from __future__ import annotations

import numpy as np

from .errors import SiwfError
from .model import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ModelSpec,
    annihilation,
)


def _pauli(model: ModelSpec, sigma: np.ndarray) -> np.ndarray:
    if model.dim == 2:
        return np.array(sigma)
    n_fock = model.meta.get("n_fock")
    if n_fock is not None and model.dim == 2 * n_fock:
        return np.kron(np.eye(n_fock, dtype=np.complex128), sigma)
    raise SiwfError(
        f"Pauli observable undefined for dimension {model.dim} without a "
        "qubit factor"
    )


def _number(model: ModelSpec) -> np.ndarray:
    n_fock = model.meta.get("n_fock")
    if n_fock is not None:
        a = annihilation(n_fock)
        return np.kron(a.conj().T @ a, np.eye(2, dtype=np.complex128))
    a = annihilation(model.dim)
    return a.conj().T @ a


def _quadrature(model: ModelSpec, phase: float) -> np.ndarray:
    n_fock = model.meta.get("n_fock")
    if n_fock is None:
        a = annihilation(model.dim)
        return np.exp(1j * phase) * a.conj().T + np.exp(-1j * phase) * a
    a = annihilation(n_fock)
    quad = np.exp(1j * phase) * a.conj().T + np.exp(-1j * phase) * a
    return np.kron(quad, np.eye(2, dtype=np.complex128))


def _position(model: ModelSpec) -> np.ndarray:
    grid = model.meta.get("grid")
    if grid is None:
        raise SiwfError("position observable needs a grid model")
    return np.diag(np.asarray(grid, dtype=np.complex128))


def _momentum(model: ModelSpec) -> np.ndarray:
    grid = model.meta.get("grid")
    if grid is None:
        raise SiwfError("momentum observable needs a grid model")
    x = np.asarray(grid, dtype=float)
    n = x.size
    h = x[1] - x[0] if n > 1 else 1.0
    # -i d/dx by central differences, Dirichlet boundaries
    p = np.zeros((n, n), dtype=np.complex128)
    idx = np.arange(n - 1)
    p[idx, idx + 1] = -1j / (2 * h)
    p[idx + 1, idx] = 1j / (2 * h)
    return p


_REGISTRY = {
    "sigma_x": lambda m: _pauli(m, SIGMA_X),
    "sigma_y": lambda m: _pauli(m, SIGMA_Y),
    "sigma_z": lambda m: _pauli(m, SIGMA_Z),
    "number": _number,
    "quadrature_x": lambda m: _quadrature(m, 0.0),
    "quadrature_p": lambda m: _quadrature(m, np.pi / 2),
    "position": _position,
    "momentum": _momentum,
}

KNOWN_OBSERVABLES = tuple(sorted(_REGISTRY))


def resolve_observable(name: str, model: ModelSpec) -> np.ndarray:
    """Look up a named observable for the given model."""
    if name not in _REGISTRY:
        raise SiwfError(
            f"unknown observable '{name}', known names: {KNOWN_OBSERVABLES}"
        )
    matrix = _REGISTRY[name](model)
    if matrix.shape != (model.dim, model.dim):
        raise SiwfError(
            f"observable '{name}' has shape {matrix.shape}, model dimension "
            f"is {model.dim}"
        )
    return matrix
