"""Named analytic fields on the continuous torus and their lattice samples.

Config files refer to initial perturbations and test functions by name
(``const``, ``cos_k``, ``sin_k``, ``bump``); this module turns those names
into callables on [0,1)^d and samples them on lattice points x/n.
Multi-dimensional variants vary along the first coordinate.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .lattice import Torus

Field = Callable[[np.ndarray], np.ndarray]  # theta array of shape (..., d) -> values


def make_field(name: str, **params) -> Field:
    if name == "const":
        value = float(params.get("value", 0.0))

        def fn(theta):
            return np.full(np.asarray(theta).shape[:-1], value)

    elif name == "cos_k":
        k = int(params.get("k", 1))
        amplitude = float(params.get("amplitude", 1.0))

        def fn(theta):
            return amplitude * np.cos(2.0 * np.pi * k * np.asarray(theta)[..., 0])

    elif name == "sin_k":
        k = int(params.get("k", 1))
        amplitude = float(params.get("amplitude", 1.0))

        def fn(theta):
            return amplitude * np.sin(2.0 * np.pi * k * np.asarray(theta)[..., 0])

    elif name == "bump":
        center = float(params.get("center", 0.5))
        width = float(params.get("width", 0.1))
        amplitude = float(params.get("amplitude", 1.0))

        def fn(theta):
            s = np.sin(np.pi * (np.asarray(theta)[..., 0] - center))
            return amplitude * np.exp(-(s * s) / (width * width))

    else:
        raise ValueError(f"unknown field name {name!r}")

    return fn


def lattice_theta(torus: Torus) -> np.ndarray:
    """Array of shape (size, d) with row-major lattice points x/n."""
    coords = np.unravel_index(np.arange(torus.size), torus.shape)
    return np.stack(coords, axis=-1) / torus.n


def sample_field(torus: Torus, field: Field) -> np.ndarray:
    """Flat row-major sample of the field at the lattice points x/n."""
    return np.asarray(field(lattice_theta(torus)), dtype=np.float64)


def mesh_theta(n_mesh: int, d: int = 1) -> np.ndarray:
    """Uniform periodic mesh of [0,1)^d as an array of shape (n_mesh^d, d)."""
    torus = Torus(d, n_mesh)
    return lattice_theta(torus)
