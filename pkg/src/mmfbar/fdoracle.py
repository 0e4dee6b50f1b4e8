"""Finite-difference reference solution for the stack admittance.

Solves the frequency-domain 1D wave equation ``d/dx(c du/dx) + rho w^2 u = 0``
on a node grid that places a node on every interface, using the
conservative three-point scheme (half-cell masses at the ends, natural
zero-stress boundaries).  Inside the piezoelectric layer the stress is
``c_D du/dx - h D`` with the electric displacement ``D`` uniform across the
layer; its value closes the system through the drive voltage
``V = -h (u_b - u_a) + D t / eps``.  Admittance is ``j w D A / V``.

This shares nothing with :mod:`mmfbar.stacksim` beyond the material
records, so agreement between the two is a genuine check.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .materials import Stack, complex_stiffness, validate_stack
from .spectrum import ComplexSpectrum, FrequencyGrid

MIN_CELLS_PER_LAYER = 10


def _cells_per_layer(thicknesses, nodes: int) -> list[int]:
    total = sum(thicknesses)
    cells = nodes - 1
    raw = [cells * t / total for t in thicknesses]
    n = [max(MIN_CELLS_PER_LAYER, int(np.floor(r))) for r in raw]
    # largest remainder until the total matches (never below the minimum)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - np.floor(raw[i])), i))
    k = 0
    while sum(n) < cells and order:
        n[order[k % len(order)]] += 1
        k += 1
    return n


def fd_oracle_admittance(s: Stack, g, nodes: int) -> ComplexSpectrum:
    """Admittance of ``s`` from a ``nodes``-point finite-difference model."""
    problems = validate_stack(s, require_piezo=False)
    if problems:
        raise ValueError("invalid stack: " + "; ".join(problems))
    if nodes < MIN_CELLS_PER_LAYER * len(s.layers) + 1:
        raise ValueError(
            f"need at least {MIN_CELLS_PER_LAYER} nodes per layer "
            f"({MIN_CELLS_PER_LAYER * len(s.layers) + 1} total), got {nodes}"
        )
    f = g.frequencies() if isinstance(g, FrequencyGrid) else np.atleast_1d(np.asarray(g, float))

    counts = _cells_per_layer([l.thickness for l in s.layers], nodes)
    stiff, mass = [], []  # per cell
    for layer, n in zip(s.layers, counts):
        dx = layer.thickness / n
        stiff += [complex_stiffness(layer.material) / dx] * n
        mass += [layer.material.density * dx] * n
    stiff, mass = np.array(stiff), np.array(mass)
    n_nodes = len(stiff) + 1
    node_mass = np.zeros(n_nodes)
    node_mass[:-1] += mass / 2
    node_mass[1:] += mass / 2
    k_diag = np.zeros(n_nodes, dtype=complex)
    k_diag[:-1] += stiff
    k_diag[1:] += stiff

    a = sum(counts[: s.piezo_index])  # first node of the piezo layer
    b = a + counts[s.piezo_index]
    mat = s.piezo.material
    h = mat.e33 / mat.eps33
    t = s.piezo.thickness
    load = np.zeros(n_nodes)
    load[a], load[b] = -h, h

    ab = np.zeros((3, n_nodes), dtype=complex)
    ab[0, 1:] = -stiff
    ab[2, :-1] = -stiff
    y = np.empty(f.size, dtype=complex)
    for i, fi in enumerate(f):
        w = 2 * np.pi * fi
        ab[1] = k_diag - w * w * node_mass
        # displacement per unit D
        u = solve_banded((1, 1), ab, load, check_finite=False)
        d = (mat.eps33 / t) / (1 - (mat.eps33 * h / t) * (u[b] - u[a]))
        y[i] = 1j * w * d * s.area
    return ComplexSpectrum(f, y, "admittance")
