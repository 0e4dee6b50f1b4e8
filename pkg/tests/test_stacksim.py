import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mmfbar.fdoracle import fd_oracle_admittance
from mmfbar.materials import Layer, Stack
from mmfbar.spectrum import FrequencyGrid, find_modes
from mmfbar.stacksim import layer_acoustic_matrix, simulate_modes, stack_admittance, sweep

from conftest import random_material, symmetric_stack


def _unpoled(stack):
    layers = list(stack.layers)
    p = layers[stack.piezo_index]
    layers[stack.piezo_index] = Layer(replace(p.material, e33=0.0), p.thickness)
    return replace(stack, layers=tuple(layers))


# -- layer matrix ------------------------------------------------------------


def test_thin_layer_is_identity(table):
    al = table["Al"]
    z = math.sqrt(al.c33 * al.density)
    m = layer_acoustic_matrix(Layer(al, 1e-18), [10e9])[0]
    # off-diagonals carry Z and 1/Z; normalised, the matrix is the identity
    norm = m * np.array([[1, 1 / z], [z, 1]])
    assert np.allclose(norm, np.eye(2), rtol=0, atol=1e-9)


def test_quarter_wave_layer(table):
    al = replace(table["Al"], mech_q=math.inf)
    v = math.sqrt(al.c33 / al.density)
    z = al.density * v
    t = 100e-9
    f = v / (4 * t)
    m = layer_acoustic_matrix(Layer(al, t), [f])[0]
    expected = np.array([[0, 1j * z], [1j / z, 0]])
    assert np.allclose(m, expected, rtol=1e-12, atol=1e-12 * z)


@settings(max_examples=300, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    t_nm=st.floats(1.0, 2000.0),
    f=st.floats(1e8, 2e11),
)
def test_layer_determinant_is_one(seed, t_nm, f):
    m = random_material(np.random.default_rng(seed))
    a = layer_acoustic_matrix(Layer(m, t_nm * 1e-9), [f])[0]
    # cos^2 - sin^2 cancels; roundoff scales with the size of the cancelled products
    scale = max(1.0, abs(a[0, 0] * a[1, 1]))
    assert abs(np.linalg.det(a) - 1) <= 1e-9 * scale


@settings(max_examples=300, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    t_nm=st.floats(1.0, 2000.0),
    f=st.floats(1e8, 2e11),
)
def test_lossless_layer_determinant_is_one(seed, t_nm, f):
    m = random_material(np.random.default_rng(seed), lossy=False)
    a = layer_acoustic_matrix(Layer(m, t_nm * 1e-9), [f])[0]
    assert abs(np.linalg.det(a) - 1) <= 1e-9


def test_shipped_material_determinants(table):
    f = np.linspace(1e8, 2e11, 501)
    for m in table.values():
        for t in np.linspace(1e-9, 2e-6, 40):
            a = layer_acoustic_matrix(Layer(m, t), f)
            assert np.max(np.abs(np.linalg.det(a) - 1)) <= 1e-9, (m.name, t)


# -- admittance --------------------------------------------------------------


def test_unpoled_stack_is_a_capacitor(stack):
    s = _unpoled(stack)
    f = np.linspace(1e9, 80e9, 101)
    y = stack_admittance(s, f).values
    c0 = s.static_capacitance
    assert c0 == pytest.approx(1.75e-13, rel=0.01)
    assert np.allclose(y, 2j * np.pi * f * c0, rtol=1e-12, atol=0)


def test_lossless_stack_has_no_conductance(stack):
    s = stack.lossless()
    y = stack_admittance(s, np.linspace(1.003e9, 80.007e9, 4001)).values
    assert np.all(np.abs(y.real) <= 1e-9 * np.abs(y))


def test_invalid_stack_rejected(stack):
    with pytest.raises(ValueError, match="invalid stack"):
        stack_admittance(replace(stack, area=-1.0), [1e9])


def _random_stack(rng, lossy=True):
    n_above, n_below = rng.integers(0, 3), rng.integers(0, 3)
    layers = [Layer(random_material(rng, lossy=lossy), rng.uniform(5e-9, 500e-9)) for _ in range(n_above)]
    layers.append(Layer(random_material(rng, piezo=True, lossy=lossy), rng.uniform(20e-9, 1e-6)))
    layers += [Layer(random_material(rng, lossy=lossy), rng.uniform(5e-9, 500e-9)) for _ in range(n_below)]
    return Stack(tuple(layers), int(n_above), rng.uniform(1e-11, 1e-8))


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2**32 - 1))
def test_passivity_random_lossy_stacks(seed):
    rng = np.random.default_rng(seed)
    s = _random_stack(rng)
    y = stack_admittance(s, np.linspace(1e8, 1e11, 400)).values
    assert np.all(y.real >= -1e-12 * np.abs(y))


# -- modes and parity --------------------------------------------------------


def test_default_stack_labels(stack):
    modes = simulate_modes(stack, FrequencyGrid(5e9, 80e9, 3001))
    labels = [m.label for m in modes]
    assert labels[:2] == ["S1", "S3"]
    for m in modes:
        assert m.f_s < m.f_p and 0 < m.k2 < 1
        assert m.fom == pytest.approx(m.k2 * m.q_p)


def _between(s, n=40001):
    """Pairs found strictly between S1's f_p and S3's f_s (lossless, dense grid)."""
    f = np.linspace(5e9, 90e9, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pairs = find_modes(stack_admittance(s, f))
        modes = {m.label: m for m in simulate_modes(s, f)}
    s1, s3 = modes["S1"], modes["S3"]
    return [p for p in pairs if s1.f_p < p.f_s and p.f_p < s3.f_s]


def test_symmetric_electrodes_have_no_a2():
    assert _between(symmetric_stack()) == []


@settings(max_examples=20, deadline=None)
@given(
    delta=st.floats(0.05, 0.30),
    top=st.booleans(),
    sign=st.sampled_from([-1, 1]),
)
def test_asymmetric_electrodes_show_one_a2(delta, top, sign):
    t = 37.0 * (1 + sign * delta)
    s = symmetric_stack(top_nm=t) if top else symmetric_stack(bottom_nm=t)
    found = _between(s)
    assert len(found) == 1
    modes = simulate_modes(s, np.linspace(5e9, 90e9, 40001))
    assert "A2" in [m.label for m in modes]


# -- finite-difference oracle ------------------------------------------------


def test_oracle_unpoled_is_capacitor(stack):
    s = _unpoled(stack)
    f = np.linspace(1e9, 80e9, 21)
    y = fd_oracle_admittance(s, f, 301).values
    assert np.allclose(y, 2j * np.pi * f * s.static_capacitance, rtol=1e-12, atol=0)


def test_oracle_rejects_coarse_grids(stack):
    with pytest.raises(ValueError, match="nodes"):
        fd_oracle_admittance(stack, [1e9], 30)


def _off_resonance_mask(y):
    """Samples not within 3% of any |Y| extremum."""
    f = y.frequencies
    mask = np.ones(f.shape, bool)
    for p in find_modes(y, prominence_db=1.0):
        for fc in (p.f_s, p.f_p):
            mask &= np.abs(f - fc) > 0.03 * fc
    return mask


def test_oracle_agrees_off_resonance(stack):
    g = FrequencyGrid(5e9, 80e9, 751)
    ya = stack_admittance(stack, g)
    yb = fd_oracle_admittance(stack, g, 2000)
    m = _off_resonance_mask(ya)
    rel = np.abs(yb.values - ya.values) / np.abs(ya.values)
    assert m.sum() > 300
    assert rel[m].max() <= 0.01


def test_oracle_convergence_order(stack):
    f = np.linspace(5e9, 80e9, 151)
    ya = stack_admittance(stack, f).values
    e1 = np.max(np.abs(fd_oracle_admittance(stack, f, 500).values - ya))
    e2 = np.max(np.abs(fd_oracle_admittance(stack, f, 1000).values - ya))
    e3 = np.max(np.abs(fd_oracle_admittance(stack, f, 2000).values - ya))
    assert math.log2(e1 / e2) >= 1.8
    assert math.log2(e2 / e3) >= 1.8


# -- sweeps ------------------------------------------------------------------


def test_single_value_sweep_matches_simulation(stack):
    g = FrequencyGrid(5e9, 80e9, 1501)
    rows = sweep(stack, "area", [stack.area], g)
    assert rows[0].modes == tuple(simulate_modes(stack, g))


def test_electrode_sweep_favours_interior_thickness(stack):
    g = FrequencyGrid(5e9, 200e9, 8001)

    def s3_k2(rows):
        # an S3 too weak to clear the detection threshold counts as uncoupled
        return [next((m.k2 for m in r.modes if m.label == "S3"), 0.0) for r in rows]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        k0, k37, _k74 = s3_k2(sweep(stack, "layers[0,2].thickness", [0.0, 37e-9, 74e-9], g))
        assert k37 > k0
        vals = np.arange(0, 161, 8) * 1e-9
        ks = s3_k2(sweep(stack, "layers[0,2].thickness", vals, g))
    best = int(np.argmax(ks))
    assert 0 < best < len(vals) - 1


def test_doubling_plate_thickness_halves_frequencies(table):
    plate = Stack((Layer(table["ScAlN30"], 85e-9),), 0, 112e-12)
    g = FrequencyGrid(5e9, 250e9, 20001)
    rows = sweep(plate, "layers[0].thickness", [85e-9, 170e-9], g)
    a, b = rows[0].modes, rows[1].modes
    assert b[0].f_s == pytest.approx(a[0].f_s / 2, rel=1e-3)
    assert b[1].f_s == pytest.approx(a[1].f_s / 2, rel=1e-3)


@pytest.mark.parametrize(
    "path",
    ["layers[9].thickness", "layers[0].colour", "thickness", "layers[1].material.nope"],
)
def test_sweep_rejects_bad_paths(stack, path):
    with pytest.raises(ValueError, match="cannot resolve"):
        sweep(stack, path, [1.0], FrequencyGrid(1e9, 2e9, 3))


def test_sweep_cannot_remove_piezo(stack):
    with pytest.raises(ValueError, match="cannot be removed"):
        sweep(stack, "layers[1].thickness", [0.0], FrequencyGrid(1e9, 2e9, 3))


def test_material_field_sweep(stack):
    g = FrequencyGrid(5e9, 80e9, 1501)
    rows = sweep(stack, "layers[1].material.e33", [1.5, 2.5], g)
    assert rows[0].modes[0].k2 < rows[1].modes[0].k2
