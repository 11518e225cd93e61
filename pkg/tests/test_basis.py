import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusflow.basis import (
    BasisMode,
    GridField,
    ResolutionError,
    SpectralField,
    analyze,
    divergence_max,
    eval_mode,
    get_basis,
    gradient,
    h1_inner,
    l2_inner,
    leray_project,
    random_field,
    synthesize,
)

import oracles

PI = np.pi


def test_enumeration_counts():
    for n in (0, 1, 3, 8):
        b = get_basis(n)
        assert b.cardinality == (2 * n + 1) ** 2
        assert b.n_modes == 1 + ((2 * n + 1) ** 2 - 1) // 2
        assert tuple(b.modes[0]) == (0, 0)
        # closed under k -> -k after folding
        for k in b.lattice():
            i, cs, ss = b.mode_id(k)
            j, _, _ = b.mode_id((-k[0], -k[1]))
            assert i == j


def test_fold_signs_match_pointwise():
    # c_{-k} = -c_k and s_{-k} = +s_k, checked against direct evaluation
    for k in [(1, 0), (0, 2), (2, -1), (1, 3)]:
        mk = (-k[0], -k[1])
        for t in [(0.3, 1.1), (2.0, 5.1)]:
            np.testing.assert_allclose(
                eval_mode(BasisMode("c", mk), t), -eval_mode(BasisMode("c", k), t), atol=1e-15
            )
            np.testing.assert_allclose(
                eval_mode(BasisMode("s", mk), t), eval_mode(BasisMode("s", k), t), atol=1e-15
            )


def test_eval_mode_examples():
    np.testing.assert_allclose(eval_mode(BasisMode("c", (0, 0)), (1.0, 2.0)), [1.0, 0.0])
    np.testing.assert_allclose(eval_mode(BasisMode("s", (1, 0)), (0.0, 0.0)), [0.0, 0.0])
    # cos(pi/2) kills the (1,1) mode at theta = (pi/2, 0)
    v = eval_mode(BasisMode("c", (1, 1)), (np.pi / 2, 0.0))
    assert np.abs(v).max() <= 1e-12


def test_eval_mode_against_high_precision_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        kind = rng.choice(["c", "s"])
        k = (int(rng.integers(-4, 5)), int(rng.integers(-4, 5)))
        t1, t2 = rng.uniform(0, 2 * PI, size=2)
        got = eval_mode(BasisMode(kind, k), (t1, t2))
        ref = oracles.eval_mode_mp(BasisMode(kind, k), t1, t2)
        assert abs(got[0] - float(ref[0])) < 1e-13
        assert abs(got[1] - float(ref[1])) < 1e-13


def test_synthesize_trivial_cases():
    b = get_basis(2)
    z = synthesize(SpectralField.zero(b), 8)
    assert np.all(z.values == 0.0)
    const = synthesize(SpectralField.from_modes(b, [(BasisMode("c", (0, 0)), 3.0)]), 8)
    np.testing.assert_allclose(const.values[..., 0], 3.0)
    np.testing.assert_allclose(const.values[..., 1], 0.0)


def test_synthesize_matches_pointwise_eval():
    b = get_basis(1)
    f = SpectralField.from_modes(b, [(BasisMode("c", (1, 0)), 1.0)])
    g = synthesize(f, 8)
    t = np.arange(8) * 2 * PI / 8
    for a in range(8):
        for c in range(8):
            np.testing.assert_allclose(
                g.values[a, c], eval_mode(BasisMode("c", (1, 0)), (t[a], t[c])), atol=1e-14
            )


def test_synthesize_resolution_guard():
    b = get_basis(4)
    with pytest.raises(ResolutionError):
        synthesize(SpectralField.zero(b), 8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    b = get_basis(4)
    f = random_field(b, rng, include_mean=True)
    g = synthesize(f, 16)
    f2 = analyze(g, b)
    scale = np.abs(f.coeffs).max()
    assert np.abs(f2.coeffs - f.coeffs).max() <= 1e-12 * scale


def test_analyze_discards_gradient_part():
    # (cos theta1, 0) is a pure gradient: its projection vanishes and the
    # pointwise residual is the whole field.
    b = get_basis(3)
    m = 16
    T1, _ = GridField.nodes(m)
    g = GridField(np.stack([np.cos(T1), np.zeros_like(T1)], axis=-1))
    p = analyze(g, b)
    assert np.abs(p.coeffs).max() <= 1e-13
    residual = g.values - synthesize(p, m).values
    assert np.abs(residual).max() == pytest.approx(1.0, abs=1e-12)
    # quadrature cross-check of the projection, mode by mode
    ref = oracles.project_grid(g.values, b)
    assert np.abs(ref.coeffs).max() <= 1e-13


def test_analyze_mixed_field_against_quadrature_oracle():
    b = get_basis(2)
    m = 16
    T1, T2 = GridField.nodes(m)
    vals = np.stack(
        [np.cos(T1) + 0.5 * np.sin(T2) * np.cos(T1), -0.3 * np.cos(T2) + 0.1], axis=-1
    )
    got = analyze(GridField(vals), b)
    ref = oracles.project_grid(vals, b)
    np.testing.assert_allclose(got.coeffs, ref.coeffs, atol=1e-12)


def test_gradient_modewise():
    b = get_basis(2)
    f = SpectralField.from_modes(b, [(BasisMode("c", (1, 0)), 1.0)])
    d1, d2 = gradient(f)
    assert d1.coefficient(BasisMode("s", (1, 0))) == pytest.approx(-1.0)
    assert np.abs(d2.coeffs).max() == 0.0
    z1, z2 = gradient(SpectralField.from_modes(b, [(BasisMode("c", (0, 0)), 2.0)]))
    assert np.abs(z1.coeffs).max() == 0.0 and np.abs(z2.coeffs).max() == 0.0


def test_gradient_against_symbolic_shift():
    # d_l maps (a cos + b sin) to (k_l b cos - k_l a sin) for every mode
    rng = np.random.default_rng(3)
    b = get_basis(3)
    f = random_field(b, rng, include_mean=True)
    d1, d2 = gradient(f)
    for i, (k1, k2) in enumerate(b.modes):
        a, s = f.coeffs[:, i]
        np.testing.assert_allclose(d1.coeffs[:, i], [k1 * s, -k1 * a], atol=1e-15)
        np.testing.assert_allclose(d2.coeffs[:, i], [k2 * s, -k2 * a], atol=1e-15)


def test_leray_idempotent_and_selfadjoint():
    rng = np.random.default_rng(5)
    b = get_basis(3)
    f = random_field(b, rng)
    p = leray_project(f, b)
    np.testing.assert_allclose(p.coeffs, f.coeffs, atol=1e-12)

    m = 24
    ga = rng.standard_normal((m, m, 2))
    gb = rng.standard_normal((m, m, 2))
    pa = synthesize(leray_project(GridField(ga), b), m).values
    pb = synthesize(leray_project(GridField(gb), b), m).values
    lhs = oracles.quad_inner(pa, gb)
    rhs = oracles.quad_inner(ga, pb)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    # <P g, grad phi> = 0 for a gradient test function
    T1, T2 = GridField.nodes(m)
    grad_phi = np.stack([-np.sin(T1) * 2.0, np.zeros_like(T1)], axis=-1)
    assert abs(oracles.quad_inner(pa, grad_phi)) <= 1e-10 * np.abs(pa).max()


def test_norm_examples():
    b = get_basis(1)
    f = SpectralField.from_modes(b, [(BasisMode("c", (1, 0)), 1.0)])
    assert l2_inner(f, f) == pytest.approx(2 * PI**2, rel=1e-14)
    assert h1_inner(f, f) == pytest.approx(2 * PI**2, rel=1e-14)
    g = SpectralField.from_modes(b, [(BasisMode("c", (0, 0)), 3.0)])
    assert l2_inner(g, g) == pytest.approx(36 * PI**2, rel=1e-14)
    assert h1_inner(g, g) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parseval_and_divergence(seed):
    rng = np.random.default_rng(seed)
    b = get_basis(4)
    f = random_field(b, rng, include_mean=True)
    g = synthesize(f, 64)
    quad = oracles.quad_inner(g.values, g.values)
    assert quad == pytest.approx(f.l2_norm() ** 2, rel=1e-10)
    assert divergence_max(f) <= 1e-10


def test_laplacian_eigenvalue_property():
    # -laplace e_k = |k|^2 e_k checked spectrally via two gradients
    b = get_basis(3)
    for k in [(1, 0), (2, 2), (0, 3), (3, -1)]:
        for kind in "cs":
            f = SpectralField.from_modes(b, [(BasisMode(kind, k), 1.0)])
            d1, d2 = gradient(f)
            d11, _ = gradient(d1)
            _, d22 = gradient(d2)
            lap = d11.coeffs + d22.coeffs
            np.testing.assert_allclose(-lap, (k[0] ** 2 + k[1] ** 2) * f.coeffs, atol=1e-13)


def test_h1_seminorm_equals_gradient_l2():
    rng = np.random.default_rng(11)
    b = get_basis(4)
    f = random_field(b, rng, include_mean=True)
    d1, d2 = gradient(f)
    assert h1_inner(f, f) == pytest.approx(
        l2_inner(d1, d1) + l2_inner(d2, d2), rel=1e-12
    )
