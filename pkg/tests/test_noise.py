import mpmath as mp
import numpy as np
import pytest

from torusflow.basis import SpectralField
from torusflow.noise import (
    ConfigurationError,
    NoiseModel,
    normalizer_cw,
    normalizer_cw_prime,
    path_stream,
    q_coeff,
    sample_increments,
    sum_ladder,
)


def test_q_coeff_values():
    assert q_coeff((0, 0), 4.0) == 1.0
    assert q_coeff((0, 0), 3.5) == 1.0
    assert q_coeff((1, 0), 4.0) == 1.0
    assert q_coeff((1, 1), 4.0) == pytest.approx(0.125, rel=1e-15)


def test_q_coeff_rejects_small_beta():
    with pytest.raises(ConfigurationError):
        q_coeff((1, 0), 3.0)
    with pytest.raises(ConfigurationError):
        q_coeff((1, 0), 2.5)


def test_cw_finite_enumeration():
    # cutoff 1: the eight nonzero points contribute 2*1 + 4/16 for beta=4
    assert normalizer_cw(4.0, cutoff=1).value == pytest.approx(3.25, rel=1e-15)
    # c'_W at cutoff 1: (+-1, 0) give 1 each, (0, +-1) give 0, (+-1, +-1) give 1/8
    assert normalizer_cw_prime(4.0, cutoff=1).value == pytest.approx(2.5, rel=1e-15)


def test_cw_component_symmetry_exact():
    for cutoff in (1, 3, 17, 128):
        a = normalizer_cw(4.0, cutoff=cutoff, component=1).value
        b = normalizer_cw(4.0, cutoff=cutoff, component=2).value
        assert a == b
        ap = normalizer_cw_prime(4.0, cutoff=cutoff, component=1).value
        bp = normalizer_cw_prime(4.0, cutoff=cutoff, component=2).value
        assert ap == bp


def test_cw_against_exact_lattice_constants():
    # For beta = 4 the sums reduce (by the component symmetry) to
    # (1/2) sum |k|^-6 and (1/2) sum |k|^-4, whose values are classical:
    # sum_{k != 0} (k1^2+k2^2)^-s = 4 zeta(s) beta_dirichlet(s).
    cw = normalizer_cw(4.0)
    cwp = normalizer_cw_prime(4.0)
    cw_exact = float(1 + 2 * mp.zeta(3) * (mp.pi**3 / 32))
    cwp_exact = float(2 * mp.zeta(2) * mp.catalan)
    assert cw.value <= cw_exact <= cw.value + cw.tail_bound
    assert cwp.value <= cwp_exact <= cwp.value + cwp.tail_bound
    assert cw.value == pytest.approx(cw_exact, abs=1e-10)
    assert cwp.value == pytest.approx(cwp_exact, abs=1e-7)


def test_default_interval_widths():
    assert normalizer_cw(4.0).width < 1e-8
    assert normalizer_cw_prime(4.0).width < 1e-8


def test_doubling_stability():
    lad = sum_ladder("cw", 4.0, 2048)
    assert abs(lad[-1].value - lad[-2].value) < 1e-8
    ladp = sum_ladder("cw_prime", 4.0, 32768)
    assert abs(ladp[-1].value - ladp[-2].value) < 1e-8
    # partial sums increase monotonically
    vals = [s.value for s in ladp]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_trace_class_stability():
    lad = sum_ladder("trace", 4.0, 1024)
    assert abs(lad[-1].value - lad[-2].value) < 1e-8


def test_ratio_finite():
    cw = normalizer_cw(4.0).value
    cwp = normalizer_cw_prime(4.0).value
    assert 0 < cwp / cw < np.inf


def test_space_independent_pairs():
    m = NoiseModel.space_independent()
    pairs = m.transport_pairs()
    assert [(c, str(md)) for c, md, _ in pairs] == [
        (1.0, "c(0,0)"),
        (1.0, "s(0,0)"),
    ]
    assert m.is_constant_advection


def test_qwiener_weights():
    m0 = NoiseModel.q_wiener(0, beta=4.0)
    pairs = m0.transport_pairs()
    assert len(pairs) == 2
    assert pairs[0][0] == pytest.approx(1.0 / np.sqrt(m0.cw), rel=1e-14)

    m1 = NoiseModel.q_wiener(1, beta=4.0)
    assert m1.n_components == 9
    by_mode = {str(md): c for c, md, _ in m1.transport_pairs()}
    assert by_mode["c(1,1)"] == pytest.approx(np.sqrt(0.125) / np.sqrt(m1.cw), rel=1e-14)
    # both members of a +-k pair are enumerated with the same weight
    assert by_mode["c(-1,-1)"] == by_mode["c(1,1)"]


def test_model_rejects_bad_beta():
    with pytest.raises(ConfigurationError):
        NoiseModel.q_wiener(2, beta=3.0)


def test_increment_assembly_matches_modewise_sum():
    m = NoiseModel.q_wiener(2, beta=4.0)
    incr = sample_increments(m, 1e-2, path_stream(3, 1))
    assembled = m.increment_field(incr)
    ref = SpectralField.zero(m.field_basis)
    for c, md, (j, comp) in m.transport_pairs():
        ref = ref + (c * incr.values[j, comp]) * SpectralField.from_modes(
            m.field_basis, [(md, 1.0)]
        )
    np.testing.assert_allclose(assembled.coeffs, ref.coeffs, atol=1e-15)
    assert assembled.divergence_max() < 1e-12


def test_zero_dt_increment():
    m = NoiseModel.space_independent()
    incr = sample_increments(m, 0.0, path_stream(0, 0))
    assert np.all(incr.values == 0.0)


def test_increment_moments():
    # mean within 4 sigma / sqrt(N), variance within 5% (approx 3 sigma bound)
    m = NoiseModel.space_independent()
    dt = 1e-2
    n = 100_000
    vals = sample_increments(m, dt, path_stream(0, 7), steps=n)
    flat = vals.reshape(-1)
    assert abs(flat.mean()) <= 4 * np.sqrt(dt) / np.sqrt(flat.size)
    assert abs(flat.var() - dt) <= 0.05 * dt


def test_stream_independence_and_determinism():
    m = NoiseModel.space_independent()
    n = 50_000
    a = sample_increments(m, 1.0, path_stream(9, 0), steps=n).reshape(-1)
    b = sample_increments(m, 1.0, path_stream(9, 1), steps=n).reshape(-1)
    a2 = sample_increments(m, 1.0, path_stream(9, 0), steps=n).reshape(-1)
    assert np.array_equal(a, a2)
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) <= 4.0 / np.sqrt(a.size)


def test_brownian_quadratic_variation():
    # space-independent regime behaves like a plain 2D Brownian motion
    m = NoiseModel.space_independent()
    dt = 1e-3
    steps = 1000
    qv = []
    for pid in range(32):
        vals = sample_increments(m, dt, path_stream(11, pid), steps=steps)
        qv.append(np.sum(vals[:, 0, 0] ** 2))
    qv = np.array(qv)
    t = steps * dt
    # QV of a path is sum of squares: mean t, sd sqrt(2 dt t)
    assert abs(qv.mean() - t) <= 4 * np.sqrt(2 * dt * t / len(qv))


def test_discarded_trace_decreases_with_cutoff():
    t2 = NoiseModel.q_wiener(2, beta=4.0).discarded_trace()
    t4 = NoiseModel.q_wiener(4, beta=4.0).discarded_trace()
    assert t4 < t2
    assert t4 >= 0


def test_empty_mode_set_is_zero_noise():
    m = NoiseModel.finite_modes([])
    assert m.n_components == 0
    out = m.increments_to_field(np.zeros((0, 2)))
    assert out.shape == (2, 1)
    assert np.all(out == 0.0)
