import numpy as np
import pytest

from torusflow.basis import BasisMode, SpectralField, get_basis, random_field
from torusflow.noise import (
    ConfigurationError,
    NoiseModel,
    WienerIncrement,
    path_stream,
    sample_increments,
)
from torusflow.integrate import (
    MidpointConvergenceError,
    SimConfig,
    run_ensemble,
    run_path,
    step,
)

SI = NoiseModel.space_independent()


def test_zero_state_stays_zero():
    b = get_basis(3)
    z = SpectralField.zero(b)
    dw = sample_increments(SI, 1e-3, path_stream(0, 0))
    for scheme in ("ito-em", "strat-heun", "strat-midpoint"):
        out = step(scheme, z, dw, SI)
        assert np.all(out.coeffs == 0.0)


def test_em_one_step_closed_form():
    # drift decays the cosine mode by (1 - dt/2); transport adds -dB1 * sine
    b = get_basis(2)
    f = SpectralField.from_modes(b, [(BasisMode("c", (1, 0)), 1.0)])
    dt = 1e-3
    dw = WienerIncrement(dt, np.array([[0.02, -0.05]]))
    out = step("ito-em", f, dw, SI)
    assert out.coefficient(BasisMode("c", (1, 0))) == pytest.approx(1 - dt / 2, rel=1e-14)
    assert out.coefficient(BasisMode("s", (1, 0))) == pytest.approx(-0.02, rel=1e-14)
    rest = out.coeffs.copy()
    i, _, _ = b.mode_id((1, 0))
    rest[:, i] = 0.0
    assert np.abs(rest).max() <= 1e-15


def test_midpoint_conserves_energy_per_step():
    rng = np.random.default_rng(4)
    for model in (SI, NoiseModel.q_wiener(3, beta=4.0)):
        f = random_field(get_basis(3), rng)
        dw = sample_increments(model, 1e-3, path_stream(1, 0))
        out = step("strat-midpoint", f, dw, model)
        rel = abs(out.l2_norm() ** 2 - f.l2_norm() ** 2) / f.l2_norm() ** 2
        assert rel <= 1e-10


def test_midpoint_nonconvergence_reports_residual():
    # a huge step makes the fixed point repel; the error carries the residual
    rng = np.random.default_rng(9)
    f = random_field(get_basis(3), rng)
    dw = WienerIncrement(4.0, np.array([[3.0, -2.0]]))
    with pytest.raises(MidpointConvergenceError) as exc:
        step("strat-midpoint", f, dw, SI, midpoint_max_iter=5)
    assert exc.value.residual > 0
    assert exc.value.iterations == 5


def test_run_path_single_step_and_times():
    cfg = SimConfig(
        n=2, dt=1e-2, t_final=1e-2, scheme="strat-heun", noise=SI, paths=1, seed=3
    )
    r = run_path(cfg, 0)
    assert len(r.step_times) == 2
    assert r.times[0] == 0.0 and r.times[-1] == pytest.approx(1e-2)
    assert len(r.states) == 2


def test_run_path_deterministic():
    cfg = SimConfig(
        n=3, dt=1e-3, t_final=0.02, scheme="strat-midpoint", noise=SI, paths=1, seed=11
    )
    a = run_path(cfg, 5)
    b = run_path(cfg, 5)
    assert np.array_equal(a.l2_sq, b.l2_sq)
    assert np.array_equal(a.states[-1].coeffs, b.states[-1].coeffs)


def test_no_noise_steady_mode_constant_path():
    # empty mode set = zero noise; a single mode is a steady flow of the
    # inviscid form, so the Stratonovich path is constant
    none = NoiseModel.finite_modes([])
    cfg = SimConfig(
        n=1,
        dt=1e-2,
        t_final=0.2,
        scheme="strat-midpoint",
        noise=none,
        paths=1,
        seed=0,
        initial="mode:1,0",
    )
    r = run_path(cfg, 0)
    assert np.abs(r.l2_sq - r.l2_sq[0]).max() <= 1e-12 * r.l2_sq[0]
    np.testing.assert_allclose(r.states[-1].coeffs, r.states[0].coeffs, atol=1e-12)


def test_ensemble_order_invariance_and_degenerate_hook():
    cfg = SimConfig(
        n=2, dt=1e-3, t_final=0.01, scheme="ito-em", noise=SI, paths=4, seed=2
    )
    e1 = run_ensemble(cfg, path_ids=[0, 1, 2])
    e2 = run_ensemble(cfg, path_ids=[2, 0, 1])
    assert np.array_equal(e1.l2_sq[0], e2.l2_sq[1])
    assert np.array_equal(e1.l2_sq[2], e2.l2_sq[0])
    solo = run_path(cfg, 1)
    assert np.array_equal(e1.l2_sq[1], solo.l2_sq)

    dup = run_ensemble(cfg, path_ids=[3, 3])
    assert np.array_equal(dup.l2_sq[0], dup.l2_sq[1])
    _, se = dup.l2_stats()
    assert np.all(se == 0.0)


def test_strong_accuracy_against_rotation_oracle():
    # For space-independent noise and a single k = (1, 0) mode the
    # Stratonovich solution is an exact rotation by the Brownian angle:
    # u(t) = cos(B1) c - sin(B1) s.  The midpoint map is the Cayley
    # transform, with per-step angle defect dB^3 / 12, so the terminal state
    # must match the rotation to a few times sqrt(15 dt^3 T) / 12.
    dt, t_final, seed, pid = 1e-3, 0.5, 21, 2
    cfg = SimConfig(
        n=1,
        dt=dt,
        t_final=t_final,
        scheme="strat-midpoint",
        noise=SI,
        paths=1,
        seed=seed,
        initial="mode:1,0",
    )
    r = run_path(cfg, pid)
    steps = cfg.n_steps
    draws = path_stream(seed, pid).standard_normal((steps, 1, 2)) * np.sqrt(dt)
    angle = draws[:, 0, 0].sum()
    amp = cfg.initial_field().coefficient(BasisMode("c", (1, 0)))
    expect_c = amp * np.cos(angle)
    expect_s = -amp * np.sin(angle)
    got_c = r.states[-1].coefficient(BasisMode("c", (1, 0)))
    got_s = r.states[-1].coefficient(BasisMode("s", (1, 0)))
    tol = 20 * np.sqrt(15 * dt**3 * steps) / 12 + 1e-9
    assert abs(got_c - expect_c) <= tol
    assert abs(got_s - expect_s) <= tol


def test_heun_positive_energy_drift_scaling():
    # Heun's per-step energy gain is exactly (1/4)||F(u) - F(pred)||^2, so the
    # pathwise drift is positive and O(dt) over a fixed horizon
    drifts = []
    for dt in (4e-3, 2e-3):
        cfg = SimConfig(
            n=2,
            dt=dt,
            t_final=0.4,
            scheme="strat-heun",
            noise=SI,
            paths=8,
            seed=5,
            initial="mode:1,0",
        )
        e = run_ensemble(cfg)
        d = (e.l2_sq[:, -1] - e.l2_sq[:, 0]) / e.l2_sq[:, 0]
        assert np.all(d >= -1e-15)
        drifts.append(d.mean())
    assert drifts[0] > drifts[1]  # shrinks with dt


def test_config_validation_lists_all_violations():
    cfg = SimConfig(n=0, dt=-1.0, scheme="nope", paths=0, noise=SI)
    msgs = cfg.violations()
    joined = " | ".join(msgs)
    for frag in ("truncation", "dt", "scheme", "paths"):
        assert frag in joined
    with pytest.raises(ConfigurationError):
        cfg.validate()


def test_config_rejects_partial_steps():
    cfg = SimConfig(n=2, dt=3e-3, t_final=1.0, noise=SI)
    assert any("whole number" in m for m in cfg.violations())


def test_initial_presets():
    cfg = SimConfig(n=3, noise=SI, initial="pair", seed=1)
    f = cfg.initial_field()
    assert f.l2_norm() == pytest.approx(1.0, rel=1e-12)
    cfg2 = SimConfig(n=3, noise=SI, initial="random:4", seed=1)
    g = cfg2.initial_field()
    assert g.l2_norm() == pytest.approx(1.0, rel=1e-12)
    assert not np.array_equal(f.coeffs, g.coeffs)
    # same seed reproduces the draw
    g2 = SimConfig(n=3, noise=SI, initial="random:4", seed=1).initial_field()
    assert np.array_equal(g.coeffs, g2.coeffs)
    explicit = SimConfig(
        n=3, noise=SI, initial=((BasisMode("c", (1, 0)), 2.0),)
    ).initial_field()
    assert explicit.coefficient(BasisMode("c", (1, 0))) == 2.0


def test_em_step_matches_manual_assembly_qwiener():
    # one EM step == state + dt * ito_drift + sum over noise pairs of
    # coefficient * dB * transport, tying sampler, assembly and kernel together
    from torusflow.dynamics import ito_drift, transport_apply

    model = NoiseModel.q_wiener(2, beta=4.0)
    b = get_basis(3)
    rng = np.random.default_rng(12)
    f = random_field(b, rng)
    dt = 1e-3
    dw = sample_increments(model, dt, path_stream(2, 4))
    got = step("ito-em", f, dw, model)
    manual = f + dt * ito_drift(f)
    for coeff, mode, (j, comp) in model.transport_pairs():
        amp = coeff * dw.values[j, comp]
        if amp != 0.0:
            manual = manual + amp * transport_apply(f, mode, out_basis=b)
    np.testing.assert_allclose(got.coeffs, manual.coeffs, atol=1e-13)


def test_qwiener_em_runs_and_is_deterministic():
    model = NoiseModel.q_wiener(2, beta=4.0)
    cfg = SimConfig(
        n=2, dt=1e-3, t_final=0.02, scheme="ito-em", noise=model, paths=3, seed=8
    )
    e1 = run_ensemble(cfg)
    e2 = run_ensemble(cfg)
    assert np.array_equal(e1.l2_sq, e2.l2_sq)
    assert np.all(np.isfinite(e1.h1_sq))
