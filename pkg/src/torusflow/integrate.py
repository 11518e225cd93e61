"""Time stepping for the truncated stochastic system and the ensemble runner.

Scheme menu
-----------
``ito-em``
    Euler-Maruyama on the Ito form: drift ``-(1/2) A u - B(u)``, transport
    increments applied explicitly.
``strat-heun``
    Two-stage predictor-corrector (trapezoidal in both drift and noise) on
    the Stratonovich form, whose drift is the inviscid ``-B(u)``.
``strat-midpoint``
    Implicit midpoint on the Stratonovich form, solved to a fixed-point
    residual of ``midpoint_tol``.  Drift and transport are both skew in the
    L2 pairing, so this scheme conserves ``||u||_0^2`` to solver tolerance
    per step.  For spatially constant noise the linear noise part of the
    midpoint map is inverted exactly per mode (2x2 blocks), which leaves only
    the ``dt``-small quadratic term to the Picard iteration.

Paths own independent counter-based streams keyed by ``(seed, path_id)``;
increments are drawn in fixed blocks of ``BLOCK_STEPS`` steps so a path's
noise is identical whether it runs alone or inside any batch, in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .basis import (
    Basis,
    BasisMode,
    SpectralField,
    batch_h1_sq,
    batch_l2_sq,
    derivative_spectra,
    gather_coeffs,
    get_basis,
    grid_to_halfspectrum,
    halfspectrum_to_grid,
    place_halfspectrum,
    random_field,
)
from .dynamics import ITO_VISCOSITY, dealias_resolution
from .noise import (
    ConfigurationError,
    NoiseModel,
    WienerIncrement,
    initial_condition_stream,
    path_stream,
)

SCHEMES = ("ito-em", "strat-heun", "strat-midpoint")

#: increments are drawn per path in blocks of this many steps
BLOCK_STEPS = 64


class MidpointConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int, step_index: int | None = None):
        self.residual = residual
        self.iterations = iterations
        self.step_index = step_index
        at = f" at step {step_index}" if step_index is not None else ""
        super().__init__(
            f"midpoint iteration did not reach tolerance{at}: "
            f"residual {residual:.3e} after {iterations} iterations"
        )


@dataclass(frozen=True)
class SimConfig:
    """Resolved simulation parameters; immutable once validated."""

    n: int = 8
    dt: float = 1e-3
    t_final: float = 1.0
    scheme: str = "strat-midpoint"
    noise: NoiseModel = field(default_factory=NoiseModel.space_independent)
    paths: int = 256
    seed: int = 0
    initial: str | tuple = "random:3"
    save_every: int = 10
    midpoint_tol: float = 1e-12
    midpoint_max_iter: int = 50

    def violations(self) -> list[str]:
        bad = []
        if self.n < 1:
            bad.append(f"truncation n must be >= 1 (got {self.n})")
        if not self.dt > 0:
            bad.append(f"dt must be positive (got {self.dt})")
        if self.dt > 0 and self.t_final < self.dt:
            bad.append(f"horizon T={self.t_final} must be at least one step dt={self.dt}")
        if self.dt > 0 and self.t_final >= self.dt:
            steps = self.t_final / self.dt
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                bad.append(
                    f"horizon T={self.t_final} is not a whole number of steps of dt={self.dt}"
                )
        if self.scheme not in SCHEMES:
            bad.append(f"scheme must be one of {SCHEMES} (got {self.scheme!r})")
        if self.paths < 1:
            bad.append(f"paths must be >= 1 (got {self.paths})")
        if self.save_every < 1:
            bad.append(f"save_every must be >= 1 (got {self.save_every})")
        if not 0 < self.midpoint_tol < 1e-6:
            bad.append("midpoint_tol must lie in (0, 1e-6)")
        try:
            self.initial_field()
        except Exception as e:  # surface every constraint at once
            bad.append(f"initial condition: {e}")
        return bad

    def validate(self) -> "SimConfig":
        bad = self.violations()
        if bad:
            raise ConfigurationError("; ".join(bad))
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def basis(self) -> Basis:
        return get_basis(self.n)

    def initial_field(self) -> SpectralField:
        """Resolve the initial-condition preset to a concrete field.

        Named presets are normalized to unit L2 norm; explicit mode lists are
        used verbatim.  Random draws come from a dedicated stream keyed by the
        seed, independent of the path streams.
        """
        b = self.basis
        ic = self.initial
        if not isinstance(ic, str):
            return SpectralField.from_modes(b, ic)
        if ic.startswith("mode:"):
            k = _parse_wavevector(ic[5:])
            f = SpectralField.from_modes(b, [(BasisMode("c", k), 1.0)])
            return f * (1.0 / f.l2_norm())
        if ic == "pair":
            f = SpectralField.from_modes(
                b, [(BasisMode("c", (1, 0)), 1.0), (BasisMode("c", (1, 1)), 1.0)]
            )
            return f * (1.0 / f.l2_norm())
        if ic.startswith("random"):
            decay = 3.0
            if ":" in ic:
                decay = float(ic.split(":", 1)[1])
            return random_field(b, initial_condition_stream(self.seed), decay=decay)
        raise ConfigurationError(
            f"unknown initial condition {ic!r} (expected mode:<k1>,<k2> | pair | random[:<decay>])"
        )


def _parse_wavevector(s: str) -> tuple[int, int]:
    parts = s.replace("(", "").replace(")", "").split(",")
    if len(parts) != 2:
        raise ConfigurationError(f"cannot parse wavevector {s!r}")
    return int(parts[0]), int(parts[1])


# ---------------------------------------------------------------------------
# step kernel
# ---------------------------------------------------------------------------


class StepKernel:
    """Batched single-step integrator bound to one (basis, noise, scheme)."""

    def __init__(
        self,
        basis: Basis,
        noise: NoiseModel,
        scheme: str,
        dt: float,
        midpoint_tol: float = 1e-12,
        midpoint_max_iter: int = 50,
    ):
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {scheme!r}")
        self.basis = basis
        self.noise = noise
        self.scheme = scheme
        self.dt = float(dt)
        self.tol = float(midpoint_tol)
        self.max_iter = int(midpoint_max_iter)
        self.m = dealias_resolution(basis.n, max(noise.field_basis.n, basis.n), basis.n)
        self.k1 = basis.modes[:, 0].astype(np.float64)
        self.k2 = basis.modes[:, 1].astype(np.float64)
        self.ksq = basis.ksq
        self.constant_noise = noise.is_constant_advection

    # -- building blocks ---------------------------------------------------

    def _convection(self, u: np.ndarray) -> np.ndarray:
        """Galerkin ``(u . grad) u`` for batched coefficients."""
        spec = place_halfspectrum(self.basis, u, self.m)
        d1, d2 = derivative_spectra(self.basis, spec, self.m)
        g = halfspectrum_to_grid(np.stack([spec, d1, d2]), self.m)
        conv = g[0][..., 0:1, :, :] * g[1] + g[0][..., 1:2, :, :] * g[2]
        return gather_coeffs(self.basis, grid_to_halfspectrum(conv), self.m)

    def _convection_and_transport(
        self, u: np.ndarray, w_grid: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Fused ``(u . grad) u`` and ``(w . grad) u`` sharing one transform pass."""
        spec = place_halfspectrum(self.basis, u, self.m)
        d1, d2 = derivative_spectra(self.basis, spec, self.m)
        g = halfspectrum_to_grid(np.stack([spec, d1, d2]), self.m)
        conv = g[0][..., 0:1, :, :] * g[1] + g[0][..., 1:2, :, :] * g[2]
        transp = w_grid[..., 0:1, :, :] * g[1] + w_grid[..., 1:2, :, :] * g[2]
        out = gather_coeffs(self.basis, grid_to_halfspectrum(np.stack([conv, transp])), self.m)
        return out[0], out[1]

    def _noise_grid(self, w_coeffs: np.ndarray) -> np.ndarray:
        spec = place_halfspectrum(self.noise.field_basis, w_coeffs, self.m)
        return halfspectrum_to_grid(spec, self.m)

    def _kappa(self, w_coeffs: np.ndarray) -> np.ndarray:
        """Per-mode symbol of constant-vector advection: ``kappa = w . k``."""
        w1 = w_coeffs[..., 0, 0:1]
        w2 = w_coeffs[..., 1, 0:1]
        return w1 * self.k1 + w2 * self.k2

    @staticmethod
    def _apply_kappa(kappa: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Exact transport by a constant advector: ``(a, b) -> (kappa b, -kappa a)``."""
        return np.stack([kappa * u[..., 1, :], -kappa * u[..., 0, :]], axis=-2)

    def transport(self, u: np.ndarray, w_coeffs: np.ndarray) -> np.ndarray:
        if self.constant_noise:
            return self._apply_kappa(self._kappa(w_coeffs), u)
        _, tr = self._convection_and_transport(u, self._noise_grid(w_coeffs))
        return tr

    # -- schemes -------------------------------------------------------------

    def step(self, u: np.ndarray, w_coeffs: np.ndarray) -> np.ndarray:
        """Advance batched coefficients ``(..., 2, N)`` by one step.

        ``w_coeffs`` is the assembled Wiener-increment field over the noise
        basis (leading axes matching ``u``).
        """
        if self.scheme == "ito-em":
            return self._step_em(u, w_coeffs)
        if self.scheme == "strat-heun":
            return self._step_heun(u, w_coeffs)
        return self._step_midpoint(u, w_coeffs)

    def _step_em(self, u, w):
        if self.constant_noise:
            conv = self._convection(u)
            tr = self._apply_kappa(self._kappa(w), u)
        else:
            conv, tr = self._convection_and_transport(u, self._noise_grid(w))
        drift = -ITO_VISCOSITY * self.ksq * u - conv
        return u + self.dt * drift + tr

    def _step_heun(self, u, w):
        if self.constant_noise:
            kappa = self._kappa(w)
            f0 = -self._convection(u)
            incr0 = self.dt * f0 + self._apply_kappa(kappa, u)
            pred = u + incr0
            f1 = -self._convection(pred)
            incr1 = self.dt * f1 + self._apply_kappa(kappa, pred)
        else:
            wg = self._noise_grid(w)
            conv0, tr0 = self._convection_and_transport(u, wg)
            incr0 = -self.dt * conv0 + tr0
            pred = u + incr0
            conv1, tr1 = self._convection_and_transport(pred, wg)
            incr1 = -self.dt * conv1 + tr1
        return u + 0.5 * (incr0 + incr1)

    def _step_midpoint(self, u, w):
        if self.constant_noise:
            return self._step_midpoint_constant(u, w)
        return self._step_midpoint_picard(u, w)

    def _step_midpoint_constant(self, u, w):
        # solve v = u + dt f(m) + T(m), m = (u+v)/2, with the linear noise
        # part T inverted exactly per mode
        kappa = self._kappa(w)
        half_k = 0.5 * kappa
        denom = 1.0 + half_k * half_k
        base = u + 0.5 * self._apply_kappa(kappa, u)
        v = u.copy()
        lead = u.shape[:-2]
        active = np.ones(lead, dtype=bool)
        for iteration in range(self.max_iter):
            idx = np.nonzero(active)
            m_act = 0.5 * (u[idx] + v[idx])
            x = base[idx] - self.dt * self._convection(m_act)
            hk = half_k[idx]
            va = (x[..., 0, :] + hk * x[..., 1, :]) / denom[idx]
            vb = x[..., 1, :] - hk * va
            v_new = np.stack([va, vb], axis=-2)
            res = np.abs(v_new - v[idx]).max(axis=(-2, -1))
            v[idx] = v_new
            still = res > self.tol
            if not still.any():
                return v
            active[idx] = still
        raise MidpointConvergenceError(float(res.max()), self.max_iter)

    def _step_midpoint_picard(self, u, w):
        w_grid = self._noise_grid(w)
        v = u.copy()
        lead = u.shape[:-2]
        active = np.ones(lead, dtype=bool)
        for iteration in range(self.max_iter):
            idx = np.nonzero(active)
            m_act = 0.5 * (u[idx] + v[idx])
            conv, tr = self._convection_and_transport(m_act, w_grid[idx])
            v_new = u[idx] - self.dt * conv + tr
            res = np.abs(v_new - v[idx]).max(axis=(-2, -1))
            v[idx] = v_new
            still = res > self.tol
            if not still.any():
                return v
            active[idx] = still
        raise MidpointConvergenceError(float(res.max()), self.max_iter)


def step(
    scheme: str,
    state: SpectralField,
    dw: WienerIncrement,
    model: NoiseModel,
    midpoint_tol: float = 1e-12,
    midpoint_max_iter: int = 50,
) -> SpectralField:
    """One step of the chosen scheme from a single state (convenience wrapper)."""
    kernel = StepKernel(
        state.basis, model, scheme, dw.dt, midpoint_tol, midpoint_max_iter
    )
    w = model.increments_to_field(dw.values[None, ...])
    out = kernel.step(state.coeffs[None, ...], w)
    return SpectralField(state.basis, out[0])


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


class StepObserver(Protocol):
    """Hooks receiving the batched state at t = 0 and after every step."""

    def start(self, t: float, u: np.ndarray) -> None: ...

    def after_step(self, t: float, u: np.ndarray) -> None: ...


@dataclass
class PathResult:
    """One path: decimated states plus the per-step energy ledger."""

    config: SimConfig
    path_id: int
    times: np.ndarray          # saved times (decimated)
    states: list[SpectralField]
    step_times: np.ndarray     # full step grid
    l2_sq: np.ndarray          # per-step ||u||_0^2
    h1_sq: np.ndarray          # per-step ||u||_1^2


@dataclass
class EnsembleDiagnostics:
    """Per-step energy series over all paths, plus observer products."""

    config: SimConfig
    path_ids: tuple[int, ...]
    times: np.ndarray     # (S,) full step grid
    l2_sq: np.ndarray     # (P, S)
    h1_sq: np.ndarray     # (P, S)
    observers: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return len(self.path_ids)

    def mean_se(self, series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sample mean and standard error over the path axis."""
        p = series.shape[0]
        mean = series.mean(axis=0)
        if p < 2:
            return mean, np.zeros_like(mean)
        se = series.std(axis=0, ddof=1) / np.sqrt(p)
        return mean, se

    def l2_stats(self):
        return self.mean_se(self.l2_sq)

    def h1_stats(self):
        return self.mean_se(self.h1_sq)


def _saved_indices(n_steps: int, save_every: int) -> np.ndarray:
    idx = list(range(0, n_steps + 1, save_every))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.array(idx, dtype=np.int64)


def _run_batch(
    config: SimConfig,
    path_ids: Sequence[int],
    observers: Sequence[StepObserver] = (),
    keep_states_for: int | None = None,
):
    """Advance all requested paths in lockstep; the workhorse of both runners.

    Increment draws are per-path and blocked, so results are independent of
    the batch composition.  Returns per-step energies and, when
    ``keep_states_for`` names a position in ``path_ids``, that path's saved
    states.
    """
    config.validate()
    basis = config.basis
    noise = config.noise
    steps = config.n_steps
    p = len(path_ids)
    kernel = StepKernel(
        basis,
        noise,
        config.scheme,
        config.dt,
        config.midpoint_tol,
        config.midpoint_max_iter,
    )
    u0 = config.initial_field()
    u = np.broadcast_to(u0.coeffs, (p,) + u0.coeffs.shape).copy()

    l2 = np.empty((p, steps + 1))
    h1 = np.empty((p, steps + 1))
    l2[:, 0] = batch_l2_sq(basis, u)
    h1[:, 0] = batch_h1_sq(basis, u)

    saved = _saved_indices(steps, config.save_every)
    keep = keep_states_for is not None
    states: list[SpectralField] = []
    if keep and 0 in saved:
        states.append(SpectralField(basis, u[keep_states_for].copy()))

    for obs in observers:
        obs.start(0.0, u)

    gens = [path_stream(config.seed, pid) for pid in path_ids]
    k = noise.n_components
    block_rows = max(1, BLOCK_STEPS)
    s = 0
    while s < steps:
        block = min(block_rows, steps - s)
        draws = np.empty((p, block, k, 2))
        for j, g in enumerate(gens):
            draws[j] = g.standard_normal((block, k, 2))
        draws *= np.sqrt(config.dt)
        for b_i in range(block):
            w = noise.increments_to_field(draws[:, b_i])
            try:
                u = kernel.step(u, w)
            except MidpointConvergenceError as e:
                raise MidpointConvergenceError(e.residual, e.iterations, s + b_i) from None
            t = (s + b_i + 1) * config.dt
            l2[:, s + b_i + 1] = batch_l2_sq(basis, u)
            h1[:, s + b_i + 1] = batch_h1_sq(basis, u)
            for obs in observers:
                obs.after_step(t, u)
            if keep and (s + b_i + 1) in saved:
                states.append(SpectralField(basis, u[keep_states_for].copy()))
        s += block

    times = np.arange(steps + 1) * config.dt
    return times, l2, h1, saved, states


def run_path(
    config: SimConfig, path_id: int = 0, observers: Sequence[StepObserver] = ()
) -> PathResult:
    """Integrate a single path; deterministic given ``(seed, path_id)``."""
    times, l2, h1, saved, states = _run_batch(
        config, [path_id], observers, keep_states_for=0
    )
    return PathResult(
        config=config,
        path_id=path_id,
        times=times[saved],
        states=states,
        step_times=times,
        l2_sq=l2[0],
        h1_sq=h1[0],
    )


def run_ensemble(
    config: SimConfig,
    path_ids: Sequence[int] | None = None,
    observers: Sequence[StepObserver] = (),
) -> EnsembleDiagnostics:
    """Integrate all paths and aggregate the energy series.

    ``path_ids`` defaults to ``0 .. paths-1``; passing explicit ids is the
    hook for degenerate tests (repeated ids give identical paths).
    """
    if path_ids is None:
        path_ids = list(range(config.paths))
    if len(path_ids) < 2:
        raise ConfigurationError("ensemble statistics need at least two paths")
    times, l2, h1, _, _ = _run_batch(config, path_ids, observers)
    results = {}
    for obs in observers:
        name = getattr(obs, "name", obs.__class__.__name__)
        if hasattr(obs, "result"):
            results[name] = obs.result()
    return EnsembleDiagnostics(
        config=config,
        path_ids=tuple(path_ids),
        times=times,
        l2_sq=l2,
        h1_sq=h1,
        observers=results,
    )
