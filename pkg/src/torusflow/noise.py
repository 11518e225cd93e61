"""Transport-noise models: space-independent, finite-mode and truncated
Q-Wiener forcing on the torus.

The Q-Wiener field is

    W(t, theta) = c_W^{-1/2} * sum_k q_k^{1/2} [c_k(theta) B_k^1(t) + s_k(theta) B_k^2(t)]

with ``q_(0,0) = 1``, ``q_k = |k|^{-2(beta-1)}`` otherwise, ``beta > 3``, and
the normalizer ``c_W = 1 + sum_{k != 0} (k1)^2 / |k|^{2 beta}``.  The sum runs
over the full index square: each lattice point, including both members of a
``{k, -k}`` pair, carries its own independent 2D Brownian motion, exactly as
in the truncated expansion the Galerkin system uses.  (Folding onto the
half-lattice would require sqrt(2) amplitudes; we keep the literal
enumeration.)

``c_W`` and the growth constant ``c'_W = sum_{k != 0} (k1)^2 / |k|^{2 beta - 2}``
have no closed form for general beta; they are evaluated by direct lattice
summation with a rigorous integral-comparison tail bound.  The two components
``(k1)^2`` and ``(k2)^2`` produce bitwise-identical sums by construction (the
row arrays coincide), which realizes the symmetry the double expression for
``c_W`` asserts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .basis import Basis, BasisMode, ModeIndex, SpectralField, get_basis

DEFAULT_CW_CUTOFF = 2048
# The c'_W sum converges like R^-2 for beta = 4; this cutoff keeps the
# rigorous interval width (and the doubling stability) below 1e-8.
DEFAULT_CW_PRIME_CUTOFF = 32768


class ConfigurationError(ValueError):
    """Invalid noise or simulation configuration."""


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 3.0:
        raise ConfigurationError(f"beta must exceed 3 (got beta={beta})")
    return beta


def q_coeff(k: ModeIndex, beta: float) -> float:
    """Covariance eigenvalue ``q_k``: 1 at the origin, ``|k|^{-2(beta-1)}`` else."""
    _check_beta(beta)
    ksq = float(k[0]) ** 2 + float(k[1]) ** 2
    if ksq == 0.0:
        return 1.0
    return ksq ** (-(beta - 1.0))


# ---------------------------------------------------------------------------
# lattice sums with rigorous tails
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSum:
    """A partial lattice sum together with a rigorous bound on the tail.

    The true value lies in ``[value, value + tail_bound]``.
    """

    value: float
    tail_bound: float
    cutoff: int

    @property
    def interval(self) -> tuple[float, float]:
        return (self.value, self.value + self.tail_bound)

    @property
    def width(self) -> float:
        return self.tail_bound


def _pow_ksq(ksq: np.ndarray, s2: float) -> np.ndarray:
    """``ksq**(s2/2)`` with a fast path for small even integer exponents."""
    half = s2 / 2.0
    if half == int(half) and 1 <= half <= 8:
        out = ksq.copy()
        for _ in range(int(half) - 1):
            out *= ksq
        return out
    return ksq**half


def _ring_sum(numerator: str, s2: float, lo: int, hi: int) -> float:
    """Sum of ``num(k) / |k|^{s2}`` over lattice points with ``lo < |k|_inf <= hi``.

    ``numerator`` is ``"comp_sq"`` (square of the enumerated component) or
    ``"one"``.  Rows are taken along the selected component, so the sums for
    the two components of the ``comp_sq`` numerator coincide bitwise.
    """
    total = 0.0
    # rows |r| <= lo: only the j-extension lo < |j| <= hi contributes
    if lo >= 0 and hi > lo:
        j_ext = np.arange(lo + 1, hi + 1, dtype=np.float64)
        for r in range(0, lo + 1):
            rsq = float(r) * float(r)
            ksq = rsq + j_ext * j_ext
            num = rsq if numerator == "comp_sq" else 1.0
            row = 2.0 * float(np.sum(num / _pow_ksq(ksq, s2)))
            total += row if r == 0 else 2.0 * row
        # rows lo < |r| <= hi: full j range |j| <= hi
        j_half = np.arange(1, hi + 1, dtype=np.float64)
        for r in range(lo + 1, hi + 1):
            rsq = float(r) * float(r)
            num = rsq if numerator == "comp_sq" else 1.0
            row = num / _pow_ksq(np.array([rsq]), s2)[0]  # j = 0 term
            ksq = rsq + j_half * j_half
            row += 2.0 * float(np.sum(num / _pow_ksq(ksq, s2)))
            total += 2.0 * row
    return total


def _tail_bound(numerator: str, s2: float, cutoff: int) -> float:
    """Integral-comparison bound on the discarded ``|k|_inf > cutoff`` sum.

    Each term is at most ``|k|^{p - s2} <= r^{p - s2}`` on the shell
    ``|k|_inf = r`` (p = 2 for the component-squared numerator, else 0), a
    shell has ``8r`` points, and the shell series is compared with the
    integral of ``8 x^{1 + p - s2}``.
    """
    p = 2.0 if numerator == "comp_sq" else 0.0
    decay = s2 - 2.0 - p
    if decay <= 0:
        raise ConfigurationError("lattice sum does not converge")
    return 8.0 * cutoff ** (-decay) / decay


@lru_cache(maxsize=256)
def _square_sum(numerator: str, s2: float, cutoff: int) -> float:
    if cutoff < 1:
        return 0.0
    # ring-decompose along powers of two so ladders share work via the cache
    lo = cutoff // 2 if cutoff % 2 == 0 else 0
    if lo >= 1:
        return _square_sum(numerator, s2, lo) + _ring_sum(numerator, s2, lo, cutoff)
    return _ring_sum(numerator, s2, 0, cutoff)


def normalizer_cw(beta: float, cutoff: int = DEFAULT_CW_CUTOFF, component: int = 1) -> LatticeSum:
    """``c_W = 1 + sum_{k != 0} (k^component)^2 / |k|^{2 beta}`` with tail bound."""
    _check_beta(beta)
    if cutoff < 1:
        raise ConfigurationError("cutoff must be >= 1")
    if component not in (1, 2):
        raise ConfigurationError("component must be 1 or 2")
    val = 1.0 + _square_sum("comp_sq", 2.0 * beta, cutoff)
    return LatticeSum(val, _tail_bound("comp_sq", 2.0 * beta, cutoff), cutoff)


def normalizer_cw_prime(
    beta: float, cutoff: int = DEFAULT_CW_PRIME_CUTOFF, component: int = 1
) -> LatticeSum:
    """``c'_W = sum_{k != 0} (k^component)^2 / |k|^{2 beta - 2}`` with tail bound."""
    _check_beta(beta)
    if cutoff < 1:
        raise ConfigurationError("cutoff must be >= 1")
    if component not in (1, 2):
        raise ConfigurationError("component must be 1 or 2")
    val = _square_sum("comp_sq", 2.0 * beta - 2.0, cutoff)
    return LatticeSum(val, _tail_bound("comp_sq", 2.0 * beta - 2.0, cutoff), cutoff)


def q_trace(beta: float, cutoff: int = DEFAULT_CW_CUTOFF) -> LatticeSum:
    """Trace ``sum_k q_k`` over the full lattice (origin included)."""
    _check_beta(beta)
    val = 1.0 + _square_sum("one", 2.0 * (beta - 1.0), cutoff)
    return LatticeSum(val, _tail_bound("one", 2.0 * (beta - 1.0), cutoff), cutoff)


def sum_ladder(kind: str, beta: float, max_cutoff: int) -> list[LatticeSum]:
    """Partial sums at the power-of-two cutoffs up to ``max_cutoff``.

    ``kind`` is ``"cw"``, ``"cw_prime"`` or ``"trace"``.
    """
    fns = {"cw": normalizer_cw, "cw_prime": normalizer_cw_prime, "trace": q_trace}
    try:
        fn = fns[kind]
    except KeyError:
        raise ConfigurationError(f"unknown sum kind {kind!r}") from None
    out = []
    c = 1
    while c <= max_cutoff:
        out.append(fn(beta, cutoff=c))
        c *= 2
    return out


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------

SPACE_INDEPENDENT = "space-independent"
FINITE_MODES = "finite"
Q_WIENER = "qwiener"


class NoiseModel:
    """Immutable description of one noise regime plus its sampling tables.

    ``active_modes`` lists the lattice points carrying an independent 2D
    Brownian motion, in a fixed documented order (row-major over the index
    square for the Q-Wiener regime).  ``weights[j]`` scales both transport
    fields of mode ``j``: 1 for the space-independent regime,
    ``sqrt(q_k) / sqrt(c_W)`` otherwise.
    """

    def __init__(
        self,
        regime: str,
        active_modes: Sequence[ModeIndex],
        beta: float = 4.0,
        cw_cutoff: int = DEFAULT_CW_CUTOFF,
    ):
        if regime not in (SPACE_INDEPENDENT, FINITE_MODES, Q_WIENER):
            raise ConfigurationError(f"unknown noise regime {regime!r}")
        self.regime = regime
        self.beta = _check_beta(beta)
        self.cw_cutoff = int(cw_cutoff)
        self.active_modes = tuple((int(k[0]), int(k[1])) for k in active_modes)
        if len(set(self.active_modes)) != len(self.active_modes):
            raise ConfigurationError("duplicate lattice points in the noise mode set")

        if regime == SPACE_INDEPENDENT:
            if self.active_modes != ((0, 0),):
                raise ConfigurationError(
                    "the space-independent regime has exactly the constant mode"
                )
            self.cw = 1.0
            weights = [1.0]
        else:
            self.cw = normalizer_cw(self.beta, cutoff=self.cw_cutoff).value
            weights = [
                np.sqrt(q_coeff(k, self.beta)) / np.sqrt(self.cw)
                for k in self.active_modes
            ]
        self.weights = np.array(weights, dtype=np.float64)
        self.n_components = len(self.active_modes)
        extent = max((max(abs(k[0]), abs(k[1])) for k in self.active_modes), default=0)
        #: basis carrying one increment field; fields of this noise live here
        self.field_basis: Basis = get_basis(extent)
        self._wc, self._ws = self._assembly_matrices()

    # -- constructors ------------------------------------------------------

    @classmethod
    def space_independent(cls) -> "NoiseModel":
        """Plain 2D Brownian motion: ``W(t) = (B^1(t), B^2(t))``."""
        return cls(SPACE_INDEPENDENT, [(0, 0)], beta=4.0)

    @classmethod
    def q_wiener(
        cls, n_w: int, beta: float = 4.0, cw_cutoff: int = DEFAULT_CW_CUTOFF
    ) -> "NoiseModel":
        """Q-Wiener noise truncated to the full index square ``{-n_w, .., n_w}^2``."""
        if n_w < 0:
            raise ConfigurationError("n_w must be >= 0")
        modes = [
            (k1, k2)
            for k1 in range(-n_w, n_w + 1)
            for k2 in range(-n_w, n_w + 1)
        ]
        return cls(Q_WIENER, modes, beta=beta, cw_cutoff=cw_cutoff)

    @classmethod
    def finite_modes(
        cls,
        modes: Iterable[ModeIndex],
        beta: float = 4.0,
        cw_cutoff: int = DEFAULT_CW_CUTOFF,
    ) -> "NoiseModel":
        """Arbitrary finite mode set; an empty set gives the zero-noise model."""
        return cls(FINITE_MODES, list(modes), beta=beta, cw_cutoff=cw_cutoff)

    # -- derived tables ------------------------------------------------------

    def _assembly_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        nb = self.field_basis
        wc = np.zeros((self.n_components, nb.n_modes))
        ws = np.zeros((self.n_components, nb.n_modes))
        for j, k in enumerate(self.active_modes):
            i, cs, ss = nb.mode_id(k)
            wc[j, i] += self.weights[j] * cs
            ws[j, i] += self.weights[j] * ss
        return wc, ws

    def transport_pairs(self) -> list[tuple[float, BasisMode, tuple[int, int]]]:
        """Enumerate ``(coefficient, advecting mode, (lattice index, component))``.

        The Brownian increment addressed by the last entry multiplies the
        transport of the listed field: component 0 pairs with the cosine
        field, component 1 with the sine field.
        """
        out = []
        for j, k in enumerate(self.active_modes):
            out.append((float(self.weights[j]), BasisMode("c", k), (j, 0)))
            out.append((float(self.weights[j]), BasisMode("s", k), (j, 1)))
        return out

    def increments_to_field(self, values: np.ndarray) -> np.ndarray:
        """Fold raw increments ``(..., K, 2)`` into field coefficients ``(..., 2, N)``.

        The result represents ``dW = sum_j w_j [c_{k_j} dB_j^1 + s_{k_j} dB_j^2]``
        over ``field_basis``; linearity of transport in the advector makes
        applying ``(dW . grad)`` equivalent to summing the per-mode transports.
        """
        a = values[..., 0] @ self._wc
        b = values[..., 1] @ self._ws
        return np.stack([a, b], axis=-2)

    def increment_field(self, incr: "WienerIncrement") -> SpectralField:
        return SpectralField(self.field_basis, self.increments_to_field(incr.values))

    def discarded_trace(self) -> float:
        """Trace of the covariance carried by the truncated-away modes."""
        if self.regime == SPACE_INDEPENDENT:
            return 0.0
        total = q_trace(self.beta, cutoff=max(self.cw_cutoff, 64))
        active = sum(q_coeff(k, self.beta) for k in self.active_modes)
        return max(total.value + 0.5 * total.tail_bound - active, 0.0)

    @property
    def is_constant_advection(self) -> bool:
        """True when every active transport field is spatially constant."""
        return all(k == (0, 0) for k in self.active_modes)

    def describe(self) -> dict:
        d = {
            "regime": self.regime,
            "beta": self.beta,
            "components": self.n_components,
            "cw": self.cw,
            "discarded_trace": self.discarded_trace(),
        }
        if self.regime != SPACE_INDEPENDENT:
            d["modes"] = list(self.active_modes)
        return d

    def __repr__(self):
        return (
            f"NoiseModel({self.regime!r}, beta={self.beta}, "
            f"components={self.n_components})"
        )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass
class WienerIncrement:
    """Brownian increments over one step: ``values[j] = (dB_j^1, dB_j^2)``."""

    dt: float
    values: np.ndarray  # (K, 2)


_STREAM_PATH = 0
_STREAM_INITIAL = 1


def _philox(seed: int, path_id: int, lane: int) -> np.random.Generator:
    key = np.array([seed % 2**64, path_id % 2**64], dtype=np.uint64)
    counter = np.array([0, 0, 0, lane], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def path_stream(seed: int, path_id: int) -> np.random.Generator:
    """Counter-based stream owned by one sample path.

    Streams for distinct ``(seed, path_id)`` pairs are independent Philox
    streams; within a path, draws are consumed in a fixed (step, mode,
    component) order, so results do not depend on how paths are scheduled.
    """
    return _philox(seed, path_id, _STREAM_PATH)


def initial_condition_stream(seed: int) -> np.random.Generator:
    """Stream reserved for drawing random initial conditions."""
    return _philox(seed, 0, _STREAM_INITIAL)


def sample_increments(
    model: NoiseModel, dt: float, stream: np.random.Generator, steps: int | None = None
) -> WienerIncrement | np.ndarray:
    """Draw Gaussian increments with variance ``dt`` per component.

    With ``steps`` given, returns the raw array ``(steps, K, 2)`` for a whole
    block of consecutive steps (same draw order as repeated single calls).
    """
    if dt < 0:
        raise ConfigurationError("dt must be >= 0")
    k = model.n_components
    if steps is None:
        vals = stream.standard_normal((k, 2)) * np.sqrt(dt)
        return WienerIncrement(dt, vals)
    return stream.standard_normal((steps, k, 2)) * np.sqrt(dt)
