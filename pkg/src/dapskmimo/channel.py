"""Frequency-selective Rayleigh fading uplink channel.

The per-use gain of antenna ``u`` is a sum of ``L`` unit-variance complex
Gaussian taps weighted by the square root of the power delay profile and a
tap- and use-dependent phase ramp.  Taps are drawn once per block of ``N``
uses; only the phase ramp moves the gains between uses, which keeps adjacent
uses strongly correlated.
"""

from dataclasses import dataclass

import numpy as np

from .modem import amp_ratio

__all__ = [
    "ChannelConfig",
    "ChannelRealization",
    "uniform_pdp",
    "exponential_pdp",
    "gen_channel",
    "apply_channel",
    "tap_gains",
    "adjacent_use_ratio",
    "diff_noise_var",
]


def uniform_pdp(n_taps: int) -> np.ndarray:
    """Flat power delay profile with unit total power."""
    return np.full(n_taps, 1.0 / n_taps)


def exponential_pdp(n_taps: int, decay: float = 0.1) -> np.ndarray:
    """Exponentially decaying power delay profile, normalized to unit power."""
    if decay <= 0:
        raise ValueError("decay must be positive")
    p = np.exp(-decay * np.arange(n_taps))
    return p / p.sum()


@dataclass(frozen=True)
class ChannelConfig:
    """Array size, delay spread and noise level of one simulated block."""

    n_antennas: int
    n_taps: int
    n_uses: int
    pdp: np.ndarray
    sigma_z2: float

    def __post_init__(self) -> None:
        if self.n_antennas < 1:
            raise ValueError("need at least one antenna")
        if not 1 <= self.n_taps <= self.n_uses:
            raise ValueError(f"need 1 <= n_taps <= n_uses, got L={self.n_taps}, N={self.n_uses}")
        pdp = np.asarray(self.pdp, dtype=float)
        if pdp.shape != (self.n_taps,):
            raise ValueError(f"pdp must have {self.n_taps} entries")
        if np.any(pdp < 0):
            raise ValueError("pdp entries must be nonnegative")
        if abs(pdp.sum() - 1.0) > 1e-9:
            raise ValueError(f"pdp must sum to 1, got {pdp.sum()!r}")
        if self.sigma_z2 < 0:
            raise ValueError("sigma_z2 must be nonnegative")
        object.__setattr__(self, "pdp", pdp)


@dataclass
class ChannelRealization:
    """Tap gains (n_antennas, n_taps) and derived per-use gains (n_antennas, n_uses)."""

    taps: np.ndarray
    gains: np.ndarray


def gen_channel(cfg: ChannelConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one block-fading realization.

    Taps are i.i.d. circularly-symmetric complex Gaussian with unit variance,
    so E|gain|^2 equals the pdp total of 1 at every use.
    """
    shape = (cfg.n_antennas, cfg.n_taps)
    taps = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    ramp = np.exp(
        -2j * np.pi * np.outer(np.arange(cfg.n_taps), np.arange(cfg.n_uses)) / cfg.n_uses
    )
    gains = (taps * np.sqrt(cfg.pdp)[None, :]) @ ramp
    return ChannelRealization(taps=taps, gains=gains)


def tap_gains(
    taps: np.ndarray, pdp: np.ndarray, n_uses: int, uses: np.ndarray | None = None
) -> np.ndarray:
    """Per-use gains implied by tap gains, optionally at selected uses only."""
    taps = np.asarray(taps, dtype=complex)
    pdp = np.asarray(pdp, dtype=float)
    if uses is None:
        uses = np.arange(n_uses)
    ramp = np.exp(-2j * np.pi * np.outer(np.arange(len(pdp)), np.asarray(uses)) / n_uses)
    return (taps * np.sqrt(pdp)[None, :]) @ ramp


def adjacent_use_ratio(pdp: np.ndarray, n_uses: int) -> complex:
    """Expected ratio E[h[v] h*[v-1]] of gains at adjacent uses.

    The tap phase ramp rotates every gain by a deterministic mean angle set
    by the delay centroid of the profile; differential detectors can undo it.
    """
    pdp = np.asarray(pdp, dtype=float)
    return complex(np.sum(pdp * np.exp(-2j * np.pi * np.arange(len(pdp)) / n_uses)))


def apply_channel(
    x: np.ndarray,
    ch: ChannelRealization,
    sigma_z2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Received matrix ``y[u, v] = gain[u, v] * x[v] + z[u, v]``.

    The additive noise is complex Gaussian with variance ``sigma_z2`` per
    complex sample, split evenly between the real and imaginary parts.
    """
    x = np.asarray(x, dtype=complex)
    n_antennas, n_uses = ch.gains.shape
    if x.shape != (n_uses,):
        raise ValueError(f"expected {n_uses} symbols, got {x.shape}")
    y = ch.gains * x[None, :]
    if sigma_z2 > 0:
        scale = np.sqrt(sigma_z2 / 2.0)
        y = y + scale * (
            rng.standard_normal((n_antennas, n_uses))
            + 1j * rng.standard_normal((n_antennas, n_uses))
        )
    return y


def diff_noise_var(
    amp_bit: int,
    ring_direction: str,
    sigma_z2: float,
    ring_ratio: float | None = None,
) -> float:
    """Variance of the effective differential noise for one transition hypothesis.

    Comparing two consecutive uses doubles the noise when the ring is kept;
    for a toggle the previous-use noise is scaled by the amplitude ratio, so
    the variance becomes ``sigma_z2 * (1 + a'**2)`` with a' from amp_ratio.
    """
    r = amp_ratio(amp_bit, ring_direction, ring_ratio)
    return sigma_z2 * (1.0 + r * r)
