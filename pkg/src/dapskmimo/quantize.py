"""One-bit and variable-quantization-level (VQL) ADC models.

Every ADC compares the real and imaginary parts of its input to a single
threshold and emits one of two labels per component.  The plain sign
quantizer uses threshold 0 and labels +/-1.  The VQL setup splits the array
into three groups: a ring-amplitude group thresholded between the two ring
levels, a sign group reserved for phase detection, and a mirrored
ring-amplitude group with negated threshold and labels.
"""

import math
from dataclasses import dataclass

import numpy as np

from .modem import ConstellationSpec, amp_ratio

__all__ = [
    "QuantGroup",
    "QuantizerSpec",
    "BussgangParams",
    "sign_quantizer",
    "vql_quantizer",
    "amplitude_threshold",
    "sign_quantize",
    "vql_quantize",
    "bussgang_params",
    "estimation_params",
    "combined_noise_var",
]


@dataclass(frozen=True)
class QuantGroup:
    """Antenna indices sharing one threshold and label pair."""

    antennas: tuple[int, ...]
    threshold: float
    low: float
    high: float


@dataclass(frozen=True)
class QuantizerSpec:
    n_antennas: int
    groups: tuple[QuantGroup, ...]

    def __post_init__(self) -> None:
        seen: list[int] = []
        for g in self.groups:
            seen.extend(g.antennas)
        if sorted(seen) != list(range(self.n_antennas)):
            raise ValueError("groups must partition the antenna indices exactly once")


def amplitude_threshold(spec: ConstellationSpec) -> float:
    """Decision level separating the two ring amplitudes on a real component."""
    return spec.psi0 * (1.0 + spec.ring_ratio * math.cos(math.pi / 4.0)) / 2.0


def sign_quantizer(n_antennas: int) -> QuantizerSpec:
    """All antennas use the plain sign quantizer."""
    group = QuantGroup(antennas=tuple(range(n_antennas)), threshold=0.0, low=-1.0, high=1.0)
    return QuantizerSpec(n_antennas=n_antennas, groups=(group,))


def vql_quantizer(
    n_antennas: int,
    group_sizes: tuple[int, int, int],
    spec: ConstellationSpec,
) -> QuantizerSpec:
    """Three-group VQL quantizer.

    Group 1 maps to {psi0, psi1} above/below the amplitude threshold, group 2
    is the sign quantizer used for phase detection, group 3 mirrors group 1
    with negated threshold and labels.
    """
    if sum(group_sizes) != n_antennas:
        raise ValueError(f"group sizes {group_sizes} must sum to {n_antennas}")
    if any(s < 1 for s in group_sizes):
        raise ValueError("every group needs at least one antenna")
    zeta = amplitude_threshold(spec)
    n1, n2, _ = group_sizes
    return QuantizerSpec(
        n_antennas=n_antennas,
        groups=(
            QuantGroup(tuple(range(n1)), zeta, spec.psi0, spec.psi1),
            QuantGroup(tuple(range(n1, n1 + n2)), 0.0, -1.0, 1.0),
            QuantGroup(tuple(range(n1 + n2, n_antennas)), -zeta, -spec.psi1, -spec.psi0),
        ),
    )


def sign_quantize(y: np.ndarray | complex) -> np.ndarray | complex:
    """Componentwise sign quantizer with labels +/-1; sign(0) is +1."""
    y = np.asarray(y, dtype=complex)
    q = np.where(y.real >= 0, 1.0, -1.0) + 1j * np.where(y.imag >= 0, 1.0, -1.0)
    if q.ndim == 0:
        return complex(q)
    return q


def vql_quantize(y: np.ndarray, qspec: QuantizerSpec) -> np.ndarray:
    """Quantize a received frame groupwise.

    ``y`` has the antenna axis first: shape (n_antennas,) or
    (n_antennas, ...).  Each real component is compared to its group's
    threshold and replaced by the group's low/high label.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape[0] != qspec.n_antennas:
        raise ValueError(f"expected {qspec.n_antennas} antennas, got {y.shape[0]}")
    q = np.empty_like(y)
    for g in qspec.groups:
        idx = list(g.antennas)
        re = np.where(y.real[idx] >= g.threshold, g.high, g.low)
        im = np.where(y.imag[idx] >= g.threshold, g.high, g.low)
        q[idx] = re + 1j * im
    return q


@dataclass(frozen=True)
class BussgangParams:
    """Linearization constants of the sign quantizer: gain eta and distortion power."""

    eta: float
    sigma_eps2: float


def bussgang_params(sigma_y2: float) -> BussgangParams:
    """Gaussian-input linearization constants for input power ``sigma_y2``.

    The gain is ``sqrt(2 / (pi * sigma_y2))`` (the unit-power-label
    convention) and the distortion power is the residual of the label power
    E|q|^2 = 2, i.e. ``2 - eta**2 * sigma_y2``.  These are the constants the
    detectors' noise bookkeeping is built on.
    """
    if sigma_y2 <= 0:
        raise ValueError(f"sigma_y2 must be positive, got {sigma_y2!r}")
    eta = math.sqrt(2.0 / (math.pi * sigma_y2))
    sigma_eps2 = 2.0 - eta * eta * sigma_y2
    return BussgangParams(eta=eta, sigma_eps2=sigma_eps2)


def estimation_params(sigma_y2: float) -> BussgangParams:
    """Orthogonal linearization of the raw +/-1+/-1j labels.

    ``q = eta * y + eps`` with ``eps`` uncorrelated to ``y`` requires the
    correlation gain ``sqrt(4 / (pi * sigma_y2))``; the matching distortion
    power is ``2 - 4/pi``.  Channel estimators need this pair: with the
    detector-convention constants the correlator would converge to a biased
    estimate no matter how many pilots it averages.
    """
    if sigma_y2 <= 0:
        raise ValueError(f"sigma_y2 must be positive, got {sigma_y2!r}")
    eta = math.sqrt(4.0 / (math.pi * sigma_y2))
    return BussgangParams(eta=eta, sigma_eps2=2.0 - eta * eta * sigma_y2)


def combined_noise_var(
    params: BussgangParams,
    rho_z: float,
    amp_bit: int = 0,
    ring_direction: str = "none",
    ring_ratio: float | None = None,
) -> float:
    """Thermal plus quantization noise variance of one transition hypothesis.

    The thermal part ``rho_z`` is scaled by ``eta**2``; the distortion enters
    from both compared uses, once scaled by the hypothesis amplitude ratio,
    giving the factor ``1 + a'**2`` (2 for a kept ring).
    """
    r = amp_ratio(amp_bit, ring_direction, ring_ratio)
    return params.eta**2 * rho_z + params.sigma_eps2 * (1.0 + r * r)
