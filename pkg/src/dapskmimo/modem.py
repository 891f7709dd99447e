"""Two-ring differential amplitude/phase-shift keying modem.

A symbol carries ``1 + log2(M)`` bits: the leading bit toggles between two
concentric rings (inner amplitude ``psi0``, outer ``psi1 = a * psi0``), the
remaining bits pick a Gray-coded M-PSK rotation that is accumulated onto the
previous symbol's phase.  Encoding therefore only needs the previous symbol,
and decoding only needs the ratio of two consecutive received symbols.
"""

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ConstellationSpec",
    "EncoderState",
    "initial_state",
    "gray_encode",
    "gray_decode",
    "psk_map",
    "psk_unmap",
    "amp_ratio",
    "dapsk_encode",
    "recover_bits",
    "demod_ratio",
]


@dataclass(frozen=True)
class ConstellationSpec:
    """Geometry of the two-ring constellation.

    ``M`` is the number of phases per ring (a power of two) and
    ``ring_ratio`` the outer/inner amplitude ratio ``a > 1``.  The ring
    amplitudes follow from the unit average power constraint
    ``psi0**2 + psi1**2 == 2``.
    """

    M: int
    ring_ratio: float = 2.0

    def __post_init__(self) -> None:
        if self.M < 2 or (self.M & (self.M - 1)) != 0:
            raise ValueError(f"M must be a power of two >= 2, got {self.M}")
        if not self.ring_ratio > 1.0:
            raise ValueError(f"ring_ratio must exceed 1, got {self.ring_ratio}")

    @property
    def psi0(self) -> float:
        return math.sqrt(2.0 / (1.0 + self.ring_ratio**2))

    @property
    def psi1(self) -> float:
        return self.ring_ratio * self.psi0

    @property
    def phase_bits(self) -> int:
        return self.M.bit_length() - 1

    @property
    def n_bits(self) -> int:
        """Bits per channel use (one amplitude bit plus the phase bits)."""
        return 1 + self.phase_bits


@dataclass
class EncoderState:
    """Differential encoder memory: previous ring amplitude and symbol."""

    prev_amp: float
    prev_c: complex


def initial_state(spec: ConstellationSpec) -> EncoderState:
    """Encoder start state: inner ring, zero phase."""
    return EncoderState(prev_amp=spec.psi0, prev_c=complex(spec.psi0, 0.0))


def gray_encode(n: int) -> int:
    return n ^ (n >> 1)


def gray_decode(g: int) -> int:
    n = 0
    while g:
        n ^= g
        g >>= 1
    return n


def _check_bits(bits: Sequence[int]) -> None:
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bits must be 0 or 1, got {b!r}")


def psk_map(phase_bits: Sequence[int], M: int) -> complex:
    """Map a Gray-coded bit word onto the unit circle.

    The word is read as a Gray code; its decoded index m selects the point
    ``exp(2j*pi*m/M)``.
    """
    k = M.bit_length() - 1
    if len(phase_bits) != k:
        raise ValueError(f"expected {k} phase bits for M={M}, got {len(phase_bits)}")
    _check_bits(phase_bits)
    g = 0
    for b in phase_bits:
        g = (g << 1) | int(b)
    m = gray_decode(g)
    return cmath.exp(2j * math.pi * m / M)


def psk_unmap(s: complex, M: int) -> list[int]:
    """Gray bits of the M-PSK point nearest to ``s`` (inverse of psk_map)."""
    if s == 0:
        raise ValueError("cannot unmap the zero symbol")
    k = M.bit_length() - 1
    m = round(cmath.phase(s) * M / (2.0 * math.pi)) % M
    g = gray_encode(m)
    return [(g >> i) & 1 for i in range(k - 1, -1, -1)]


def amp_ratio(amp_bit: int, ring_direction: str, ring_ratio: float | None = None) -> float:
    """Amplitude ratio a' of one differential transition hypothesis.

    ``amp_bit == 0`` keeps the ring (ratio 1, direction must be "none").  For
    a toggle, ``"up"`` selects the ``psi0/psi1`` branch and ``"down"`` the
    ``psi1/psi0`` branch of the two toggle hypotheses.
    """
    if amp_bit == 0:
        if ring_direction != "none":
            raise ValueError("amp_bit=0 requires ring_direction='none'")
        return 1.0
    if ring_ratio is None or not ring_ratio > 1.0:
        raise ValueError("a ring toggle needs ring_ratio > 1")
    if ring_direction == "up":
        return 1.0 / ring_ratio
    if ring_direction == "down":
        return ring_ratio
    raise ValueError(f"unknown ring_direction {ring_direction!r}")


def dapsk_encode(
    blocks: Sequence[Sequence[int]],
    spec: ConstellationSpec,
    state: EncoderState | None = None,
) -> tuple[np.ndarray, EncoderState]:
    """Differentially encode bit blocks into complex symbols.

    Each block is ``n_bits`` long; the leading bit toggles the ring, the rest
    rotate the phase.  Returns the symbol sequence and the updated state so a
    stream can be encoded in chunks.  An empty block sequence returns an empty
    array and the unchanged state.
    """
    if state is None:
        state = initial_state(spec)
    if abs(abs(state.prev_c) - state.prev_amp) > 1e-9 * max(state.prev_amp, 1.0):
        raise ValueError("inconsistent encoder state: |prev_c| != prev_amp")

    out = np.empty(len(blocks), dtype=complex)
    amp = state.prev_amp
    c = state.prev_c
    for i, block in enumerate(blocks):
        if len(block) != spec.n_bits:
            raise ValueError(f"block {i} has {len(block)} bits, expected {spec.n_bits}")
        b1 = int(block[0])
        if b1 not in (0, 1):
            raise ValueError(f"bits must be 0 or 1, got {block[0]!r}")
        s = psk_map(block[1:], spec.M)
        on_inner = abs(amp - spec.psi0) < abs(amp - spec.psi1)
        if b1 == 0:
            factor = 1.0
        elif on_inner:
            factor = spec.psi1 / spec.psi0
            amp = spec.psi1
        else:
            factor = spec.psi0 / spec.psi1
            amp = spec.psi0
        c = factor * c * s
        out[i] = c
    return out, EncoderState(prev_amp=amp, prev_c=c)


def recover_bits(amp_bit: int, s_hat: complex, M: int) -> list[int]:
    """Assemble a received bit block from the detected amplitude bit and phase symbol."""
    if s_hat == 0:
        raise ValueError("cannot recover bits from a zero phase symbol")
    if amp_bit not in (0, 1):
        raise ValueError(f"amp_bit must be 0 or 1, got {amp_bit!r}")
    return [int(amp_bit)] + psk_unmap(s_hat, M)


def demod_ratio(ratio: complex, spec: ConstellationSpec) -> tuple[int, complex]:
    """Genie demodulation of a noiseless symbol ratio ``x[v] / x[v-1]``.

    Classifies the magnitude against the three possible amplitude ratios and
    returns ``(amp_bit, s_hat)`` with ``s_hat`` on the unit circle.
    """
    mag = abs(ratio)
    if mag == 0:
        raise ValueError("zero ratio cannot be demodulated")
    candidates = (1.0, spec.psi0 / spec.psi1, spec.psi1 / spec.psi0)
    nearest = min(candidates, key=lambda r: abs(mag - r))
    amp_bit = 0 if nearest == 1.0 else 1
    return amp_bit, ratio / mag
