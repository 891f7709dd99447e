"""Pilot-based coherent one-bit reference system.

A representative coherent chain used for the BER / spectral-efficiency
comparison: the first fraction of each block carries known pilots, a
linearized MMSE correlator estimates the per-antenna channel from the
quantized pilot observations, and data symbols are detected by an exhaustive
Phi-product likelihood search over the constellation conditioned on that
estimate.  This approximates the cited coherent schemes rather than
reproducing their exact detectors.
"""

import math
from dataclasses import dataclass

import numpy as np

from .detect import log_phi
from .modem import ConstellationSpec, gray_decode
from .quantize import BussgangParams

__all__ = [
    "PilotPlan",
    "make_pilot_plan",
    "estimate_channel",
    "estimate_taps",
    "coherent_constellation",
    "coherent_detect",
    "coherent_detect_block",
]


@dataclass(frozen=True)
class PilotPlan:
    """Pilot placement: ceil(xi * n_uses) uses carry known symbols.

    ``positions`` are the pilot use indices; the remaining uses carry data.
    """

    n_uses: int
    xi: float
    positions: np.ndarray
    symbols: np.ndarray

    @property
    def n_pilots(self) -> int:
        return len(self.symbols)

    @property
    def n_data(self) -> int:
        return self.n_uses - self.n_pilots

    @property
    def data_positions(self) -> np.ndarray:
        mask = np.ones(self.n_uses, dtype=bool)
        mask[self.positions] = False
        return np.flatnonzero(mask)


def make_pilot_plan(
    n_uses: int,
    xi: float,
    placement: str = "comb",
    symbols: np.ndarray | None = None,
) -> PilotPlan:
    """Build a pilot plan; default pilots rotate through eight phases.

    ``"comb"`` spreads the pilots evenly over the block, which keeps the
    tap-domain estimation problem well conditioned when the gains drift
    across uses; ``"leading"`` packs them at the block start (adequate only
    for nearly flat channels, whose gains barely move over a block).  The
    phase rotation of the default pilot sequence keeps the one-bit
    observations informative in every quadrant (a constant pilot would freeze
    the sign pattern at high SNR).
    """
    if not 0.0 < xi < 1.0:
        raise ValueError(f"pilot fraction must be in (0, 1), got {xi}")
    n_pilots = math.ceil(xi * n_uses)
    if not 1 <= n_pilots < n_uses:
        raise ValueError(f"pilot fraction {xi} leaves no data uses in {n_uses}")
    if placement == "comb":
        positions = np.unique(np.floor(np.arange(n_pilots) * n_uses / n_pilots).astype(int))
    elif placement == "leading":
        positions = np.arange(n_pilots)
    else:
        raise ValueError(f"unknown pilot placement {placement!r}")
    if symbols is None:
        symbols = np.exp(2j * np.pi * np.arange(n_pilots) / 8.0)
    else:
        symbols = np.asarray(symbols, dtype=complex)
        if symbols.shape != (n_pilots,):
            raise ValueError(f"expected {n_pilots} pilot symbols, got {symbols.shape}")
    return PilotPlan(n_uses=n_uses, xi=xi, positions=positions, symbols=symbols)


def estimate_channel(
    q_pilot: np.ndarray,
    pilot_symbols: np.ndarray,
    params: BussgangParams,
    sigma_z2: float,
) -> np.ndarray:
    """Linear MMSE channel estimate from quantized pilot observations.

    Under the linearized model q = eta * h * p + eps the pilot correlation
    sum is shrunk by eta / (eta^2 * E_p + noise power), which tends to the
    least-squares average in the noiseless unquantized limit.
    """
    q_pilot = np.asarray(q_pilot, dtype=complex)
    pilot_symbols = np.asarray(pilot_symbols, dtype=complex)
    if pilot_symbols.size < 1:
        raise ValueError("channel estimation needs at least one pilot")
    if q_pilot.ndim != 2 or q_pilot.shape[1] != pilot_symbols.size:
        raise ValueError(
            f"pilot observations {q_pilot.shape} do not match {pilot_symbols.size} pilots"
        )
    energy = float(np.sum(np.abs(pilot_symbols) ** 2))
    rho_eff = params.eta**2 * sigma_z2 + params.sigma_eps2
    corr = q_pilot @ np.conj(pilot_symbols)
    return params.eta * corr / (params.eta**2 * energy + rho_eff)


def estimate_taps(
    q_pilot: np.ndarray,
    plan: PilotPlan,
    pdp: np.ndarray,
    params: BussgangParams,
    sigma_z2: float,
) -> np.ndarray:
    """Tap-domain LMMSE estimate from the plan's pilot observations.

    With more than one tap the per-use gains rotate and decorrelate across
    the block, so a single per-antenna coefficient cannot represent the data
    uses; estimating the (few) taps from the (many) pilots and reconstructing
    the gains where needed can.  Returns (n_antennas, n_taps) tap estimates
    to feed :func:`~dapskmimo.channel.tap_gains`.
    """
    q_pilot = np.asarray(q_pilot, dtype=complex)
    pdp = np.asarray(pdp, dtype=float)
    if plan.n_pilots < 1:
        raise ValueError("channel estimation needs at least one pilot")
    if q_pilot.ndim != 2 or q_pilot.shape[1] != plan.n_pilots:
        raise ValueError("pilot observations do not match the pilot plan")
    ramp = np.exp(-2j * np.pi * np.outer(plan.positions, np.arange(len(pdp))) / plan.n_uses)
    design = params.eta * plan.symbols[:, None] * np.sqrt(pdp)[None, :] * ramp
    rho_eff = params.eta**2 * sigma_z2 + params.sigma_eps2
    gram = design.conj().T @ design + rho_eff * np.eye(len(pdp))
    return np.linalg.solve(gram, design.conj().T @ q_pilot.T).T


def coherent_constellation(spec: ConstellationSpec, kind: str = "psk"):
    """Constellation searched by the coherent detector, with its bit map.

    ``"psk"`` spreads all ``n_bits`` Gray-coded over 2M phases on the unit
    circle (the reference scheme of the comparison); ``"dapsk"`` keeps the
    two-ring geometry with the leading bit selecting the ring.  Returns
    (points, bits) where row i of ``bits`` is the block mapped to point i;
    point indices enumerate the bit patterns in binary order.
    """
    n_points = 2 * spec.M
    n_bits = spec.n_bits
    points = np.empty(n_points, dtype=complex)
    bits = np.empty((n_points, n_bits), dtype=int)
    for pattern in range(n_points):
        word = [(pattern >> (n_bits - 1 - i)) & 1 for i in range(n_bits)]
        bits[pattern] = word
        if kind == "psk":
            m = gray_decode(pattern)
            points[pattern] = np.exp(2j * np.pi * m / n_points)
        elif kind == "dapsk":
            ring = spec.psi1 if word[0] else spec.psi0
            g = 0
            for b in word[1:]:
                g = (g << 1) | b
            points[pattern] = ring * np.exp(2j * np.pi * gray_decode(g) / spec.M)
        else:
            raise ValueError(f"unknown constellation kind {kind!r}")
    return points, bits


def coherent_detect(
    q_frame: np.ndarray,
    h_hat: np.ndarray,
    points: np.ndarray,
    rho: float,
) -> int:
    """ML symbol index for one data use given the channel estimate.

    Scores every constellation point with the product of Phi terms whose
    arguments are the observed component signs times the predicted received
    components; ties keep the lowest index.
    """
    return int(coherent_detect_block(np.asarray(q_frame, complex)[:, None], h_hat, points, rho)[0])


def coherent_detect_block(
    q: np.ndarray,
    h_hat: np.ndarray,
    points: np.ndarray,
    rho: float,
) -> np.ndarray:
    """Vectorized :func:`coherent_detect` over the data uses of a block.

    ``h_hat`` is either one estimate per antenna (shape (U,), held constant
    over the block) or per-use estimates of shape (U, n_uses).
    """
    q = np.asarray(q, dtype=complex)
    h_hat = np.asarray(h_hat, dtype=complex)
    if q.shape[0] != h_hat.shape[0]:
        raise ValueError("antenna count mismatch between observations and estimate")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    if h_hat.ndim == 1:
        pred = h_hat[:, None, None] * points[None, None, :]  # (U, 1, C)
    elif h_hat.shape == q.shape:
        pred = h_hat[:, :, None] * points[None, None, :]  # (U, V, C)
    else:
        raise ValueError(f"channel estimate shape {h_hat.shape} does not match {q.shape}")
    s_re = np.where(q.real >= 0, 1.0, -1.0)
    s_im = np.where(q.imag >= 0, 1.0, -1.0)
    root = math.sqrt(rho)
    ll = log_phi(root * s_re[:, :, None] * pred.real).sum(axis=0)
    ll += log_phi(root * s_im[:, :, None] * pred.imag).sum(axis=0)
    return np.argmax(ll, axis=1)
