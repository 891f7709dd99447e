"""Detectors for differentially encoded symbols observed through one-bit ADCs.

The joint detector scores every (amplitude ratio, phase rotation) candidate
with a product of Gaussian tail probabilities: each quantized component is
correct with probability Phi of the candidate's predicted value scaled by the
hypothesis SNR.  The VQL path splits the work: phase comes from the same
likelihood restricted to the sign-quantized group, amplitude from the
per-component energy statistic whose conditional law is a scaled noncentral
chi-square.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .modem import ConstellationSpec
from .quantize import BussgangParams

__all__ = [
    "RealFrame",
    "Candidate",
    "EnergyDetectorParams",
    "realify",
    "amplitude_ratios",
    "candidate_set",
    "hypothesis_rho_table",
    "log_phi",
    "onebit_loglik",
    "onebit_ml_detect",
    "ml_detect_block",
    "vql_phase_detect",
    "vql_phase_detect_block",
    "energy_statistic",
    "energy_statistic_block",
    "ncx2_logpdf",
    "ncx2_pdf",
    "lrt_amplitude_test",
    "lrt_amplitude_block",
]

_B1_TOL = 1e-9


@dataclass
class RealFrame:
    """Real-domain view of one differential observation.

    ``q_r`` holds [Re, Im] of the current quantized frame, one row per
    antenna.  ``f_tilde`` stacks per antenna the 2x2 previous-symbol matrix
    whose rows are sign-flipped to match the current labels, so that every
    likelihood term has the form Phi(a' * sqrt(rho) * row . s).
    """

    q_r: np.ndarray
    f_tilde: np.ndarray


def realify(q_now: Sequence[complex], q_prev: Sequence[complex]) -> RealFrame:
    """Build the real-domain frame from two consecutive quantized frames.

    Row i of the previous-symbol matrix is [Re, -Im] for i=0 and [Im, Re] for
    i=1 (the real form of complex multiplication), then multiplied by the
    sign of the matching current-frame component.
    """
    q_now = np.asarray(q_now, dtype=complex).ravel()
    q_prev = np.asarray(q_prev, dtype=complex).ravel()
    if q_now.shape != q_prev.shape:
        raise ValueError(f"frame length mismatch: {q_now.shape} vs {q_prev.shape}")
    n = q_now.shape[0]
    q_r = np.stack([q_now.real, q_now.imag], axis=1) if n else np.empty((0, 2))
    f = np.empty((n, 2, 2))
    f[:, 0, 0] = q_prev.real
    f[:, 0, 1] = -q_prev.imag
    f[:, 1, 0] = q_prev.imag
    f[:, 1, 1] = q_prev.real
    signs = np.where(q_r >= 0, 1.0, -1.0)
    return RealFrame(q_r=q_r, f_tilde=f * signs[:, :, None])


@dataclass
class Candidate:
    """One detection hypothesis: amplitude ratio and unit phase vector."""

    a_prime: float
    s_r: np.ndarray


def amplitude_ratios(spec: ConstellationSpec) -> tuple[float, float, float]:
    """The three possible symbol amplitude ratios, kept-ring first."""
    return (1.0, spec.psi0 / spec.psi1, spec.psi1 / spec.psi0)


def _phase_vectors(M: int) -> np.ndarray:
    """Unit vectors of the M phase candidates, with exact zeros on the axes."""
    ang = 2.0 * np.pi * np.arange(M) / M
    vec = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    vec[np.abs(vec) < 1e-15] = 0.0
    return vec


def candidate_set(spec: ConstellationSpec) -> list[Candidate]:
    """All 3M joint candidates, ordered by (amplitude ratio, phase index)."""
    vecs = _phase_vectors(spec.M)
    return [
        Candidate(a_prime=a, s_r=vecs[m].copy())
        for a in amplitude_ratios(spec)
        for m in range(spec.M)
    ]


def hypothesis_rho_table(
    spec: ConstellationSpec, sigma_z2: float, params: BussgangParams
) -> np.ndarray:
    """Effective SNR 1/var for each amplitude-ratio hypothesis.

    Both the doubled thermal noise and the quantization distortion scale with
    ``1 + a'**2``, so rho differs across the three hypotheses.
    """
    ratios = np.asarray(amplitude_ratios(spec))
    base = params.eta**2 * sigma_z2 + params.sigma_eps2
    return 1.0 / ((1.0 + ratios**2) * base)


def log_phi(x: np.ndarray | float) -> np.ndarray | float:
    """log of the standard normal CDF, finite far into the left tail."""
    return special.log_ndtr(x)


def onebit_loglik(frame: RealFrame, cand: Candidate, rho: float) -> float:
    """Log-likelihood of the observed sign pattern under one candidate."""
    if not (np.isfinite(rho) and rho > 0):
        raise ValueError(f"rho must be positive and finite, got {rho!r}")
    if not (np.all(np.isfinite(frame.f_tilde)) and np.all(np.isfinite(cand.s_r))):
        raise ValueError("non-finite frame or candidate")
    args = cand.a_prime * math.sqrt(rho) * (frame.f_tilde @ cand.s_r)
    return float(np.sum(log_phi(args)))


def _rotated(cand: Candidate, rotation: complex) -> Candidate:
    if rotation == 1:
        return cand
    s = complex(cand.s_r[0], cand.s_r[1]) * rotation
    return Candidate(cand.a_prime, np.array([s.real, s.imag]))


def onebit_ml_detect(
    q_now: Sequence[complex],
    q_prev: Sequence[complex],
    spec: ConstellationSpec,
    rho_table: Sequence[float],
    rotation: complex = 1.0 + 0.0j,
) -> tuple[float, complex, int]:
    """Exhaustive joint ML over all 3M candidates for one channel use.

    ``rho_table`` supplies rho per amplitude-ratio hypothesis in the order of
    :func:`amplitude_ratios`.  ``rotation`` pre-rotates every candidate by the
    known mean gain ratio of adjacent uses (see
    :func:`~dapskmimo.channel.adjacent_use_ratio`); the returned symbol is the
    unrotated candidate.  Ties keep the lowest candidate index.  Returns the
    amplitude ratio, the phase symbol, and the recovered amplitude bit (0 iff
    the winning candidate keeps the ring).
    """
    frame = realify(q_now, q_prev)
    cands = candidate_set(spec)
    best = -math.inf
    best_i = 0
    for i, cand in enumerate(cands):
        ll = onebit_loglik(frame, _rotated(cand, rotation), float(rho_table[i // spec.M]))
        if ll > best:
            best, best_i = ll, i
    won = cands[best_i]
    s_hat = complex(won.s_r[0], won.s_r[1])
    b1_hat = 0 if abs(won.a_prime * float(np.linalg.norm(won.s_r)) - 1.0) <= _B1_TOL else 1
    return won.a_prime, s_hat, b1_hat


def _sign_pattern_counts(q: np.ndarray) -> np.ndarray:
    """Histogram the +/-1 likelihood-term coefficients for every use.

    For sign labels each likelihood argument is (+/-c +/-d) for a candidate
    s = [c, d]; this reduces the per-use frame to 4 counts.  Returns an
    (n_uses-1, 4) array ordered (+c+d, +c-d, -c+d, -c-d).
    """
    s_re = np.where(q.real >= 0, 1, -1)
    s_im = np.where(q.imag >= 0, 1, -1)
    sig1, sig2 = s_re[:, 1:], s_im[:, 1:]
    p1, p2 = s_re[:, :-1], s_im[:, :-1]
    # row 0 of f_tilde contributes (sig1*p1)*c + (-sig1*p2)*d, row 1 (sig2*p2)*c + (sig2*p1)*d
    j1 = (sig1 * p1 < 0) * 2 + (-sig1 * p2 < 0)
    j2 = (sig2 * p2 < 0) * 2 + (sig2 * p1 < 0)
    counts = np.empty((q.shape[1] - 1, 4))
    for j in range(4):
        counts[:, j] = (j1 == j).sum(axis=0) + (j2 == j).sum(axis=0)
    return counts


def _candidate_score_table(
    ratios: Sequence[float],
    M: int,
    rho_table: Sequence[float],
    rotation: complex = 1.0 + 0.0j,
) -> np.ndarray:
    """log Phi of every (candidate, coefficient-pattern) combination, (len(ratios)*M, 4)."""
    vecs = _phase_vectors(M)
    if rotation != 1:
        s = (vecs[:, 0] + 1j * vecs[:, 1]) * rotation
        vecs = np.stack([s.real, s.imag], axis=1)
    c, d = vecs[:, 0], vecs[:, 1]
    vals = np.stack([c + d, c - d, -c + d, -c - d], axis=1)  # (M, 4)
    rows = []
    for a, rho in zip(ratios, rho_table):
        rows.append(log_phi(a * math.sqrt(rho) * vals))
    return np.concatenate(rows, axis=0)


def ml_detect_block(
    q: np.ndarray,
    spec: ConstellationSpec,
    rho_table: Sequence[float],
    rotation: complex = 1.0 + 0.0j,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint ML detection of all uses of a sign-quantized block at once.

    Exact same decisions as :func:`onebit_ml_detect` per use, factored through
    the 4-pattern histogram; only valid for +/-1 labels.  Returns per use
    v = 1..N-1 the amplitude-ratio index, phase index, and amplitude bit.
    """
    counts = _sign_pattern_counts(np.asarray(q, dtype=complex))
    table = _candidate_score_table(amplitude_ratios(spec), spec.M, rho_table, rotation)
    ll = counts @ table.T  # (N-1, 3M)
    cand = np.argmax(ll, axis=1)
    a_idx, s_idx = cand // spec.M, cand % spec.M
    return a_idx, s_idx, (a_idx != 0).astype(int)


def vql_phase_detect(
    q_now: Sequence[complex],
    q_prev: Sequence[complex],
    M: int,
    rho: float,
    rotation: complex = 1.0 + 0.0j,
) -> complex:
    """ML phase detection over the sign-quantized group with the ring kept.

    Maximizes the Phi product over the M phase candidates with amplitude
    ratio fixed to 1; ties keep the lowest phase index.
    """
    q_now = np.asarray(q_now, dtype=complex)
    if q_now.size == 0:
        raise ValueError("phase detection needs a nonempty antenna group")
    frame = realify(q_now, q_prev)
    vecs = _phase_vectors(M)
    best = -math.inf
    best_m = 0
    for m in range(M):
        cand = Candidate(1.0, vecs[m])
        ll = onebit_loglik(frame, _rotated(cand, rotation), rho)
        if ll > best:
            best, best_m = ll, m
    return complex(vecs[best_m, 0], vecs[best_m, 1])


def vql_phase_detect_block(
    q: np.ndarray, M: int, rho: float, rotation: complex = 1.0 + 0.0j
) -> np.ndarray:
    """Blockwise version of :func:`vql_phase_detect`; returns phase indices."""
    q = np.asarray(q, dtype=complex)
    if q.shape[0] == 0:
        raise ValueError("phase detection needs a nonempty antenna group")
    counts = _sign_pattern_counts(q)
    table = _candidate_score_table((1.0,), M, (rho,), rotation)
    return np.argmax(counts @ table.T, axis=1)


def energy_statistic(q_frame: Sequence[complex]) -> np.ndarray:
    """Per-component mean squared quantizer label over all antennas."""
    q = np.asarray(q_frame, dtype=complex)
    return np.array([np.mean(q.real**2), np.mean(q.imag**2)])


def energy_statistic_block(q: np.ndarray) -> np.ndarray:
    """Energy statistic of every use in a block, shape (n_uses, 2)."""
    q = np.asarray(q, dtype=complex)
    return np.stack([np.mean(q.real**2, axis=0), np.mean(q.imag**2, axis=0)], axis=1)


def _log_bessel_i(order: int, z: np.ndarray) -> np.ndarray:
    """log I_order(z) for z > 0, switching to the small-argument series when
    the exponentially scaled Bessel underflows."""
    z = np.asarray(z, dtype=float)
    scaled = special.ive(order, z)
    with np.errstate(divide="ignore"):
        out = np.where(scaled > 0, np.log(np.where(scaled > 0, scaled, 1.0)) + z, -np.inf)
    small = ~(scaled > 0) & (z > 0)
    if np.any(small):
        zs = z[small]
        out[small] = (
            order * np.log(zs / 2.0)
            - special.gammaln(order + 1.0)
            + np.log1p(zs * zs / (4.0 * (order + 1.0)))
        )
    return out


def _check_ncx2_args(lam, n_antennas, alpha, x_tilde, eta, sigma_eps2) -> np.ndarray:
    if not (isinstance(n_antennas, (int, np.integer)) and n_antennas >= 1):
        raise ValueError(f"n_antennas must be a positive integer, got {n_antennas!r}")
    for name, v in (("alpha", alpha), ("x_tilde", x_tilde), ("eta", eta), ("sigma_eps2", sigma_eps2)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v!r}")
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("the energy statistic must be positive")
    return lam


def ncx2_logpdf(
    lam: np.ndarray | float,
    n_antennas: int,
    alpha: float,
    x_tilde: float,
    eta: float,
    sigma_eps2: float,
) -> np.ndarray | float:
    """Log of the conditional density of the energy statistic.

    The statistic is a scaled noncentral chi-square with 2*n_antennas degrees
    of freedom; its mean is ``(alpha * x_tilde * eta)**2 + sigma_eps2`` where
    ``sigma_eps2`` is the composite (thermal plus distortion) noise power.
    Evaluated in the log domain so antenna counts up to several hundred stay
    finite.
    """
    lam = _check_ncx2_args(lam, n_antennas, alpha, x_tilde, eta, sigma_eps2)
    u = int(n_antennas)
    m = (alpha * x_tilde * eta) ** 2
    c = u / sigma_eps2
    z = 2.0 * c * np.sqrt(lam * m)
    out = (
        np.log(c)
        + 0.5 * (u - 1) * (np.log(lam) - math.log(m))
        - c * (lam + m)
        + _log_bessel_i(u - 1, z)
    )
    if np.ndim(lam) == 0:
        return float(out)
    return out


def ncx2_pdf(
    lam: np.ndarray | float,
    n_antennas: int,
    alpha: float,
    x_tilde: float,
    eta: float,
    sigma_eps2: float,
) -> np.ndarray | float:
    """Conditional density of the energy statistic (see :func:`ncx2_logpdf`)."""
    return np.exp(ncx2_logpdf(lam, n_antennas, alpha, x_tilde, eta, sigma_eps2))


@dataclass(frozen=True)
class EnergyDetectorParams:
    """Inputs of the analytic ring-change test.

    ``sigma_eps2`` is the composite per-use noise power
    ``eta**2 * sigma_z2 + distortion``; ``alpha`` is the channel-hardening
    constant (1 for the unit-variance channel).
    """

    n_antennas: int
    eta: float
    sigma_eps2: float
    psi0: float
    psi1: float
    alpha: float = 1.0


def _ring_loglik(lam: np.ndarray, x_tilde: float, p: EnergyDetectorParams) -> float:
    return float(
        np.sum(ncx2_logpdf(lam, p.n_antennas, p.alpha, x_tilde, p.eta, p.sigma_eps2))
    )


def lrt_amplitude_test(
    lambda_now: Sequence[float],
    lambda_prev: Sequence[float],
    params: EnergyDetectorParams,
) -> int:
    """Likelihood-ratio ring-change test on two consecutive energy statistics.

    Each hypothesis averages its two ring assignments with equal prior; both
    components are treated as independent.  Returns 1 for a ring change, with
    ties resolved to 0.
    """
    ln = np.asarray(lambda_now, dtype=float)
    lp = np.asarray(lambda_prev, dtype=float)
    s0p, s1p = _ring_loglik(lp, params.psi0, params), _ring_loglik(lp, params.psi1, params)
    s0n, s1n = _ring_loglik(ln, params.psi0, params), _ring_loglik(ln, params.psi1, params)
    h0 = special.logsumexp([s0p + s0n, s1p + s1n])
    h1 = special.logsumexp([s0p + s1n, s1p + s0n])
    return 1 if h1 > h0 else 0


def lrt_amplitude_block(lam: np.ndarray, params: EnergyDetectorParams) -> np.ndarray:
    """Ring-change decisions for all consecutive pairs of a block.

    ``lam`` has shape (n_uses, 2); returns (n_uses - 1,) decisions matching
    :func:`lrt_amplitude_test` pairwise.
    """
    lam = np.asarray(lam, dtype=float)
    per_ring = np.stack(
        [
            ncx2_logpdf(lam, params.n_antennas, params.alpha, x, params.eta, params.sigma_eps2).sum(axis=1)
            for x in (params.psi0, params.psi1)
        ],
        axis=1,
    )  # (n_uses, 2)
    prev, now = per_ring[:-1], per_ring[1:]
    h0 = np.logaddexp(prev[:, 0] + now[:, 0], prev[:, 1] + now[:, 1])
    h1 = np.logaddexp(prev[:, 0] + now[:, 1], prev[:, 1] + now[:, 0])
    return (h1 > h0).astype(int)
