"""Independent numerical oracles backing the derived constants and checks.

Each oracle recomputes a quantity through a route that does not share code
with the implementation it validates: Monte-Carlo estimation for the
quantizer constants and the sign-pattern likelihood, quadrature for the
energy-statistic density, exhaustive enumeration for the phase map.
"""

import math

import numpy as np
from scipy import integrate, special

from .detect import Candidate, log_phi, ncx2_pdf, onebit_loglik, realify
from .modem import psk_map
from .quantize import sign_quantize

__all__ = [
    "bussgang_mc",
    "likelihood_fidelity_mc",
    "ncx2_quadrature",
    "logphi_max_error",
    "psk_spacing",
]


def bussgang_mc(n_samples: int = 1_000_000, seed: int = 0, sigma_y2: float = 1.0) -> dict:
    """Monte-Carlo estimate of the sign-quantizer linearization constants.

    The gain is the LMMSE coefficient of the unit-power (1/sqrt(2)-scaled)
    labels; the distortion power is the label power E|q|^2 minus the part
    explained by the gain.  Also reports the orthogonality residual
    E[(q/sqrt(2) - eta*y) y*] with its standard error.
    """
    rng = np.random.default_rng(seed)
    scale = math.sqrt(sigma_y2 / 2.0)
    y = scale * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples))
    q = sign_quantize(y)
    power_y = float(np.mean(np.abs(y) ** 2))
    corr = np.real(q * np.conj(y)) / math.sqrt(2.0)
    eta_hat = float(np.mean(corr)) / power_y
    sigma_eps2_hat = float(np.mean(np.abs(q) ** 2)) - eta_hat**2 * power_y
    resid = np.real((q / math.sqrt(2.0) - eta_hat * y) * np.conj(y))
    return {
        "eta_hat": eta_hat,
        "sigma_eps2_hat": sigma_eps2_hat,
        "orthogonality_residual": float(np.mean(resid)),
        "orthogonality_stderr": float(np.std(resid) / math.sqrt(n_samples)),
    }


def likelihood_fidelity_mc(
    rho: float,
    n_draws: int = 1_000_000,
    seed: int = 0,
    a_prime: float = 1.0,
    phase: float = math.pi / 4,
) -> dict:
    """Empirical probability of a fixed two-antenna sign pattern vs exp(loglik).

    Draws the real-domain observation model with per-component noise variance
    1/rho, counts how often both antennas quantize to 1+1j, and compares with
    the likelihood the detector assigns to exactly that pattern.
    """
    rng = np.random.default_rng(seed)
    q_prev = np.array([1 + 1j, -1 + 1j])
    target = np.array([1 + 1j, 1 + 1j])
    s_r = np.array([math.cos(phase), math.sin(phase)])

    f = np.empty((2, 2, 2))
    f[:, 0, 0], f[:, 0, 1] = q_prev.real, -q_prev.imag
    f[:, 1, 0], f[:, 1, 1] = q_prev.imag, q_prev.real
    mean = a_prime * (f @ s_r)  # (2 antennas, 2 components)

    noise = rng.standard_normal((n_draws, 2, 2)) / math.sqrt(rho)
    raw = mean[None, :, :] + noise
    hits = np.all(raw >= 0, axis=(1, 2))  # target pattern is all-positive
    p_hat = float(np.mean(hits))

    frame = realify(target, q_prev)
    p_model = math.exp(onebit_loglik(frame, Candidate(a_prime, s_r), rho))
    return {
        "p_hat": p_hat,
        "p_model": p_model,
        "stderr": math.sqrt(max(p_hat * (1 - p_hat), 1e-300) / n_draws),
    }


def ncx2_quadrature(
    n_antennas: int,
    alpha: float = 1.0,
    x_tilde: float = 1.0,
    eta: float = 0.8,
    sigma_eps2: float = 1.4,
) -> dict:
    """Adaptive-quadrature total mass and mean of the energy-statistic density."""
    mean_ref = (alpha * x_tilde * eta) ** 2 + sigma_eps2

    def pdf(lam):
        return ncx2_pdf(lam, n_antennas, alpha, x_tilde, eta, sigma_eps2)

    def split_quad(f):
        lo, _ = integrate.quad(f, 0.0, mean_ref, limit=200)
        hi, _ = integrate.quad(f, mean_ref, np.inf, limit=200)
        return lo + hi

    return {
        "integral": split_quad(pdf),
        "mean": split_quad(lambda t: t * pdf(t)),
        "mean_reference": mean_ref,
    }


def logphi_max_error(lo: float = -8.0, hi: float = 8.0, n_points: int = 2001) -> float:
    """Largest deviation of log_phi from log(0.5 * erfc(-x / sqrt(2)))."""
    xs = np.linspace(lo, hi, n_points)
    ref = np.array([math.log(0.5 * math.erfc(-x / math.sqrt(2.0))) for x in xs])
    return float(np.max(np.abs(log_phi(xs) - ref)))


def psk_spacing(M: int = 8) -> dict:
    """Exhaustive check that the M bit words map to M evenly spaced points."""
    k = M.bit_length() - 1
    points = []
    for word in range(M):
        bits = [(word >> (k - 1 - i)) & 1 for i in range(k)]
        points.append(psk_map(bits, M))
    angles = np.sort(np.angle(points))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))
    return {
        "distinct": len({round(a, 12) for a in angles}),
        "max_gap": float(np.max(gaps)),
        "min_gap": float(np.min(gaps)),
        "expected_gap": 2 * math.pi / M,
    }
