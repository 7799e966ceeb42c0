"""Link-state regions around the RSU and frame-time generating functions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special


class InvalidModelError(ValueError):
    pass


@dataclass(frozen=True)
class RegionModel:
    """Concentric link-state regions.

    ``radii[0]`` is the coverage radius and radii decrease strictly
    inward; region ``f`` is the annulus ``(radii[f+1], radii[f]]`` with
    the innermost region extending to the RSU.  ``rates`` holds the
    transfer rate of each region in bits/slot, either as a vector of
    length N or as a (classes, N) matrix.
    """

    radii: tuple
    rates: np.ndarray
    d: float

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        if radii.ndim != 1 or len(radii) == 0:
            raise InvalidModelError("radii must be a nonempty vector")
        if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
            raise InvalidModelError(f"radii must be positive and strictly decreasing: {radii}")
        if radii[0] > self.d:
            raise InvalidModelError(f"coverage radius {radii[0]} exceeds road length {self.d}")
        rates = np.asarray(self.rates, dtype=float)
        if rates.shape[-1] != len(radii):
            raise InvalidModelError(
                f"rates last dimension {rates.shape[-1]} != number of regions {len(radii)}")
        if np.any(rates <= 0):
            raise InvalidModelError("region rates must be strictly positive")
        if np.any(np.diff(rates, axis=-1) < 0):
            warnings.warn("region rates decrease towards the RSU", stacklevel=2)
        object.__setattr__(self, "radii", tuple(radii))
        object.__setattr__(self, "rates", rates)

    @property
    def n_regions(self) -> int:
        return len(self.radii)


@dataclass(frozen=True)
class RegionProbs:
    p: np.ndarray
    coverage: float = 1.0

    def __iter__(self):
        return iter(self.p)

    def __len__(self):
        return len(self.p)


def position_cdf(x, d: float):
    """CDF of the OBU-to-RSU distance on a segment of length ``d``."""
    if not d > 0:
        raise ValueError("d must be positive")
    x = np.asarray(x, dtype=float)
    inside = np.clip(x, np.finfo(float).tiny, d)
    u = (inside / d) ** 2
    val = u * (1.0 + 2.0 * (np.log(d) - np.log(inside)))
    out = np.where(x <= 0, 0.0, np.where(x > d, 1.0, val))
    return out if out.ndim else float(out)


def region_probabilities(model: RegionModel) -> RegionProbs:
    """Occupancy probability of every region, conditioned on coverage.

    Differences of the position CDF at consecutive radii, renormalized
    over the covered part of the road; ``coverage`` keeps the raw mass.
    """
    edges = np.append(np.asarray(model.radii), 0.0)
    cdf = position_cdf(edges, model.d)
    raw = cdf[:-1] - cdf[1:]
    coverage = float(cdf[0])
    return RegionProbs(raw / raw.sum(), coverage)


def sample_distances(d: float, size: int, seed=None) -> np.ndarray:
    """Draw OBU distances from the position law.

    If U, V are independent uniforms on (0, 1) then ``d * sqrt(U V)`` has
    CDF ``(x/d)^2 (1 + 2 ln(d/x))``, which is the position CDF.
    """
    rng = np.random.default_rng(seed)
    return d * np.sqrt(rng.random(size) * rng.random(size))


def packet_success_matrix_entry(c_f: int, u: int, p_s: float) -> float:
    """Probability that ``c_f`` packets get through within ``c_f u`` attempts.

    ``sum_{c=c_f}^{c_f u} C(c-1, c_f-1) p_s^c_f (1-p_s)^(c-c_f)`` for
    ``u >= 1``, zero otherwise: the ``c_f``-th success lands on attempt
    ``c``.  Binomials are accumulated in the log domain.
    """
    if c_f < 1:
        raise ValueError("c_f must be >= 1")
    if not 0.0 <= p_s <= 1.0:
        raise ValueError("p_s must be a probability")
    if u < 1:
        return 0.0
    c = np.arange(c_f, c_f * u + 1)
    if p_s == 1.0:
        return 1.0
    if p_s == 0.0:
        return 0.0
    log_terms = (special.gammaln(c) - special.gammaln(c_f) - special.gammaln(c - c_f + 1)
                 + c_f * np.log(p_s) + (c - c_f) * np.log1p(-p_s))
    return float(np.exp(special.logsumexp(log_terms)))


def average_rate(alpha, caps, success_diag) -> float:
    """Average packet transfer rate ``sum_f c_f * alpha_f * C_hat(f, f)``.

    Parameters
    ----------
    alpha : array_like
        Stationary distribution over regions.
    caps : array_like
        Packets ``c_f`` per transmission period in each region.
    success_diag : array_like
        Diagonal of the success matrix, one entry per region.
    """
    alpha = np.asarray(alpha, float)
    caps = np.asarray(caps, float)
    diag = np.asarray(success_diag, float)
    if not (alpha.shape == caps.shape == diag.shape):
        raise ValueError(f"dimension mismatch: {alpha.shape}, {caps.shape}, {diag.shape}")
    return float(np.sum(caps * alpha * diag))


def frame_time_pgf(region_probs, rates, frame_lens, z, rts=0.0, cts=0.0, sifs=0.0, ack=0.0):
    """PGF of the successful frame time ``z^(rts+cts+3 sifs) sum_f P_f z^((l_f+ack)/C_f)``.

    Fractional exponents are evaluated as real powers.
    """
    p = np.asarray(getattr(region_probs, "p", region_probs), float)
    rates = np.asarray(rates, float)
    if np.any(rates <= 0):
        raise InvalidModelError("zero or negative rate in frame-time PGF")
    lens = np.broadcast_to(np.asarray(frame_lens, float), p.shape)
    exps = (lens + ack) / rates
    return z ** (rts + cts + 3 * sifs) * np.sum(p * np.power(z, exps))


def frame_time_mean(region_probs, rates, frame_lens, rts=0.0, cts=0.0, sifs=0.0, ack=0.0) -> float:
    p = np.asarray(getattr(region_probs, "p", region_probs), float)
    lens = np.broadcast_to(np.asarray(frame_lens, float), p.shape)
    return float(rts + cts + 3 * sifs + np.sum(p * (lens + ack) / np.asarray(rates, float)))


def collision_time_pgf(z, rts=0.0, cts=0.0, sifs=0.0):
    return z ** (rts + cts + sifs)
