"""Vehicle-count distributions inside the RSU coverage segment.

Headways between consecutive vehicles of one class are modelled as a
minimum gap ``x_min`` plus an exponential excess with rate ``lambda_``.
The number of vehicles on a segment of length ``d`` is the associated
renewal counting process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special


@dataclass(frozen=True)
class VehicleClass:
    """Traffic and payload parameters of one vehicle type.

    Attributes
    ----------
    lambda_ : float
        Rate of the exponential headway excess (1/m).
    x_min : float
        Minimum inter-vehicle headway (m).
    frame_len : float
        Payload length in bits.
    zeta : float
        Weight of service time against throughput in the class utility.
    deadline : float, optional
        Delay budget in seconds; carried for reporting only.
    omega : int, optional
        Maximum number of vehicles on the segment.  Derived from the
        segment length as ``floor(d / x_min)`` when omitted.
    """

    lambda_: float
    x_min: float
    frame_len: float = 8000.0
    zeta: float = 0.0
    deadline: float | None = None
    omega: int | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise ValueError(f"lambda_ must be positive, got {self.lambda_}")
        if not self.x_min > 0:
            raise ValueError(f"x_min must be positive, got {self.x_min}")
        if self.omega is not None and self.omega < 1:
            raise ValueError(f"omega must be >= 1, got {self.omega}")

    def max_count(self, d: float) -> int:
        """Road capacity ``omega`` for a segment of length ``d``."""
        if self.omega is not None:
            if self.omega * self.x_min > d + 1e-9:
                raise ValueError(
                    f"omega={self.omega} vehicles with x_min={self.x_min} "
                    f"do not fit on d={d}")
            return self.omega
        return max(1, int(math.floor(d / self.x_min + 1e-12)))


@dataclass(frozen=True)
class CountPmf:
    """Probability mass over vehicle counts ``0..len(probs)-1``."""

    probs: np.ndarray

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, n):
        if isinstance(n, (int, np.integer)) and not 0 <= n < len(self.probs):
            return 0.0
        return self.probs[n]

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def at(self, n: float) -> float:
        """Probability of the integer count nearest to ``n``."""
        return float(self[int(round(n))])


def headway_cdf(cls: VehicleClass, x):
    """Shifted-exponential headway CDF ``1 - exp(-lambda (x - x_min))``."""
    x = np.asarray(x, dtype=float)
    out = -np.expm1(-cls.lambda_ * np.maximum(x - cls.x_min, 0.0))
    return out if out.ndim else float(out)


def nfold_cdf(cls: VehicleClass, n: int, d: float) -> float:
    """CDF at ``d`` of the sum of ``n`` independent headways.

    The sum is ``n * x_min`` plus an Erlang(n, lambda) variable, so the
    CDF is the regularized lower incomplete gamma function.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 1.0 if d >= 0 else 0.0
    excess = d - n * cls.x_min
    if excess <= 0:
        return 0.0
    return float(special.gammainc(n, cls.lambda_ * excess))


def count_pmf(cls: VehicleClass, d: float) -> CountPmf:
    """Distribution of the number of class vehicles on a segment of length d.

    ``P{N(d) = n} = F_n(d) - F_{n+1}(d)`` for ``n < omega - 1``; the last
    entry ``omega - 1`` takes the remaining mass so the pmf is normalized.
    """
    omega = cls.max_count(d)
    cdf = np.array([nfold_cdf(cls, n, d) for n in range(omega + 1)])
    probs = np.empty(omega)
    probs[:-1] = cdf[:omega - 1] - cdf[1:omega]
    tail = 1.0 - probs[:-1].sum()
    if tail < -1e-9:
        raise ArithmeticError(f"negative tail mass {tail:.3e} in count pmf")
    probs[-1] = max(tail, 0.0)
    np.clip(probs, 0.0, 1.0, out=probs)
    return CountPmf(probs)


def joint_count_pmf(classes, d: float) -> CountPmf:
    """Distribution of the total vehicle count over independent classes."""
    classes = list(classes)
    if not classes:
        raise ValueError("at least one vehicle class is required")
    probs = np.array([1.0])
    for cls in classes:
        probs = np.convolve(probs, count_pmf(cls, d).probs)
    return CountPmf(probs / probs.sum())


def busy_mass_ratio(joint: CountPmf) -> float:
    """``sum_{n>=1} pi_n / (1 - pi_0)`` over the total-count distribution.

    Equal to one for any normalized pmf with ``pi_0 < 1``; kept as a
    function so scenarios can override it explicitly.
    """
    p0 = joint.probs[0]
    if p0 >= 1.0:
        return 1.0
    return float(joint.probs[1:].sum() / (1.0 - p0))


def sample_positions(cls: VehicleClass, d: float, seed=None) -> np.ndarray:
    """Vehicle positions on ``[0, d]`` from cumulative headways."""
    if not d > 0:
        raise ValueError("d must be positive")
    rng = np.random.default_rng(seed)
    positions = []
    pos = 0.0
    while True:
        pos += cls.x_min + rng.exponential(1.0 / cls.lambda_)
        if pos > d:
            break
        positions.append(pos)
    return np.array(positions)


def sample_counts(cls: VehicleClass, d: float, size: int, seed=None,
                  chunk: int = 20_000) -> np.ndarray:
    """Monte Carlo vehicle counts for ``size`` independent road realizations."""
    rng = np.random.default_rng(seed)
    width = int(math.floor(d / cls.x_min)) + 1
    counts = np.empty(size, dtype=np.int64)
    for start in range(0, size, chunk):
        stop = min(start + chunk, size)
        gaps = cls.x_min + rng.exponential(1.0 / cls.lambda_, (stop - start, width))
        counts[start:stop] = (np.cumsum(gaps, axis=1) <= d).sum(axis=1)
    return counts


def empirical_pmf(counts, length: int) -> np.ndarray:
    hist = np.bincount(np.asarray(counts), minlength=length).astype(float)
    return hist / hist.sum()


def total_variation(p, q) -> float:
    p, q = np.asarray(p, float), np.asarray(q, float)
    size = max(len(p), len(q))
    p = np.pad(p, (0, size - len(p)))
    q = np.pad(q, (0, size - len(q)))
    return 0.5 * float(np.abs(p - q).sum())
