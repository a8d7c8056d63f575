"""Evaluation statistics: bias, noise, FAR/FRR, Hamming-distance and delay distributions."""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .arbiterpuf import delay_difference, random_challenges, weights
from .delaymodel import StageDeltas
from .errors import InputError


def bias(responses):
    """(#ones - #zeros) / (#ones + #zeros)."""
    r = np.asarray(responses).ravel()
    if r.size == 0:
        raise InputError("bias of an empty response set is undefined")
    ones = int(np.count_nonzero(r))
    return (2 * ones - r.size) / r.size


@dataclass(frozen=True, eq=False)
class NoiseReport:
    metastable_count: int
    fractions: np.ndarray
    noise: np.ndarray
    total: float


def noise_fraction(fractions):
    f = np.asarray(fractions, dtype=float).ravel()
    if f.size and (f.min() < 0 or f.max() > 1):
        raise InputError("fractions of ones must lie in [0, 1]")
    p = 2 * f * (1 - f)
    total = float(p.sum() / f.size) if f.size else 0.0
    return NoiseReport(int(f.size), f, p, total)


def binary_entropy(p):
    if p in (0, 1):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def log_binom_pmf(n, k, p):
    """log P(X = k) for X ~ Binomial(n, p), vectorised over k; -inf where impossible."""
    k = np.asarray(k, dtype=float)
    log_comb = math.lgamma(n + 1) - np.vectorize(math.lgamma)(k + 1) - np.vectorize(math.lgamma)(n - k + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        hits = np.where(k == 0, 0.0, k * np.log(p)) if p > 0 else np.where(k == 0, 0.0, -np.inf)
        misses = np.where(k == n, 0.0, (n - k) * np.log1p(-p)) if p < 1 else np.where(k == n, 0.0, -np.inf)
    return log_comb + hits + misses


def _tail(n, p, ks):
    if len(ks) == 0:
        return 0.0
    return float(min(1.0, math.exp(logsumexp(log_binom_pmf(n, ks, p)))))


def far(n, p, t):
    """P(at most t of n bits mismatch) when each mismatches independently with probability p."""
    if not 0 <= p <= 1:
        raise InputError("p must lie in [0, 1]")
    if not 0 <= t <= n:
        raise InputError("t must lie in [0, n]")
    return _tail(n, p, np.arange(0, t + 1))


def frr_binomial(n, mean_hd, t, strict_accept=False):
    """Binomial bound on the false rejection rate for a per-bit flip rate ``mean_hd / n``.

    With ``strict_accept=False`` a fingerprint is accepted at ``HD <= t`` and the
    result is P(HD > t).  ``strict_accept=True`` accepts only ``HD < t`` and
    returns P(HD >= t).
    """
    if not 0 <= mean_hd <= n:
        raise InputError("mean_hd must lie in [0, n]")
    if not 0 <= t <= n:
        raise InputError("t must lie in [0, n]")
    first = t if strict_accept else t + 1
    return _tail(n, mean_hd / n, np.arange(first, n + 1))


def format_probability(value):
    return f"{value:.2e}"


def hamming_distance(a, b):
    a = np.asarray(getattr(a, "bits", a))
    b = np.asarray(getattr(b, "bits", b))
    if a.shape != b.shape:
        raise InputError(f"cannot compare fingerprints of length {a.size} and {b.size}")
    return int(np.count_nonzero(a != b))


@dataclass(frozen=True, eq=False)
class HammingStats:
    sample_count: int
    length: int
    mean: float
    std_dev: float
    histogram: np.ndarray
    skewness: float
    gaussian_fit: tuple = field(default=(0.0, 0.0))
    binomial_p: float = 0.0

    def to_dict(self):
        return {
            "sample_count": self.sample_count,
            "length": self.length,
            "mean": self.mean,
            "std_dev": self.std_dev,
            "skewness": self.skewness,
            "gaussian_fit": {"mean": self.gaussian_fit[0], "std_dev": self.gaussian_fit[1]},
            "binomial_fit": {"p": self.binomial_p, "entropy_bits": binary_entropy(min(self.binomial_p, 1.0))},
            "histogram": [int(v) for v in self.histogram],
        }


def distance_stats(distances, length):
    d = np.asarray(distances, dtype=np.int64)
    if d.size == 0:
        raise InputError("no distances")
    hist = np.bincount(d, minlength=length + 1)
    mean = float(d.mean())
    std = float(d.std())
    skew = float(np.mean((d - mean) ** 3) / std**3) if std > 0 else 0.0
    return HammingStats(int(d.size), length, mean, std, hist, skew, (mean, std), mean / length)


def hamming_stats(pairs):
    pairs = list(pairs)
    if not pairs:
        raise InputError("no fingerprint pairs")
    length = len(getattr(pairs[0][0], "bits", pairs[0][0]))
    return distance_stats([hamming_distance(a, b) for a, b in pairs], length)


@dataclass(frozen=True, eq=False)
class DelayDistribution:
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    std_dev: float

    def to_dict(self):
        return {"gaussian_fit": {"mean": self.mean, "std_dev": self.std_dev}, "bins": len(self.counts)}

    def rows(self):
        return [
            {"bin_low": float(lo), "bin_high": float(hi), "count": int(c)}
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts)
        ]


def delay_distribution(source, sample_size=50_000, seed=0, bins=80):
    """Delay differences over random challenges with a moment-based Gaussian fit.

    ``source`` is a learned model, a weight vector or a :class:`StageDeltas`.
    """
    if sample_size < 100:
        raise InputError("sample_size must be at least 100")
    if isinstance(source, StageDeltas):
        omega = weights(source)
    else:
        omega = np.asarray(getattr(source, "omega_hat", source), dtype=float)
    challenges = random_challenges(seed, sample_size, omega.size - 1, "delaydist")
    d = delay_difference(omega, challenges)
    mean, std = float(d.mean()), float(d.std())
    if std == 0:
        edges = np.array([mean - 0.5, mean + 0.5])
        counts = np.array([d.size])
    else:
        counts, edges = np.histogram(d, bins=bins)
    return DelayDistribution(counts, edges, mean, std)


def histogram_csv(rows, header_lines=()):
    """CSV text, one row per histogram bin, preceded by ``#`` comment lines."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()
