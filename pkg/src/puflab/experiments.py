"""Characterization experiments built from the simulator, the attack and the metrics."""
import itertools
from dataclasses import dataclass

import numpy as np

from . import prng
from .arbiterpuf import evaluate_batch, fingerprint, puf_delays, random_challenges, random_layout, respond
from .attack import AttackConfig, collect_crps, extract_delta_deltas, prediction_error, profile_distance, train
from .delaymodel import sample_chip
from .metrics import bias, distance_stats, hamming_distance, noise_fraction
from .mselect import DEFAULT_REPETITIONS, candidate_challenges, fraction_of_ones, select_empirical


def layouts(fabric, count, seed=0, n_stages=64):
    return [random_layout(fabric, prng.derive_seed(seed, "experiment-layout", k), n_stages) for k in range(count)]


def chips(fabric, count, seed=0):
    return [sample_chip(fabric, prng.derive_seed(seed, "experiment-chip", k), f"chip-{seed}-{k}") for k in range(count)]


def bias_sweep(fabric, chip, layout_list, n_challenges=100_000, seed=0):
    out = []
    for layout in layout_list:
        c = random_challenges(seed, n_challenges, layout.n_stages, "bias", layout.layout_id)
        out.append(bias(evaluate_batch(fabric, chip, layout, c, eval_seed=seed)))
    return out


def metastable_rate(fabric, chip, layout_list, n_candidates=100_000, repetitions=DEFAULT_REPETITIONS, seed=0):
    """Fraction of random challenges that flip at least once in ``repetitions`` applications."""
    found = total = 0
    for layout in layout_list:
        cand = candidate_challenges(layout, n_candidates, seed)
        found += len(select_empirical(fabric, chip, layout, 0, repetitions, seed, candidates=cand))
        total += len(cand)
    return found / total


def noise_report(fabric, chip, layout_list, n_candidates=10_000, repetitions=DEFAULT_REPETITIONS, seed=0):
    """Noise of all metastable bits found among random challenges, pooled over layouts."""
    fractions = []
    for layout in layout_list:
        cand = candidate_challenges(layout, n_candidates, seed)
        fractions.append(select_empirical(fabric, chip, layout, 0, repetitions, seed, candidates=cand).fractions)
    return noise_fraction(np.concatenate(fractions))


def cross_chip_transfer(fabric, chip_a, other_chips, layout_list, n_candidates=50_000,
                        repetitions=DEFAULT_REPETITIONS, seed=0):
    """Fraction of chip-A m-challenges that are also metastable on the other chips."""
    hits = total = 0
    for layout in layout_list:
        mset = select_empirical(fabric, chip_a, layout, n_candidates, repetitions, seed)
        for chip in other_chips:
            f = fraction_of_ones(fabric, chip, layout, mset.challenges, repetitions, seed + 1)
            hits += int(np.count_nonzero((f > 0) & (f < 1)))
            total += len(mset)
    return hits / total if total else 0.0


def reference_mchallenges(fabric, reference_chip, layout, n_mchallenges=100, n_candidates=50_000,
                          repetitions=DEFAULT_REPETITIONS, seed=0, temperature=None):
    mset = select_empirical(fabric, reference_chip, layout, n_candidates, repetitions, seed, temperature)
    return mset.take(n_mchallenges)


def uniqueness(fabric, reference_chip, fielded_chips, layout_list, n_mchallenges=100, seed=0):
    """Inter-chip fingerprint distances with m-challenges chosen on a reference chip.

    For each layout every pair of fielded chips contributes one distance.
    """
    distances = []
    for layout in layout_list:
        m = reference_mchallenges(fabric, reference_chip, layout, n_mchallenges, seed=seed).challenges
        prints = [fingerprint(fabric, c, layout, m, eval_seed=prng.derive_seed(seed, "uniq", c.chip_seed)) for c in fielded_chips]
        distances += [hamming_distance(a, b) for a, b in itertools.combinations(prints, 2)]
    return distance_stats(distances, n_mchallenges)


@dataclass(frozen=True)
class DriftResult:
    same_mean: float
    same_sem: float
    drift_mean: float
    drift_sem: float

    @property
    def separation(self):
        return (self.drift_mean - self.same_mean) / float(np.hypot(self.same_sem, self.drift_sem))


def temperature_drift(fabric, chip, layout_list, low=5.0, delta=55.0, n_mchallenges=100, repeats=10, seed=0):
    """Fingerprint distances at equal temperature versus ``low`` against ``low + delta``.

    The m-challenges are selected on ``chip`` itself at ``low``.  Distances are
    in bits per fingerprint; the spreads are standard errors of the means.
    """
    same, drift = [], []
    for layout in layout_list:
        m = reference_mchallenges(fabric, chip, layout, n_mchallenges, seed=seed, temperature=low).challenges
        for r in range(repeats):
            a = fingerprint(fabric, chip, layout, m, low, prng.derive_seed(seed, "drift-a", r))
            b = fingerprint(fabric, chip, layout, m, low, prng.derive_seed(seed, "drift-b", r))
            h = fingerprint(fabric, chip, layout, m, low + delta, prng.derive_seed(seed, "drift-h", r))
            same.append(hamming_distance(a, b))
            drift.append(hamming_distance(a, h))
    same, drift = np.array(same, float), np.array(drift, float)
    sem = lambda x: float(x.std(ddof=1) / np.sqrt(x.size))
    return DriftResult(float(same.mean()), sem(same), float(drift.mean()), sem(drift))


def attack_errors(fabric, chip, layout, sizes, config=AttackConfig(), test_count=10_000, seed=0):
    """Held-out prediction error for each training-set size (noiseless responses)."""
    pool = collect_crps(fabric, chip, layout, max(sizes), seed, noisy=False)
    test = collect_crps(fabric, chip, layout, test_count, prng.derive_seed(seed, "heldout"), noisy=False)
    return {size: prediction_error(train(pool.subset(size), config), test) for size in sizes}


@dataclass(frozen=True)
class CharacterizationResult:
    chip_distance: float
    layout_distance: float

    @property
    def ratio(self):
        return self.layout_distance / self.chip_distance


def characterization_ratio(fabric, chip_list, layout_list, n_crps=50_000, config=AttackConfig(epochs=200), seed=0):
    """Compare learned delta-delta profiles across chips (same layout) and across layouts (same chip).

    Gauge-fixed profiles accumulate along the chain, so their distances vary a
    lot from layout to layout; use ten or more layouts for a stable ratio.
    """
    profiles = {}
    for li, layout in enumerate(layout_list):
        for ci, chip in enumerate(chip_list):
            crps = collect_crps(fabric, chip, layout, n_crps, prng.derive_seed(seed, "char", li), noisy=False)
            profiles[li, ci] = extract_delta_deltas(train(crps, config))
    chip_d = [
        profile_distance(profiles[li, a], profiles[li, b])
        for li in range(len(layout_list))
        for a, b in itertools.combinations(range(len(chip_list)), 2)
    ]
    layout_d = [
        profile_distance(profiles[a, ci], profiles[b, ci])
        for ci in range(len(chip_list))
        for a, b in itertools.combinations(range(len(layout_list)), 2)
    ]
    return CharacterizationResult(float(np.mean(chip_d)), float(np.mean(layout_d)))


def noiseless_disagreement(fabric, chip_a, chip_b, layout, n_challenges=20_000, seed=0):
    c = random_challenges(seed, n_challenges, layout.n_stages, "disagree", layout.layout_id)
    ra = respond(puf_delays(fabric, chip_a, layout, c))
    rb = respond(puf_delays(fabric, chip_b, layout, c))
    return float(np.mean(ra != rb))
