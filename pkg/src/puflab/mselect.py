"""Selection of m-challenges: challenges whose response is metastable on a reference chip."""
import json
from dataclasses import dataclass, field

import numpy as np

from . import prng
from .arbiterpuf import (
    challenge_from_hex,
    challenge_to_hex,
    evaluate_batch,
    puf_delays,
    random_challenges,
)
from .attack import predicted_delay
from .errors import InputError

EMPIRICAL = "empirical"
MODEL_BASED = "model-based"
DEFAULT_REPETITIONS = 100_000
DEFAULT_BOUND = 0.2


@dataclass(frozen=True, eq=False)
class MChallengeSet:
    layout_id: str
    challenges: np.ndarray
    fractions: np.ndarray  # NaN where nothing was measured (model-based selection)
    method: str
    params: dict = field(default_factory=dict)
    predicted: np.ndarray = None

    def __post_init__(self):
        n = self.params.get("n_stages", 64)
        c = np.asarray(self.challenges, dtype=np.uint8).reshape(-1, n) if len(self.challenges) else np.zeros((0, n), np.uint8)
        object.__setattr__(self, "challenges", c)
        object.__setattr__(self, "fractions", np.asarray(self.fractions, dtype=float).reshape(-1))
        if self.fractions.size != len(c):
            raise InputError("one fraction per challenge required")

    def __len__(self):
        return len(self.challenges)

    def take(self, count):
        return MChallengeSet(
            self.layout_id,
            self.challenges[:count],
            self.fractions[:count],
            self.method,
            dict(self.params),
            None if self.predicted is None else self.predicted[:count],
        )

    def hex_challenges(self):
        return [challenge_to_hex(c) for c in self.challenges]

    def to_dict(self):
        items = []
        for i, c in enumerate(self.challenges):
            item = {"challenge": challenge_to_hex(c)}
            f = self.fractions[i]
            item["fraction_of_ones"] = None if np.isnan(f) else float(f)
            if self.predicted is not None:
                item["predicted_delay"] = float(self.predicted[i])
            items.append(item)
        return {"layout_id": self.layout_id, "method": self.method, "params": self.params, "challenges": items}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        try:
            params = dict(data.get("params", {}))
            n = int(params.get("n_stages", 64))
            items = data["challenges"]
            challenges = [challenge_from_hex(item["challenge"], n) for item in items]
            fractions = [np.nan if item.get("fraction_of_ones") is None else item["fraction_of_ones"] for item in items]
            predicted = None
            if items and "predicted_delay" in items[0]:
                predicted = np.array([item["predicted_delay"] for item in items], dtype=float)
            return cls(data["layout_id"], np.array(challenges, dtype=np.uint8), fractions, data["method"], params, predicted)
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed m-challenge set: {exc}") from None


def one_probability(fabric, chip, layout, challenges, temperature=None):
    """Per-evaluation probability of a 1: P(delay + jitter > 0)."""
    delays = puf_delays(fabric, chip, layout, challenges, temperature)
    if fabric.spec.sigma_jitter == 0:
        return (delays > 0).astype(float)
    # jitter is symmetric, so P(d + eta > 0) = P(eta < d)
    return fabric.jitter_cdf(delays)


def fraction_of_ones(fabric, chip, layout, challenges, repetitions=DEFAULT_REPETITIONS, seed=0,
                     temperature=None, direct=False):
    """Fraction of ones over ``repetitions`` independent evaluations of each challenge.

    The count of ones in K independent noisy evaluations is Binomial(K, p) with p
    the per-evaluation probability of a 1, so by default it is drawn in one step.
    ``direct=True`` instead evaluates every repetition with its own jitter draw.
    """
    if repetitions < 1:
        raise InputError("repetitions must be at least 1")
    challenges = np.atleast_2d(np.asarray(challenges, dtype=np.uint8))
    if direct:
        ones = np.zeros(len(challenges), dtype=np.int64)
        for rep in range(repetitions):
            ones += evaluate_batch(fabric, chip, layout, challenges, temperature, prng.derive_seed(seed, rep))
        return ones / repetitions
    p = one_probability(fabric, chip, layout, challenges, temperature)
    rng = prng.keyed_rng(fabric.spec.master_seed, prng.ROLE_JITTER, "fraction", chip.chip_seed, layout.layout_id, seed)
    return rng.binomial(repetitions, p) / repetitions


def candidate_challenges(layout, count, seed):
    """Uniformly random, de-duplicated candidates, in draw order."""
    raw = random_challenges(seed, count, layout.n_stages, "candidates", layout.layout_id)
    _, first = np.unique(raw, axis=0, return_index=True)
    return raw[np.sort(first)]


def select_empirical(fabric, reference_chip, layout, candidate_count, repetitions=DEFAULT_REPETITIONS, seed=0,
                     temperature=None, candidates=None):
    if candidates is None:
        if candidate_count < 1:
            raise InputError("candidate_count must be at least 1")
        candidates = candidate_challenges(layout, candidate_count, seed)
    f = fraction_of_ones(fabric, reference_chip, layout, candidates, repetitions, seed, temperature)
    keep = (f > 0) & (f < 1)
    return MChallengeSet(
        layout.layout_id,
        candidates[keep],
        f[keep],
        EMPIRICAL,
        {"repetitions": repetitions, "candidates": len(candidates), "n_stages": layout.n_stages,
         "reference_chip": reference_chip.chip_id},
    )


def select_model_based(model, candidates, bound=DEFAULT_BOUND, layout_id=""):
    if not bound >= 0:
        raise InputError("the bound b must be non-negative")
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.uint8))
    d = predicted_delay(model, candidates)
    keep = np.abs(d) < bound
    return MChallengeSet(
        layout_id,
        candidates[keep],
        np.full(int(keep.sum()), np.nan),
        MODEL_BASED,
        {"bound": float(bound), "candidates": len(candidates), "n_stages": candidates.shape[1]},
        d[keep],
    )
