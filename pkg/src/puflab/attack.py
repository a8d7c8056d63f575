"""Logistic-regression modeling attack trained with RPROP, and delay-profile extraction."""
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import prng
from .arbiterpuf import (
    challenge_from_hex,
    challenge_to_hex,
    delay_difference,
    evaluate_batch,
    features,
    puf_delays,
    random_challenges,
    respond,
    weights,
)
from .delaymodel import REFERENCE_DELAY_STD, StageDeltas, stage_deltas
from .errors import InputError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CrpSet:
    layout_id: str
    challenges: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.challenges, dtype=np.uint8))
        r = np.asarray(self.responses, dtype=np.uint8).ravel()
        if c.shape[0] == 0 or c.shape[0] != r.size:
            raise InputError("a CRP set needs the same, non-zero number of challenges and responses")
        object.__setattr__(self, "challenges", c)
        object.__setattr__(self, "responses", r)

    @property
    def n(self):
        return self.challenges.shape[1]

    def __len__(self):
        return self.responses.size

    def subset(self, count):
        return CrpSet(self.layout_id, self.challenges[:count], self.responses[:count])

    def to_text(self):
        lines = [json.dumps({"layout_id": self.layout_id, "n": self.n})]
        lines += [f"{challenge_to_hex(c)} {int(r)}" for c, r in zip(self.challenges, self.responses)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise InputError("empty CRP file")
        try:
            header = json.loads(lines[0])
            n = int(header["n"])
            layout_id = header["layout_id"]
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"bad CRP header: {exc}") from None
        challenges, responses = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise InputError(f"CRP line {lineno}: expected '<challenge-hex> <bit>'")
            challenges.append(challenge_from_hex(parts[0], n))
            responses.append(int(parts[1]))
        return cls(layout_id, np.array(challenges, dtype=np.uint8).reshape(-1, n), np.array(responses))


@dataclass(frozen=True)
class AttackConfig:
    epochs: int = 100
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    step_init: float = 0.1
    step_min: float = 1e-6
    step_max: float = 50.0
    init_seed: int = 0
    # stop as soon as the training error is at or below this fraction
    convergence_threshold: float = 0.0
    # rescale the learned weights so predicted delays have this std-dev over
    # random challenges; None keeps the raw logistic-regression scale
    delay_scale: float = REFERENCE_DELAY_STD

    def __post_init__(self):
        if not self.eta_plus > 1 > self.eta_minus > 0:
            raise InputError("RPROP factors must satisfy eta_plus > 1 > eta_minus > 0")
        if not 0 < self.step_min <= self.step_init <= self.step_max:
            raise InputError("RPROP steps must satisfy 0 < step_min <= step_init <= step_max")
        if self.epochs < 1:
            raise InputError("epochs must be positive")


@dataclass(frozen=True, eq=False)
class LearnedModel:
    omega_hat: np.ndarray
    train_error: float
    iterations_used: int
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "omega_hat", np.asarray(self.omega_hat, dtype=float))

    @property
    def n(self):
        return self.omega_hat.size - 1

    def scaled(self, factor):
        return LearnedModel(self.omega_hat * factor, self.train_error, self.iterations_used, self.degenerate)

    def to_json(self):
        """Model export: a JSON array of the n+1 weights."""
        return json.dumps([float(v) for v in self.omega_hat])

    @classmethod
    def from_json(cls, text, train_error=math.nan, iterations_used=0):
        values = json.loads(text)
        if not isinstance(values, list) or len(values) < 2:
            raise InputError("model file must be a JSON array of at least two numbers")
        return cls(np.array(values, dtype=float), train_error, iterations_used)


@dataclass(frozen=True, eq=False)
class DeltaDeltaProfile:
    """Per-stage ``delta0 - delta1`` under the gauge ``delta0_i = 0`` for ``i < n``, plus ``delta0_n``."""

    delta_delta: np.ndarray
    delta0_last: float

    def to_stage_deltas(self):
        dd = np.asarray(self.delta_delta, dtype=float)
        d0 = np.zeros_like(dd)
        d0[-1] = self.delta0_last
        return StageDeltas(d0, d0 - dd)


def _loss_gradient(phi, signed, omega):
    margin = signed * (phi @ omega)
    # d/dm log(1 + exp(-m)) = -1 / (1 + exp(m)), written via tanh to stay finite
    coeff = -0.5 * (1.0 - np.tanh(margin / 2.0)) * signed
    return phi.T @ coeff / phi.shape[0]


def train(crps, config=AttackConfig()):
    """Fit ``omega`` by minimising the logistic loss with iRprop- updates."""
    n = crps.n
    if len(crps) < n + 1:
        log.warning("training on %d CRPs for %d weights; the model is underdetermined", len(crps), n + 1)
    phi = features(crps.challenges).astype(float)
    labels = crps.responses.astype(bool)
    signed = np.where(labels, 1.0, -1.0)

    rng = prng.keyed_rng(config.init_seed, prng.ROLE_INIT, n)
    omega = 0.01 * rng.standard_normal(n + 1)
    step = np.full(n + 1, config.step_init)
    prev_grad = np.zeros(n + 1)
    error = float(np.mean((phi @ omega > 0) != labels))
    epochs_run = 0
    for epoch in range(config.epochs):
        if error <= config.convergence_threshold:
            break
        grad = _loss_gradient(phi, signed, omega)
        agreement = grad * prev_grad
        step = np.where(agreement > 0, np.minimum(step * config.eta_plus, config.step_max), step)
        step = np.where(agreement < 0, np.maximum(step * config.eta_minus, config.step_min), step)
        grad = np.where(agreement < 0, 0.0, grad)
        omega = omega - np.sign(grad) * step
        prev_grad = grad
        error = float(np.mean((phi @ omega > 0) != labels))
        epochs_run = epoch + 1

    degenerate = bool(labels.all() or not labels.any())
    if degenerate:
        log.warning("all %d training responses are identical; model is flagged degenerate", len(crps))
    model = LearnedModel(omega, error, epochs_run, degenerate)
    if config.delay_scale is not None:
        model = normalize_scale(model, config.delay_scale)
    return model


def normalize_scale(model, delay_std=REFERENCE_DELAY_STD):
    """Rescale so predicted delays over uniform random challenges have std ``delay_std``.

    Parity features of uniform challenges are independent +-1 variables, so the
    std of ``omega . phi`` is the norm of ``omega`` without its constant term.
    """
    norm = float(np.linalg.norm(model.omega_hat[:-1]))
    return model.scaled(delay_std / norm) if norm > 0 else model


def predicted_delay(model, challenges):
    return delay_difference(model.omega_hat, challenges)


def predict(model, challenges):
    out = respond(predicted_delay(model, challenges))
    return int(out) if out.ndim == 0 else out


def prediction_error(model, crps):
    return float(np.mean(predict(model, crps.challenges) != crps.responses))


def extract_delta_deltas(model):
    """Invert the weight recursion with ``delta0_i = 0`` for ``i < n``.

    ``omega_1`` fixes ``delta1_1``; each middle weight then fixes the next
    ``delta1``; the last two weights give ``delta0_n`` and ``delta1_n``.
    """
    omega = np.asarray(model.omega_hat if isinstance(model, LearnedModel) else model, dtype=float)
    n = omega.size - 1
    if n < 1:
        raise InputError("need at least one stage")
    d1 = np.empty(n)
    dd = np.empty(n)
    d1[0] = -2 * omega[0]
    for i in range(1, n - 1):
        d1[i] = d1[i - 1] - 2 * omega[i]
    if n == 1:
        dd[0] = 2 * omega[0]
        total = 2 * omega[1]
    else:
        dd[-1] = 2 * omega[n - 1] - d1[n - 2]
        total = 2 * omega[n]
    dd[: n - 1] = -d1[: n - 1]
    delta0_last = (total + dd[-1]) / 2
    return DeltaDeltaProfile(dd, float(delta0_last))


def profile_distance(a, b):
    """Mean absolute per-stage difference of two delta-delta profiles."""
    return float(np.mean(np.abs(np.asarray(a.delta_delta) - np.asarray(b.delta_delta))))


def collect_crps(fabric, chip, layout, count, seed, temperature=None, noisy=True, eval_seed=0):
    """Challenge-response pairs an attacker could record from ``layout`` on ``chip``."""
    challenges = random_challenges(seed, count, layout.n_stages, "crp", layout.layout_id)
    if noisy:
        responses = evaluate_batch(fabric, chip, layout, challenges, temperature, eval_seed)
    else:
        responses = respond(puf_delays(fabric, chip, layout, challenges, temperature))
    return CrpSet(layout.layout_id, challenges, responses)


def true_profile(fabric, chip, layout, temperature=None):
    """Gauge-fixed delta-delta profile of the simulator's actual weights."""
    return extract_delta_deltas(weights(stage_deltas(fabric, chip, layout, temperature)))

