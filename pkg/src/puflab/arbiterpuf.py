"""Arbiter PUF: layouts, the additive delay model and noisy response evaluation.

Challenges are ``uint8`` arrays of 0/1 bits, either one challenge of shape
``(n,)`` or a batch of shape ``(N, n)``.  Bit ``i`` drives stage ``i + 1``.

For a challenge ``c`` the parity features are
``phi_i = prod_{j >= i} (1 - 2 c_j)`` for ``i = 1..n`` and ``phi_{n+1} = 1``,
and the total delay difference is the inner product ``omega . phi``.
"""
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import prng
from .delaymodel import LutPosition, StageDeltas, stage_deltas
from .errors import CapacityError, InputError, LayoutError

DEFAULT_STAGES = 64


@dataclass(frozen=True)
class PufLayout:
    """Ordered stages, each an (upper LUT, lower LUT) pair.  This is the second challenge."""

    layout_id: str
    stages: tuple

    def __post_init__(self):
        stages = tuple(
            (LutPosition(*map(int, upper)), LutPosition(*map(int, lower))) for upper, lower in self.stages
        )
        if not stages:
            raise LayoutError("a layout needs at least one stage")
        flat = [pos for stage in stages for pos in stage]
        if len(set(flat)) != len(flat):
            raise LayoutError(f"layout {self.layout_id} reuses a LUT position")
        object.__setattr__(self, "stages", stages)

    @property
    def n_stages(self):
        return len(self.stages)

    def positions(self):
        return [pos for stage in self.stages for pos in stage]

    def to_dict(self):
        return {
            "layout_id": self.layout_id,
            "stages": [[list(upper), list(lower)] for upper, lower in self.stages],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data):
        try:
            layout_id = data["layout_id"]
            stages = data["stages"]
            if not isinstance(layout_id, str):
                raise TypeError("layout_id must be a string")
            parsed = []
            for stage in stages:
                upper, lower = stage
                if len(upper) != 2 or len(lower) != 2:
                    raise ValueError("positions are [row, col] pairs")
                if not all(isinstance(v, int) and not isinstance(v, bool) for v in (*upper, *lower)):
                    raise TypeError("positions must be integers")
                parsed.append((upper, lower))
        except (KeyError, TypeError, ValueError) as exc:
            raise LayoutError(f"malformed layout description: {exc}") from None
        return cls(layout_id, tuple(parsed))


@dataclass(frozen=True, eq=False)
class Fingerprint:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if bits.size and bits.max() > 1:
            raise InputError("fingerprint bits must be 0 or 1")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        return isinstance(other, Fingerprint) and np.array_equal(self.bits, other.bits)

    def to_hex(self):
        """Lowercase hex, padded with zero bits to whole bytes, MSB first."""
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text, length):
        try:
            raw = bytes.fromhex(text)
        except (TypeError, ValueError):
            raise InputError("fingerprint is not valid hex") from None
        if len(raw) != (length + 7) // 8:
            raise InputError(f"fingerprint hex has {len(raw)} bytes, expected {(length + 7) // 8}")
        return cls(np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:length])


def layout_id_for(stages):
    digest = hashlib.sha256(json.dumps([[list(u), list(l)] for u, l in stages]).encode()).hexdigest()
    return "L" + digest[:15]


def random_layout(fabric, layout_seed, n_stages=DEFAULT_STAGES):
    if n_stages < 1:
        raise CapacityError("n_stages must be at least 1")
    if 2 * n_stages > fabric.lut_count:
        raise CapacityError(
            f"{n_stages} stages need {2 * n_stages} LUTs, fabric has {fabric.lut_count}"
        )
    rng = prng.keyed_rng(fabric.spec.master_seed, prng.ROLE_LAYOUT, layout_seed)
    picks = rng.choice(fabric.lut_count, size=2 * n_stages, replace=False)
    stages = tuple(
        (fabric.position(picks[2 * i]), fabric.position(picks[2 * i + 1])) for i in range(n_stages)
    )
    return PufLayout(layout_id_for(stages), stages)


def layout_count(total_luts, used_luts):
    """Number of distinct LUT subsets a layout can occupy, as an exact integer."""
    return math.comb(total_luts, used_luts)


def challenge_to_hex(challenge):
    bits = np.asarray(challenge, dtype=np.uint8)
    n = bits.size
    return format(int("".join("1" if b else "0" for b in bits), 2), f"0{(n + 3) // 4}x")


def challenge_from_hex(text, n=DEFAULT_STAGES):
    if len(text) != (n + 3) // 4 or text != text.lower():
        raise InputError(f"challenge {text!r} is not {(n + 3) // 4} lowercase hex digits")
    try:
        value = int(text, 16)
    except ValueError:
        raise InputError(f"challenge {text!r} is not hex") from None
    if value >> n:
        raise InputError(f"challenge {text!r} exceeds {n} bits")
    return np.array([(value >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)


def random_challenges(seed, count, n=DEFAULT_STAGES, *key):
    """``count`` uniformly random challenges from the stream keyed by ``(seed, *key)``."""
    rng = prng.keyed_rng(seed, prng.ROLE_CHALLENGE, *key)
    return rng.integers(0, 2, size=(count, n), dtype=np.uint8)


def features(challenges):
    c = np.asarray(challenges, dtype=np.int8)
    signs = 1 - 2 * c
    phi = np.flip(np.cumprod(np.flip(signs, axis=-1), axis=-1, dtype=np.int8), axis=-1)
    ones = np.ones(phi.shape[:-1] + (1,), dtype=np.int8)
    return np.concatenate([phi, ones], axis=-1)


def weights(deltas):
    d0, d1 = deltas.delta0, deltas.delta1
    omega = np.empty(d0.size + 1)
    omega[:-1] = (d0 - d1) / 2
    omega[1:-1] += (d0[:-1] + d1[:-1]) / 2
    omega[-1] = (d0[-1] + d1[-1]) / 2
    return omega


def evaluate_stagewise(deltas, challenge):
    """Race the two signals stage by stage; returns lower-minus-upper arrival time."""
    c = np.asarray(challenge, dtype=np.uint8)
    if c.shape[-1] != deltas.n_stages:
        raise InputError(f"challenge has {c.shape[-1]} bits, PUF has {deltas.n_stages} stages")
    diff = np.zeros(c.shape[:-1])
    for i in range(deltas.n_stages):
        bit = c[..., i]
        # crossing swaps which signal is "upper", negating the running difference
        diff = np.where(bit, -diff + deltas.delta1[i], diff + deltas.delta0[i])
    return diff if diff.ndim else float(diff)


def delay_difference(omega, challenges):
    phi = features(challenges)
    if phi.shape[-1] != len(omega):
        raise InputError(f"challenge length {phi.shape[-1] - 1} does not match {len(omega) - 1} stages")
    return phi @ np.asarray(omega, dtype=float)


def respond(delays):
    """Arbiter decision: 1 when the upper signal is first, ties resolve to 0."""
    return (np.asarray(delays) > 0).astype(np.uint8)


def puf_delays(fabric, chip, layout, challenges, temperature=None):
    """Noiseless delay differences of ``layout`` on ``chip``."""
    return delay_difference(weights(stage_deltas(fabric, chip, layout, temperature)), challenges)


def jitter_rng(fabric, chip, layout, eval_seed):
    return prng.keyed_rng(
        fabric.spec.master_seed, prng.ROLE_JITTER, chip.chip_seed, layout.layout_id, eval_seed
    )


def evaluate_batch(fabric, chip, layout, challenges, temperature=None, eval_seed=0):
    """One noisy evaluation per challenge; draw ``k`` of the jitter stream goes to row ``k``."""
    challenges = np.atleast_2d(np.asarray(challenges, dtype=np.uint8))
    delays = puf_delays(fabric, chip, layout, challenges, temperature)
    if fabric.spec.sigma_jitter > 0:
        delays = delays + fabric.jitter(jitter_rng(fabric, chip, layout, eval_seed), delays.shape)
    return respond(delays)


def evaluate(fabric, chip, layout, challenge, temperature=None, eval_seed=0):
    return int(evaluate_batch(fabric, chip, layout, challenge, temperature, eval_seed)[0])


def fingerprint(fabric, chip, layout, m_challenges, temperature=None, eval_seed=0, noisy=True):
    m_challenges = np.asarray(m_challenges, dtype=np.uint8)
    if m_challenges.ndim != 2 or len(m_challenges) == 0:
        raise InputError("fingerprint needs a non-empty list of m-challenges")
    if not noisy:
        return Fingerprint(respond(puf_delays(fabric, chip, layout, m_challenges, temperature)))
    return Fingerprint(evaluate_batch(fabric, chip, layout, m_challenges, temperature, eval_seed))


__all__ = [
    "DEFAULT_STAGES",
    "Fingerprint",
    "PufLayout",
    "StageDeltas",
    "challenge_from_hex",
    "challenge_to_hex",
    "delay_difference",
    "evaluate",
    "evaluate_batch",
    "evaluate_stagewise",
    "features",
    "fingerprint",
    "layout_count",
    "puf_delays",
    "random_challenges",
    "random_layout",
    "respond",
    "weights",
]
