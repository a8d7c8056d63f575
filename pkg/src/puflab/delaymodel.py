"""FPGA fabric region, per-chip manufacturing variance and layout-dependent routing.

Stage delay convention: ``delta[b, i]`` is the *lower-path minus upper-path*
delay accumulated in stage ``i`` when its challenge bit is ``b``.  A positive
total difference therefore means the upper signal wins the race.

Per-stage components, all zero-mean Gaussian:

* routing: one pair per stage, keyed on the stage's LUT pair and the
  preceding stage's pair; identical on every chip.
* manufacturing: one offset pair per LUT per chip; a stage combines its
  upper and lower LUT as ``(m_upper - m_lower) / sqrt(2)`` so that the
  per-stage manufacturing spread equals ``sigma_manuf``.
* temperature: per-LUT linear coefficients combined the same way, scaled by
  ``temperature - reference_temp``.
"""
import json
import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from . import prng
from .errors import ConfigurationError, ConsistencyError, LayoutError

# Gaussian fit to the learned delay distribution of a 64-stage PUF.
REFERENCE_DELAY_STD = 6.78
ROUTING_DOMINANCE = 29.6
DEFAULT_SIGMA_ROUTING = REFERENCE_DELAY_STD / math.sqrt(65)
DEFAULT_SIGMA_MANUF = DEFAULT_SIGMA_ROUTING / ROUTING_DOMINANCE
# Calibrated so that 0.72 % of random challenges flip at least once in 1e5
# applications and the mean per-bit noise of those bits is about 1.3 %.
DEFAULT_SIGMA_JITTER = 0.0022
DEFAULT_JITTER_TAIL_WEIGHT = 0.01
DEFAULT_JITTER_TAIL_SCALE = 16.0
# Random-challenge response drift of about 0.35 % between 5 and 60 degrees.
DEFAULT_TEMP_COEFF_SIGMA = 1.7e-4
DEFAULT_REFERENCE_TEMP = 25.0

_SQRT2 = math.sqrt(2.0)


class LutPosition(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class FabricSpec:
    rows: int = 17
    cols: int = 84
    master_seed: int = 1
    sigma_routing: float = DEFAULT_SIGMA_ROUTING
    sigma_manuf: float = DEFAULT_SIGMA_MANUF
    sigma_jitter: float = DEFAULT_SIGMA_JITTER
    temp_coeff_sigma: float = DEFAULT_TEMP_COEFF_SIGMA
    reference_temp: float = DEFAULT_REFERENCE_TEMP
    # Fraction of jitter draws taken from the wide component, and its width
    # relative to the narrow one.  A weight of 0 gives plain Gaussian jitter.
    jitter_tail_weight: float = DEFAULT_JITTER_TAIL_WEIGHT
    jitter_tail_scale: float = DEFAULT_JITTER_TAIL_SCALE

    @property
    def lut_count(self):
        return self.rows * self.cols

    @property
    def routing_ratio(self):
        return self.sigma_routing / self.sigma_manuf if self.sigma_manuf else math.inf

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown fabric keys: {sorted(unknown)}")
        try:
            spec = cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None
        validate_spec(spec)
        return spec

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"fabric spec is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError("fabric spec must be a JSON object")
        return cls.from_dict(data)


def validate_spec(spec):
    if not isinstance(spec.rows, int) or not isinstance(spec.cols, int):
        raise ConfigurationError("rows and cols must be integers")
    if spec.rows < 1 or spec.cols < 1 or spec.lut_count < 2:
        raise ConfigurationError(f"fabric {spec.rows}x{spec.cols} too small: need at least 2 LUTs")
    if not 0 <= spec.master_seed <= prng.MASK64:
        raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
    if not spec.sigma_routing > 0:
        raise ConfigurationError("sigma_routing must be positive")
    # sigma_manuf = 0 is accepted as the degenerate "no process variance" fabric.
    if not spec.sigma_manuf >= 0:
        raise ConfigurationError("sigma_manuf must be non-negative")
    if not spec.sigma_jitter >= 0:
        raise ConfigurationError("sigma_jitter must be non-negative")
    if not spec.temp_coeff_sigma >= 0:
        raise ConfigurationError("temp_coeff_sigma must be non-negative")
    if not 0 <= spec.jitter_tail_weight < 1:
        raise ConfigurationError("jitter_tail_weight must lie in [0, 1)")
    if not spec.jitter_tail_scale >= 1:
        raise ConfigurationError("jitter_tail_scale must be >= 1")
    for name in ("sigma_routing", "sigma_manuf", "sigma_jitter", "temp_coeff_sigma", "reference_temp"):
        if not math.isfinite(getattr(spec, name)):
            raise ConfigurationError(f"{name} must be finite")


@dataclass(frozen=True)
class FabricModel:
    """Handle on a validated fabric.  Hashable, so derived draws can be cached."""

    spec: FabricSpec

    @property
    def rows(self):
        return self.spec.rows

    @property
    def cols(self):
        return self.spec.cols

    @property
    def lut_count(self):
        return self.spec.lut_count

    def contains(self, pos):
        return 0 <= pos[0] < self.rows and 0 <= pos[1] < self.cols

    def lut_index(self, pos):
        return pos[0] * self.cols + pos[1]

    def position(self, index):
        return LutPosition(*divmod(int(index), self.cols))

    @property
    def jitter_core_sigma(self):
        """Std-dev of the narrow jitter component; the mixture has std ``sigma_jitter``."""
        w, s = self.spec.jitter_tail_weight, self.spec.jitter_tail_scale
        return self.spec.sigma_jitter / math.sqrt(1 - w + w * s * s)

    def jitter(self, rng, size):
        """Draw zero-mean jitter with total std-dev ``sigma_jitter``."""
        z = rng.standard_normal(size)
        wide = rng.random(size) < self.spec.jitter_tail_weight
        return z * self.jitter_core_sigma * np.where(wide, self.spec.jitter_tail_scale, 1.0)

    def jitter_cdf(self, x):
        """P(jitter <= x), vectorised."""
        x = np.asarray(x, dtype=float)
        core = self.jitter_core_sigma
        if core == 0:
            return np.where(x >= 0, 1.0, 0.0)
        w, s = self.spec.jitter_tail_weight, self.spec.jitter_tail_scale
        return (1 - w) * ndtr(x / core) + w * ndtr(x / (s * core))


@dataclass(frozen=True, eq=False)
class ChipInstance:
    chip_id: str
    chip_seed: int
    spec: FabricSpec = field(repr=False)
    manuf_offsets: np.ndarray = field(repr=False)
    temp_coeffs: np.ndarray = field(repr=False)

    def offsets(self, pos):
        """Manufacturing offset pair (challenge bit 0, challenge bit 1) of one LUT."""
        return tuple(float(v) for v in self.manuf_offsets[pos[0], pos[1]])


@dataclass(frozen=True, eq=False)
class StageDeltas:
    delta0: np.ndarray
    delta1: np.ndarray

    def __post_init__(self):
        d0 = np.asarray(self.delta0, dtype=float)
        d1 = np.asarray(self.delta1, dtype=float)
        if d0.ndim != 1 or d0.shape != d1.shape or d0.size < 1:
            raise ValueError("delta0 and delta1 must be equal-length non-empty vectors")
        if not (np.all(np.isfinite(d0)) and np.all(np.isfinite(d1))):
            raise ValueError("stage deltas must be finite")
        object.__setattr__(self, "delta0", d0)
        object.__setattr__(self, "delta1", d1)

    @property
    def n_stages(self):
        return self.delta0.size

    def __neg__(self):
        return StageDeltas(-self.delta0, -self.delta1)

    def __eq__(self, other):
        return (
            isinstance(other, StageDeltas)
            and np.array_equal(self.delta0, other.delta0)
            and np.array_equal(self.delta1, other.delta1)
        )


def build_fabric(spec):
    validate_spec(spec)
    return FabricModel(spec)


def sample_chip(fabric, chip_seed, chip_id=None):
    spec = fabric.spec
    rng = prng.keyed_rng(spec.master_seed, prng.ROLE_MANUF, chip_seed)
    manuf = spec.sigma_manuf * rng.standard_normal((spec.rows, spec.cols, 2))
    rng = prng.keyed_rng(spec.master_seed, prng.ROLE_TEMP, chip_seed)
    temp = spec.temp_coeff_sigma * rng.standard_normal((spec.rows, spec.cols, 2))
    manuf.flags.writeable = False
    temp.flags.writeable = False
    return ChipInstance(
        chip_id=chip_id if chip_id is not None else f"chip-{chip_seed}",
        chip_seed=chip_seed,
        spec=spec,
        manuf_offsets=manuf,
        temp_coeffs=temp,
    )


def _check_layout(fabric, layout):
    for stage in layout.stages:
        for pos in stage:
            if not fabric.contains(pos):
                raise LayoutError(
                    f"layout {layout.layout_id} uses LUT {tuple(pos)} outside the "
                    f"{fabric.rows}x{fabric.cols} fabric"
                )


@lru_cache(maxsize=4096)
def _routing_cached(fabric, layout):
    _check_layout(fabric, layout)
    seed = fabric.spec.master_seed
    out = np.empty((2, len(layout.stages)))
    prev = (0, 0)  # 0 marks the input pins ahead of the first stage
    for i, (upper, lower) in enumerate(layout.stages):
        here = (fabric.lut_index(upper) + 1, fabric.lut_index(lower) + 1)
        rng = prng.keyed_rng(seed, prng.ROLE_ROUTING, *prev, *here)
        out[:, i] = rng.standard_normal(2)
        prev = here
    out *= fabric.spec.sigma_routing
    out.flags.writeable = False
    return out


def routing_deltas(fabric, layout):
    d = _routing_cached(fabric, layout)
    return StageDeltas(d[0], d[1])


def _stage_luts(layout):
    stages = np.asarray(layout.stages, dtype=np.int64)  # (n, 2, 2): stage, upper/lower, row/col
    return stages[:, 0, 0], stages[:, 0, 1], stages[:, 1, 0], stages[:, 1, 1]


def stage_deltas(fabric, chip, layout, temperature=None):
    if chip.spec != fabric.spec:
        raise ConsistencyError(f"chip {chip.chip_id} was not sampled from this fabric")
    route = _routing_cached(fabric, layout)
    ur, uc, lr, lc = _stage_luts(layout)
    manuf = (chip.manuf_offsets[ur, uc] - chip.manuf_offsets[lr, lc]).T / _SQRT2
    total = route + manuf
    if temperature is not None:
        dt = float(temperature) - fabric.spec.reference_temp
        if dt != 0.0:
            total = total + dt * (chip.temp_coeffs[ur, uc] - chip.temp_coeffs[lr, lc]).T / _SQRT2
    return StageDeltas(total[0], total[1])
