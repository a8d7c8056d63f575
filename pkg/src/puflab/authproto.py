"""Enrolment and verification: a basic chip-biometrics protocol with a second challenge.

At enrolment each chip gets ``n_layouts`` random layouts.  For every layout,
m-challenges are selected empirically on a reference chip (by default the
enrolled chip itself) and the chip's responses are stored as the template.
Verification sends a layout plus its m-challenges and accepts a fingerprint
whose Hamming distance to the template is at most ``t``.
"""
import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field

import numpy as np

from . import __version__, prng
from .arbiterpuf import DEFAULT_STAGES, Fingerprint, PufLayout, fingerprint, random_layout
from .delaymodel import FabricSpec, build_fabric
from .errors import (
    DepletionError,
    EnrollmentError,
    InputError,
    LayoutError,
    NotFoundError,
    ProtocolError,
)
from .metrics import hamming_distance
from .mselect import DEFAULT_REPETITIONS, MChallengeSet, candidate_challenges, select_empirical

DEFAULT_THRESHOLD = 12
DEFAULT_LAYOUTS = 10
DEFAULT_MCHALLENGES = 100
# Carried as annotations only; the layout message replaces the real bitstream.
BITSTREAM_KBYTE = 556
PROGRAMMING_SECONDS = 25


@dataclass(frozen=True)
class SelectionParams:
    candidates: int = 20_000
    repetitions: int = DEFAULT_REPETITIONS
    max_candidates: int = 1_000_000


@dataclass(frozen=True)
class VerificationPolicy:
    threshold: int = DEFAULT_THRESHOLD
    single_use: bool = True

    def __post_init__(self):
        if self.threshold < 0:
            raise InputError("threshold must be non-negative")


@dataclass
class EnrollmentEntry:
    layout: PufLayout
    m_challenges: MChallengeSet
    template: Fingerprint
    used: bool = False

    def to_dict(self):
        return {
            "layout": self.layout.to_dict(),
            "m_challenges": self.m_challenges.to_dict(),
            "template": self.template.to_hex(),
            "template_length": len(self.template),
            "used": self.used,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            PufLayout.from_dict(data["layout"]),
            MChallengeSet.from_dict(data["m_challenges"]),
            Fingerprint.from_hex(data["template"], data["template_length"]),
            bool(data["used"]),
        )


@dataclass
class EnrollmentRecord:
    chip_id: str
    entries: list = field(default_factory=list)
    next_index: int = 0
    header: dict = field(default_factory=dict)

    def entry(self, layout_id):
        for e in self.entries:
            if e.layout.layout_id == layout_id:
                return e
        raise NotFoundError(f"chip {self.chip_id} has no entry for layout {layout_id}")

    def to_dict(self):
        return {
            "header": self.header,
            "chip_id": self.chip_id,
            "next_index": self.next_index,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["chip_id"],
            [EnrollmentEntry.from_dict(e) for e in data["entries"]],
            int(data.get("next_index", 0)),
            data.get("header", {}),
        )


@dataclass(frozen=True)
class VerificationResult:
    chip_id: str
    layout_id: str
    hamming_distance: int
    threshold: int
    accepted: bool


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(seeds, config):
    return {"tool": "puflab", "version": __version__, "seeds": seeds, "config_hash": config_hash(config)}


def _atomic_write(path, text):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class EnrollmentDB:
    """One JSON document per chip under ``root/chips``, plus ``root/fabric.json``."""

    def __init__(self, root):
        self.root = os.fspath(root)
        self._locks = {}
        self._guard = threading.Lock()

    @property
    def fabric_path(self):
        return os.path.join(self.root, "fabric.json")

    def _chip_path(self, chip_id):
        if not chip_id or "/" in chip_id or chip_id.startswith("."):
            raise NotFoundError(f"invalid chip id {chip_id!r}")
        return os.path.join(self.root, "chips", f"{chip_id}.json")

    def lock(self, chip_id):
        with self._guard:
            return self._locks.setdefault(chip_id, threading.Lock())

    def exists(self):
        return os.path.isfile(self.fabric_path)

    def save_fabric(self, spec):
        _atomic_write(self.fabric_path, spec.to_json())

    def load_fabric(self):
        if not self.exists():
            raise NotFoundError(f"no enrolment database at {self.root} (missing fabric.json)")
        with open(self.fabric_path) as fh:
            return FabricSpec.from_json(fh.read())

    def save(self, record):
        _atomic_write(self._chip_path(record.chip_id), json.dumps(record.to_dict(), indent=1, sort_keys=True) + "\n")

    def load(self, chip_id):
        path = self._chip_path(chip_id)
        if not os.path.isfile(path):
            raise NotFoundError(f"chip {chip_id} is not enrolled")
        with open(path) as fh:
            return EnrollmentRecord.from_dict(json.load(fh))

    def chip_ids(self):
        folder = os.path.join(self.root, "chips")
        if not os.path.isdir(folder):
            return []
        return sorted(name[:-5] for name in os.listdir(folder) if name.endswith(".json"))


def _select_for_entry(fabric, reference_chip, layout, n_mchallenges, selection, seed):
    pool = selection.candidates
    while True:
        candidates = candidate_challenges(layout, pool, seed)
        found = select_empirical(
            fabric, reference_chip, layout, 0, selection.repetitions, seed, candidates=candidates
        )
        if len(found) >= n_mchallenges:
            return found.take(n_mchallenges)
        if pool >= selection.max_candidates:
            raise EnrollmentError(
                f"layout {layout.layout_id}: only {len(found)} m-challenges among {pool} candidates, "
                f"{n_mchallenges} required"
            )
        pool = min(2 * pool, selection.max_candidates)


def enroll(fabric, chip, n_layouts=DEFAULT_LAYOUTS, n_mchallenges=DEFAULT_MCHALLENGES,
           selection=SelectionParams(), seed=0, db=None, reference_chip=None, n_stages=DEFAULT_STAGES, noisy=True):
    """Build (and persist, if ``db`` is given) the enrolment record of ``chip``.

    ``noisy=False`` records templates from the jitter-free responses.
    """
    reference = reference_chip if reference_chip is not None else chip
    temperature = fabric.spec.reference_temp
    entries = []
    for k in range(n_layouts):
        layout = random_layout(fabric, prng.derive_seed(seed, "layout", chip.chip_seed, k), n_stages)
        mset = _select_for_entry(
            fabric, reference, layout, n_mchallenges, selection, prng.derive_seed(seed, "select", chip.chip_seed, k)
        )
        template = fingerprint(
            fabric, chip, layout, mset.challenges, temperature, prng.derive_seed(seed, "template", chip.chip_seed, k), noisy
        )
        entries.append(EnrollmentEntry(layout, mset, template))
    header = provenance(
        {"seed": seed, "chip_seed": chip.chip_seed, "master_seed": fabric.spec.master_seed},
        {"n_layouts": n_layouts, "n_mchallenges": n_mchallenges, "selection": selection.__dict__,
         "reference_chip": reference.chip_id, "noisy": noisy, "fabric": fabric.spec.to_dict()},
    )
    record = EnrollmentRecord(chip.chip_id, entries, 0, header)
    if db is not None:
        with db.lock(chip.chip_id):
            db.save(record)
    return record


def issue_challenge(db, chip_id, policy=VerificationPolicy()):
    """Hand out the next entry's layout and m-challenges; consume it under a single-use policy."""
    with db.lock(chip_id):
        record = db.load(chip_id)
        if not record.entries:
            raise DepletionError(f"chip {chip_id} has no enrolment entries")
        if policy.single_use:
            fresh = [e for e in record.entries if not e.used]
            if not fresh:
                raise DepletionError(f"all {len(record.entries)} entries of chip {chip_id} are used")
            entry = fresh[0]
            entry.used = True
        else:
            entry = record.entries[record.next_index % len(record.entries)]
            record.next_index += 1
        db.save(record)
    return entry.layout, entry.m_challenges


def respond(fabric, chip, layout, m_challenges, temperature=None, seed=0, noisy=True):
    """Device side: configure ``layout`` and answer the m-challenges with one fingerprint."""
    try:
        if not isinstance(layout, PufLayout):
            layout = PufLayout.from_dict(layout)
        m = np.asarray(getattr(m_challenges, "challenges", m_challenges), dtype=np.uint8)
        if m.ndim != 2 or len(m) == 0:
            raise ProtocolError("empty m-challenge list")
        if m.shape[1] != layout.n_stages:
            raise ProtocolError(f"m-challenges have {m.shape[1]} bits, layout has {layout.n_stages} stages")
        return fingerprint(fabric, chip, layout, m, temperature, seed, noisy)
    except (LayoutError, InputError) as exc:
        raise ProtocolError(str(exc)) from None


def match(template, candidate, threshold):
    hd = hamming_distance(template, candidate)
    return hd, hd <= threshold


def verify(db, chip_id, layout_id, candidate, policy=VerificationPolicy()):
    record = db.load(chip_id)
    entry = record.entry(layout_id)
    if len(candidate) != len(entry.template):
        raise ProtocolError(f"fingerprint has {len(candidate)} bits, template has {len(entry.template)}")
    if policy.threshold > len(entry.template):
        raise InputError(f"threshold {policy.threshold} exceeds the {len(entry.template)}-bit template")
    hd, accepted = match(entry.template, candidate, policy.threshold)
    return VerificationResult(chip_id, layout_id, hd, policy.threshold, accepted)


def open_fabric(db):
    return build_fabric(db.load_fabric())
