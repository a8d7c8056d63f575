import json
import shutil

import pytest

from puflab.authproto import EnrollmentDB, SelectionParams, enroll
from puflab.errors import ProtocolError
from puflab.wire import (
    DeviceEmulator,
    VerifierServer,
    VerifierSession,
    authenticate_in_process,
    authenticate_tcp,
    decode,
    encode,
    parse_address,
)

FAST = SelectionParams(candidates=20_000, repetitions=100_000)


@pytest.fixture(scope="module")
def enrolled(tmp_path_factory, fabric, chip):
    root = tmp_path_factory.mktemp("wire") / "db"
    db = EnrollmentDB(root)
    db.save_fabric(fabric.spec)
    enroll(fabric, chip, n_layouts=3, selection=FAST, db=db)
    return root


@pytest.fixture
def db(enrolled, tmp_path):
    shutil.copytree(enrolled, tmp_path / "db")
    return EnrollmentDB(tmp_path / "db")


def test_encoding_is_canonical():
    assert encode({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}\n'
    assert decode(b'{"type":"x"}\n') == {"type": "x"}
    for bad in (b"nope\n", b"[1]\n", b'{"type": 3}\n', b"\xff\n"):
        with pytest.raises(ProtocolError):
            decode(bad)


def test_in_process_honest(fabric, chip, db):
    reply, transcript = authenticate_in_process(db, DeviceEmulator(fabric, chip, seed=1))
    assert reply["type"] == "result" and reply["accepted"]
    lines = transcript.splitlines()
    assert len(lines) == 4
    challenge = json.loads(lines[1])
    assert challenge["type"] == "challenge" and len(challenge["m_challenges"]) == 100
    assert challenge["meta"] == {"bitstream_kbyte": 556, "programming_seconds": 25}
    fp = json.loads(lines[2])
    assert fp["bits"] == fp["bits"].lower() and len(fp["bits"]) == 26


def test_impostor_rejected(fabric, chip, other_chip, db):
    device = DeviceEmulator(fabric, other_chip, seed=1)
    device.auth_request = lambda: {"type": "auth_request", "chip_id": chip.chip_id}
    reply, _ = authenticate_in_process(db, device)
    assert reply["type"] == "result" and not reply["accepted"] and reply["hamming_distance"] > 12


def test_errors(fabric, chip, db):
    session = VerifierSession(db)
    assert session.handle({"type": "hello"})["code"] == "protocol_error"
    assert session.handle({"type": "fingerprint", "layout_id": "x", "bits": "00"})["code"] == "protocol_error"
    assert session.handle({"type": "auth_request", "chip_id": "ghost"})["code"] == "not_found"
    assert session.handle({"type": "auth_request"})["code"] == "protocol_error"
    challenge = session.handle({"type": "auth_request", "chip_id": chip.chip_id})
    lid = challenge["layout"]["layout_id"]
    assert session.handle({"type": "fingerprint", "layout_id": "Lother", "bits": "00"})["code"] == "protocol_error"
    assert session.handle({"type": "fingerprint", "layout_id": lid, "bits": "AB" * 13})["code"] == "protocol_error"
    assert session.handle({"type": "fingerprint", "layout_id": lid, "bits": "ab"})["code"] == "protocol_error"
    ok = session.handle({"type": "fingerprint", "layout_id": lid, "bits": "00" * 13})
    assert ok["type"] == "result"


def test_depletion_over_the_wire(fabric, chip, db):
    device = DeviceEmulator(fabric, chip)
    for _ in range(3):
        assert authenticate_in_process(db, device)[0]["type"] == "result"
    reply, _ = authenticate_in_process(db, device)
    assert reply == {"type": "error", "code": "depleted", "message": reply["message"]}


def test_device_rejects_bad_challenge(fabric, chip):
    device = DeviceEmulator(fabric, chip)
    with pytest.raises(ProtocolError):
        device.answer({"type": "result"})
    with pytest.raises(ProtocolError):
        device.answer({"type": "challenge", "layout": {"layout_id": "x", "stages": []}, "m_challenges": []})


def test_tcp_matches_in_process(fabric, chip, enrolled, tmp_path):
    copies = []
    for name in ("tcp", "local"):
        shutil.copytree(enrolled, tmp_path / name)
        copies.append(EnrollmentDB(tmp_path / name))
    device = DeviceEmulator(fabric, chip, seed=3)
    server = VerifierServer(("127.0.0.1", 0), copies[0])
    server.start_background()
    try:
        remote = [authenticate_tcp(server.server_address, device) for _ in range(3)]
    finally:
        server.shutdown()
        server.server_close()
    local = [authenticate_in_process(copies[1], device) for _ in range(3)]
    assert [t for _, t in remote] == [t for _, t in local]
    assert copies[0].load(chip.chip_id).to_dict() == copies[1].load(chip.chip_id).to_dict()


def test_parse_address():
    assert parse_address("127.0.0.1:80") == ("127.0.0.1", 80)
    with pytest.raises(ProtocolError):
        parse_address("localhost")
