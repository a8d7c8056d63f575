"""Newline-delimited JSON protocol between a device and the verifier.

Messages are encoded with sorted keys and no insignificant whitespace, one per
line, so a session transcript is byte-for-byte reproducible whichever
transport carries it.

    device   -> verifier  {"type": "auth_request", "chip_id": ...}
    verifier -> device    {"type": "challenge", "layout": {...}, "m_challenges": [hex, ...], "meta": {...}}
    device   -> verifier  {"type": "fingerprint", "layout_id": ..., "bits": hex}
    verifier -> device    {"type": "result", "accepted": bool, "hamming_distance": int}
    either direction      {"type": "error", "code": ..., "message": ...}
"""
import json
import logging
import socket
import socketserver
import threading

import numpy as np

from . import prng
from .arbiterpuf import Fingerprint, PufLayout, challenge_from_hex
from .authproto import (
    BITSTREAM_KBYTE,
    PROGRAMMING_SECONDS,
    VerificationPolicy,
    issue_challenge,
    open_fabric,
    respond,
    verify,
)
from .errors import ProtocolError, PufLabError

log = logging.getLogger(__name__)


def encode(message):
    return (json.dumps(message, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def decode(line):
    try:
        message = json.loads(line)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"not a JSON message: {exc}") from None
    if not isinstance(message, dict) or not isinstance(message.get("type"), str):
        raise ProtocolError("messages must be JSON objects with a string 'type'")
    return message


def error_message(exc):
    code = exc.code if isinstance(exc, PufLabError) else "internal_error"
    return {"type": "error", "code": code, "message": str(exc)}


class VerifierSession:
    """Verifier state for one connection."""

    def __init__(self, db, policy=VerificationPolicy()):
        self.db = db
        self.policy = policy
        self.pending = None  # (chip_id, layout_id, template length)

    def handle(self, message):
        try:
            kind = message.get("type")
            if kind == "auth_request":
                return self._challenge(message)
            if kind == "fingerprint":
                return self._result(message)
            raise ProtocolError(f"unknown message type {kind!r}")
        except PufLabError as exc:
            return error_message(exc)

    def _challenge(self, message):
        chip_id = message.get("chip_id")
        if not isinstance(chip_id, str):
            raise ProtocolError("auth_request needs a string chip_id")
        layout, mset = issue_challenge(self.db, chip_id, self.policy)
        self.pending = (chip_id, layout.layout_id, len(mset))
        return {
            "type": "challenge",
            "layout": layout.to_dict(),
            "m_challenges": mset.hex_challenges(),
            "meta": {"bitstream_kbyte": BITSTREAM_KBYTE, "programming_seconds": PROGRAMMING_SECONDS},
        }

    def _result(self, message):
        if self.pending is None:
            raise ProtocolError("fingerprint received before a challenge was issued")
        chip_id, layout_id, length = self.pending
        if message.get("layout_id") != layout_id:
            raise ProtocolError(f"fingerprint is for layout {message.get('layout_id')!r}, expected {layout_id!r}")
        bits = message.get("bits")
        if not isinstance(bits, str) or bits != bits.lower():
            raise ProtocolError("fingerprint bits must be lowercase hex")
        try:
            candidate = Fingerprint.from_hex(bits, length)
        except PufLabError as exc:
            raise ProtocolError(str(exc)) from None
        self.pending = None
        result = verify(self.db, chip_id, layout_id, candidate, self.policy)
        return {"type": "result", "accepted": result.accepted, "hamming_distance": result.hamming_distance}


class DeviceEmulator:
    """A fielded chip: answers challenge messages with fingerprints."""

    def __init__(self, fabric, chip, temperature=None, seed=0, noisy=True):
        self.noisy = noisy
        self.fabric = fabric
        self.chip = chip
        self.temperature = temperature
        self.seed = seed

    def auth_request(self):
        return {"type": "auth_request", "chip_id": self.chip.chip_id}

    def answer(self, message):
        if message.get("type") != "challenge":
            raise ProtocolError(f"device expected a challenge, got {message.get('type')!r}")
        try:
            layout = PufLayout.from_dict(message["layout"])
            hexes = message["m_challenges"]
            if not isinstance(hexes, list):
                raise ProtocolError("m_challenges must be a list")
            m = np.array([challenge_from_hex(h, layout.n_stages) for h in hexes], dtype=np.uint8)
        except (KeyError, PufLabError) as exc:
            raise ProtocolError(f"malformed challenge: {exc}") from None
        eval_seed = prng.derive_seed(self.seed, "session", layout.layout_id)
        fp = respond(self.fabric, self.chip, layout, m.reshape(-1, layout.n_stages), self.temperature, eval_seed, self.noisy)
        return {"type": "fingerprint", "layout_id": layout.layout_id, "bits": fp.to_hex()}


def run_device(device, send, receive):
    """Drive one authentication; ``send`` takes bytes, ``receive`` returns one line of bytes.

    Returns the final message and the transcript (all bytes in both directions).
    """
    transcript = []

    def out(message):
        data = encode(message)
        transcript.append(data)
        send(data)

    def inbound():
        data = receive()
        if not data:
            raise ProtocolError("connection closed by verifier")
        transcript.append(data)
        return decode(data)

    out(device.auth_request())
    reply = inbound()
    if reply["type"] == "challenge":
        out(device.answer(reply))
        reply = inbound()
    return reply, b"".join(transcript)


def authenticate_in_process(db, device, policy=VerificationPolicy()):
    """Run the full exchange through the encoder without any transport."""
    session = VerifierSession(db, policy)
    queue = []

    def send(data):
        queue.append(encode(session.handle(decode(data))))

    return run_device(device, send, lambda: queue.pop(0) if queue else b"")


def serve_stream(session, reader, writer):
    """Serve newline-delimited messages from a binary reader until EOF."""
    for line in reader:
        if not line.strip():
            continue
        try:
            reply = session.handle(decode(line))
        except ProtocolError as exc:
            reply = error_message(exc)
        writer.write(encode(reply))
        writer.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        serve_stream(VerifierSession(self.server.db, self.server.policy), self.rfile, self.wfile)


class VerifierServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, db, policy=VerificationPolicy()):
        self.db = db
        self.policy = policy
        open_fabric(db)  # fail early on a missing or broken database
        super().__init__(address, _Handler)

    def start_background(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def authenticate_tcp(address, device, timeout=30.0):
    with socket.create_connection(address, timeout=timeout) as sock:
        reader = sock.makefile("rb")
        return run_device(device, sock.sendall, reader.readline)


def parse_address(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ProtocolError(f"address {text!r} is not host:port")
    return host, int(port)
