"""Command-line entry point.

    puflab fabric init --db DIR
    puflab chip new --db DIR --chip-seed 7
    puflab enroll --db DIR --chip chip-7 --layouts 10 --mchallenges 100
    puflab verify --db DIR --chip chip-7
    puflab serve --db DIR --listen 127.0.0.1:7070
    puflab device --db DIR --chip chip-7 --connect 127.0.0.1:7070
    puflab attack train --db DIR --chip chip-7 --crps 2000 --out run/
    puflab report farfrr --out run/

Settings resolve as flag, then ``--config`` JSON file, then built-in default.
Failures print a JSON object on stderr and exit with the code of the error.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__, prng
from .arbiterpuf import DEFAULT_STAGES, PufLayout, random_layout
from .attack import AttackConfig, CrpSet, LearnedModel, collect_crps, prediction_error, train
from .authproto import (
    EnrollmentDB,
    SelectionParams,
    VerificationPolicy,
    _atomic_write,
    enroll,
    open_fabric,
    provenance,
)
from .delaymodel import FabricSpec, build_fabric, sample_chip
from .errors import ConfigurationError, InputError, NotFoundError, PufLabError
from .experiments import bias_sweep, chips, layouts, noise_report, uniqueness
from .metrics import delay_distribution, far, frr_binomial, histogram_csv
from .mselect import EMPIRICAL, MODEL_BASED, candidate_challenges, select_empirical, select_model_based
from .wire import (
    DeviceEmulator,
    VerifierServer,
    VerifierSession,
    authenticate_in_process,
    authenticate_tcp,
    parse_address,
    serve_stream,
)

log = logging.getLogger("puflab")

EXIT_USAGE = 2
EXIT_REJECTED = 8

DEFAULTS = {
    "seed": 0,
    "db": None,
    "out": None,
    "temperature": None,
    "stages": DEFAULT_STAGES,
    "layouts": 10,
    "mchallenges": 100,
    "candidates": 20_000,
    "max_candidates": 1_000_000,
    "repetitions": 100_000,
    "threshold": 12,
    "bound": 0.2,
    "crps": 2000,
    "test_crps": 10_000,
    "epochs": 100,
    "chips": 10,
    "challenges": 100_000,
    "samples": 50_000,
    "bins": 80,
    "length": 100,
    "p": 0.297,
    "mean_hd": 1.28,
    "t_max": 30,
    "listen": "127.0.0.1:7070",
    "fabric": {},
}
POSITIVE = {"stages", "layouts", "mchallenges", "candidates", "max_candidates", "repetitions",
            "crps", "test_crps", "epochs", "chips", "challenges", "samples", "bins", "length"}


class UsageError(PufLabError):
    code = "usage_error"
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Options:
    """Flag values layered over a JSON config file and the defaults."""

    def __init__(self, args):
        self.args = args
        self.config = load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, name):
        value = getattr(self.args, name, None)
        if value is None:
            value = self.config.get(name, DEFAULTS.get(name))
        if name in POSITIVE and (not isinstance(value, int) or isinstance(value, bool) or value < 1):
            raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        return value

    def resolved(self, *names):
        return {name: self.get(name) for name in names}


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise NotFoundError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {unknown}")
    return data


def open_db(opts, must_exist=True):
    root = opts.get("db") or os.environ.get("PUFLAB_DB")
    if not root:
        raise ConfigurationError("no database directory: pass --db or set PUFLAB_DB")
    db = EnrollmentDB(root)
    if must_exist and not db.exists():
        raise NotFoundError(f"no enrolment database at {root} (run 'puflab fabric init')")
    return db


def fabric_for(opts):
    """The DB's fabric when one is configured, otherwise the config file's or the default one."""
    root = opts.get("db") or os.environ.get("PUFLAB_DB")
    if root:
        return open_fabric(open_db(opts))
    return build_fabric(FabricSpec.from_dict(opts.get("fabric")))


def _device_path(db, chip_id):
    if not chip_id or "/" in chip_id or chip_id.startswith("."):
        raise InputError(f"invalid chip id {chip_id!r}")
    return os.path.join(db.root, "devices", f"{chip_id}.json")


def load_chip(opts, fabric, chip_id=None, chip_seed=None):
    if chip_seed is not None:
        return sample_chip(fabric, chip_seed)
    if chip_id is None:
        raise InputError("name a chip with --chip or --chip-seed")
    path = _device_path(open_db(opts), chip_id)
    if not os.path.isfile(path):
        raise NotFoundError(f"chip {chip_id} not found (run 'puflab chip new')")
    with open(path) as fh:
        data = json.load(fh)
    return sample_chip(fabric, int(data["chip_seed"]), data["chip_id"])


def chip_from_args(opts, fabric):
    return load_chip(opts, fabric, opts.args.chip, opts.args.chip_seed)


def load_layout(opts, fabric):
    path = getattr(opts.args, "layout", None)
    if path:
        with open(path) as fh:
            try:
                return PufLayout.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise InputError(f"layout file {path} is not valid JSON: {exc}") from None
    seed = opts.args.layout_seed if opts.args.layout_seed is not None else opts.get("seed")
    return random_layout(fabric, seed, opts.get("stages"))


def header(opts, seeds, **config):
    return provenance(seeds, {"command": opts.args.command_path, **config})


def emit(payload):
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def write_out(opts, name, text):
    """Write ``text`` to ``--out/name`` when an output directory is set; return the path."""
    out = opts.get("out")
    if not out:
        return None
    path = os.path.join(out, name)
    _atomic_write(path, text)
    return path


def write_json(opts, name, document):
    return write_out(opts, name, json.dumps(document, indent=1, sort_keys=True) + "\n")


# -- fabric / chip / layout ---------------------------------------------------


def cmd_fabric_init(opts):
    db = open_db(opts, must_exist=False)
    data = dict(opts.get("fabric"))
    for flag, key in (("rows", "rows"), ("cols", "cols"), ("master_seed", "master_seed")):
        if getattr(opts.args, flag) is not None:
            data[key] = getattr(opts.args, flag)
    spec = FabricSpec.from_dict(data)
    if db.exists() and db.load_fabric() != spec and not opts.args.force:
        raise ConfigurationError(f"{db.fabric_path} holds a different fabric; use --force to replace it")
    db.save_fabric(spec)
    emit({"fabric": db.fabric_path, "lut_count": spec.lut_count, "spec": spec.to_dict()})


def cmd_chip_new(opts):
    db = open_db(opts)
    fabric = open_fabric(db)
    seed = opts.args.chip_seed if opts.args.chip_seed is not None else opts.get("seed")
    chip = sample_chip(fabric, seed, opts.args.chip_id)
    document = {
        "header": header(opts, {"chip_seed": seed, "master_seed": fabric.spec.master_seed}),
        "chip_id": chip.chip_id,
        "chip_seed": chip.chip_seed,
    }
    path = _device_path(db, chip.chip_id)
    _atomic_write(path, json.dumps(document, indent=1, sort_keys=True) + "\n")
    emit({"chip_id": chip.chip_id, "chip_seed": chip.chip_seed, "path": path})


def cmd_layout_new(opts):
    fabric = fabric_for(opts)
    layout = load_layout(opts, fabric)
    path = write_out(opts, f"layout-{layout.layout_id}.json", layout.to_json() + "\n")
    emit({"layout": layout.to_dict(), "path": path})


# -- m-challenges and enrolment ----------------------------------------------


def cmd_mselect(opts):
    fabric = fabric_for(opts)
    layout = load_layout(opts, fabric)
    seed = opts.get("seed")
    method = opts.args.method
    params = opts.resolved("candidates", "seed")
    if method == EMPIRICAL:
        chip = chip_from_args(opts, fabric)
        params.update(opts.resolved("repetitions", "temperature"), chip_id=chip.chip_id)
        mset = select_empirical(fabric, chip, layout, opts.get("candidates"), opts.get("repetitions"),
                                seed, opts.get("temperature"))
    else:
        if not opts.args.model:
            raise InputError("model-based selection needs --model")
        model = read_model(opts.args.model)
        if model.n != layout.n_stages:
            raise InputError(f"model has {model.n} stages, layout has {layout.n_stages}")
        params.update(bound=opts.get("bound"), model=opts.args.model)
        candidates = candidate_challenges(layout, opts.get("candidates"), seed)
        mset = select_model_based(model, candidates, opts.get("bound"), layout.layout_id)
    if opts.args.mchallenges is not None:
        mset = mset.take(opts.get("mchallenges"))
    document = {"header": header(opts, {"seed": seed}, method=method, **params), **mset.to_dict()}
    path = write_json(opts, f"mchallenges-{layout.layout_id}.json", document)
    emit({"layout_id": layout.layout_id, "method": method, "count": len(mset), "path": path,
          "challenges": mset.hex_challenges() if path is None else None})


def cmd_enroll(opts):
    db = open_db(opts)
    fabric = open_fabric(db)
    chip = chip_from_args(opts, fabric)
    reference = None
    if opts.args.reference_chip is not None:
        reference = load_chip(opts, fabric, opts.args.reference_chip)
    selection = SelectionParams(opts.get("candidates"), opts.get("repetitions"), opts.get("max_candidates"))
    record = enroll(fabric, chip, opts.get("layouts"), opts.get("mchallenges"), selection, opts.get("seed"),
                    db, reference, opts.get("stages"), noisy=not opts.args.noiseless)
    emit({
        "chip_id": record.chip_id,
        "entries": len(record.entries),
        "template_bits": [len(e.template) for e in record.entries],
        "layouts": [e.layout.layout_id for e in record.entries],
        "header": record.header,
    })


# -- protocol -----------------------------------------------------------------


def policy_from(opts):
    return VerificationPolicy(opts.get("threshold"), single_use=not opts.args.reuse)


def device_from(opts, fabric):
    chip = chip_from_args(opts, fabric)
    return DeviceEmulator(fabric, chip, opts.get("temperature"), opts.get("seed"), noisy=not opts.args.noiseless)


def finish_authentication(opts, reply, transcript):
    if opts.args.transcript:
        _atomic_write(opts.args.transcript, transcript.decode("utf-8"))
    if reply.get("type") == "error":
        sys.stderr.write(json.dumps({"error": reply.get("code"), "message": reply.get("message")}) + "\n")
        return _exit_code_for(reply.get("code"))
    emit(reply)
    return 0 if reply.get("accepted") else EXIT_REJECTED


def _exit_code_for(code):
    for cls in _error_classes(PufLabError):
        if cls.code == code:
            return cls.exit_code
    return 1


def _error_classes(root):
    yield root
    for sub in root.__subclasses__():
        yield from _error_classes(sub)


def cmd_verify(opts):
    db = open_db(opts)
    fabric = open_fabric(db)
    reply, transcript = authenticate_in_process(db, device_from(opts, fabric), policy_from(opts))
    return finish_authentication(opts, reply, transcript)


def cmd_device(opts):
    db = open_db(opts)
    fabric = open_fabric(db)
    address = parse_address(opts.args.connect or opts.get("listen"))
    try:
        reply, transcript = authenticate_tcp(address, device_from(opts, fabric))
    except OSError as exc:
        raise NotFoundError(f"cannot reach verifier at {address[0]}:{address[1]}: {exc}") from None
    return finish_authentication(opts, reply, transcript)


def cmd_serve(opts):
    db = open_db(opts)
    policy = policy_from(opts)
    if opts.args.stdio:
        open_fabric(db)
        serve_stream(VerifierSession(db, policy), sys.stdin.buffer, sys.stdout.buffer)
        return 0
    server = VerifierServer(parse_address(opts.get("listen")), db, policy)
    host, port = server.server_address[:2]
    sys.stderr.write(json.dumps({"listening": f"{host}:{port}"}) + "\n")
    sys.stderr.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# -- attack -------------------------------------------------------------------


def read_model(path):
    try:
        with open(path) as fh:
            return LearnedModel.from_json(fh.read())
    except FileNotFoundError:
        raise NotFoundError(f"model file {path} not found") from None
    except (json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"model file {path}: {exc}") from None


def crps_from(opts, fabric, count, seed, layout=None):
    if opts.args.crp_file:
        with open(opts.args.crp_file) as fh:
            return CrpSet.from_text(fh.read()), None
    chip = chip_from_args(opts, fabric)
    layout = layout or load_layout(opts, fabric)
    crps = collect_crps(fabric, chip, layout, count, seed, opts.get("temperature"), noisy=opts.args.noisy,
                        eval_seed=seed)
    return crps, layout


def attack_config(opts):
    return AttackConfig(epochs=opts.get("epochs"), init_seed=opts.get("seed"))


def cmd_attack_train(opts):
    fabric = fabric_for(opts)
    seed = opts.get("seed")
    crps, layout = crps_from(opts, fabric, opts.get("crps"), prng.derive_seed(seed, "train"))
    config = attack_config(opts)
    model = train(crps, config)
    path = opts.args.model or (os.path.join(opts.get("out"), "model.json") if opts.get("out") else None)
    meta = {
        "header": header(opts, {"seed": seed}, crps=len(crps), epochs=config.epochs, noisy=opts.args.noisy),
        "layout_id": crps.layout_id,
        "n_stages": model.n,
        "train_error": model.train_error,
        "iterations_used": model.iterations_used,
        "degenerate": model.degenerate,
    }
    if path:
        _atomic_write(path, model.to_json() + "\n")
        _atomic_write(path + ".meta.json", json.dumps(meta, indent=1, sort_keys=True) + "\n")
        if layout is not None:
            _atomic_write(path + ".layout.json", layout.to_json() + "\n")
    emit({**meta, "model": path})


def cmd_attack_eval(opts):
    fabric = fabric_for(opts)
    model = read_model(opts.args.model)
    layout = None
    sidecar = opts.args.model + ".layout.json"
    if not opts.args.layout and opts.args.layout_seed is None and os.path.isfile(sidecar):
        with open(sidecar) as fh:
            layout = PufLayout.from_dict(json.load(fh))
    seed = opts.get("seed")
    crps, layout = crps_from(opts, fabric, opts.get("test_crps"), prng.derive_seed(seed, "heldout"), layout)
    if crps.n != model.n:
        raise InputError(f"model has {model.n} stages, CRPs have {crps.n}")
    emit({"model": opts.args.model, "layout_id": crps.layout_id, "test_crps": len(crps),
          "prediction_error": prediction_error(model, crps)})


# -- reports ------------------------------------------------------------------


def cmd_report_bias(opts):
    fabric = fabric_for(opts)
    chip = chip_from_args(opts, fabric)
    seed = opts.get("seed")
    layout_list = layouts(fabric, opts.get("layouts"), seed, opts.get("stages"))
    values = bias_sweep(fabric, chip, layout_list, opts.get("challenges"), seed)
    document = {
        "header": header(opts, {"seed": seed}, **opts.resolved("layouts", "challenges", "stages"), chip=chip.chip_id),
        "chip_id": chip.chip_id,
        "bias": {l.layout_id: b for l, b in zip(layout_list, values)},
        "mean_abs_bias": float(np.mean(np.abs(values))),
    }
    write_json(opts, "bias.json", document)
    emit(document)


def cmd_report_uniqueness(opts):
    fabric = fabric_for(opts)
    seed = opts.get("seed")
    fielded = chips(fabric, opts.get("chips"), seed)
    if opts.args.chip is not None or opts.args.chip_seed is not None:
        reference = chip_from_args(opts, fabric)
    else:
        reference = sample_chip(fabric, prng.derive_seed(seed, "reference-chip"), "reference")
    layout_list = layouts(fabric, opts.get("layouts"), seed, opts.get("stages"))
    stats = uniqueness(fabric, reference, fielded, layout_list, opts.get("mchallenges"), seed)
    hdr = header(opts, {"seed": seed}, **opts.resolved("chips", "layouts", "mchallenges", "stages"),
                 reference=reference.chip_id)
    document = {"header": hdr, **stats.to_dict()}
    write_json(opts, "uniqueness.json", document)
    rows = [{"hamming_distance": d, "count": int(c)} for d, c in enumerate(stats.histogram)]
    write_out(opts, "uniqueness_histogram.csv", histogram_csv(rows, _csv_header(hdr)))
    emit(document)


def cmd_report_noise(opts):
    fabric = fabric_for(opts)
    chip = chip_from_args(opts, fabric)
    seed = opts.get("seed")
    layout_list = layouts(fabric, opts.get("layouts"), seed, opts.get("stages"))
    report = noise_report(fabric, chip, layout_list, opts.get("candidates"), opts.get("repetitions"), seed)
    candidates = opts.get("candidates") * len(layout_list)
    document = {
        "header": header(opts, {"seed": seed}, **opts.resolved("layouts", "candidates", "repetitions", "stages"),
                         chip=chip.chip_id),
        "chip_id": chip.chip_id,
        "metastable_count": report.metastable_count,
        "metastable_rate": report.metastable_count / candidates,
        "total_noise": report.total,
    }
    write_json(opts, "noise.json", document)
    emit(document)


def cmd_report_farfrr(opts):
    n, p, mean_hd = opts.get("length"), opts.get("p"), opts.get("mean_hd")
    t_max = min(opts.get("t_max"), n)
    strict = opts.args.strict
    rows = [
        {"t": t, "far": far(n, p, t), "frr": frr_binomial(n, mean_hd, t, strict_accept=strict)}
        for t in range(0, t_max + 1)
    ]
    hdr = header(opts, {}, length=n, p=p, mean_hd=mean_hd, t_max=t_max, strict_accept=strict)
    write_out(opts, "farfrr.csv", histogram_csv(rows, _csv_header(hdr)))
    threshold = opts.get("threshold")
    emit({
        "header": hdr,
        "threshold": threshold,
        "far": far(n, p, min(threshold, n)),
        "frr": frr_binomial(n, mean_hd, min(threshold, n), strict_accept=strict),
        "rows": rows,
    })


def cmd_report_delaydist(opts):
    fabric = fabric_for(opts)
    seed = opts.get("seed")
    if opts.args.model:
        source, label = read_model(opts.args.model), opts.args.model
    else:
        from .delaymodel import stage_deltas

        chip = chip_from_args(opts, fabric)
        layout = load_layout(opts, fabric)
        source, label = stage_deltas(fabric, chip, layout, opts.get("temperature")), layout.layout_id
    dist = delay_distribution(source, opts.get("samples"), seed, opts.get("bins"))
    hdr = header(opts, {"seed": seed}, **opts.resolved("samples", "bins"), source=label)
    write_out(opts, "delaydist.csv", histogram_csv(dist.rows(), _csv_header(hdr)))
    emit({"header": hdr, "source": label, **dist.to_dict()})


def _csv_header(hdr):
    return [f"{key}: {json.dumps(hdr[key], sort_keys=True)}" for key in sorted(hdr)]


# -- parser -------------------------------------------------------------------


def _common():
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, help="master seed for this run")
    p.add_argument("--db", help="enrolment database directory (falls back to $PUFLAB_DB)")
    p.add_argument("--config", help="JSON file with default settings")
    p.add_argument("--out", help="directory for output files")
    p.add_argument("--temperature", type=float, help="operating temperature in degrees C")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _chip_args(p):
    p.add_argument("--chip", help="chip id registered with 'chip new'")
    p.add_argument("--chip-seed", type=int, help="use the chip with this seed directly")


def _layout_args(p):
    p.add_argument("--layout", help="layout JSON file")
    p.add_argument("--layout-seed", type=int, help="generate the layout from this seed")
    p.add_argument("--stages", type=int)


def _protocol_args(p):
    p.add_argument("--threshold", type=int, help="maximum accepted Hamming distance")
    p.add_argument("--reuse", action="store_true", help="cycle through entries instead of using each once")


def build_parser():
    common = _common()
    parser = _Parser(prog="puflab", description="Reconfigurable arbiter PUF laboratory.", parents=[common])
    parser.add_argument("--version", action="version", version=f"puflab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(subparsers, name, func, help_text):
        p = subparsers.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    fabric = sub.add_parser("fabric", help="fabric description").add_subparsers(dest="action", required=True)
    p = command(fabric, "init", cmd_fabric_init, "create the database with a fabric description")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--master-seed", type=int)
    p.add_argument("--force", action="store_true")

    chip = sub.add_parser("chip", help="chip instances").add_subparsers(dest="action", required=True)
    p = command(chip, "new", cmd_chip_new, "register a simulated chip")
    p.add_argument("--chip-seed", type=int)
    p.add_argument("--chip-id")

    layout = sub.add_parser("layout", help="PUF layouts").add_subparsers(dest="action", required=True)
    p = command(layout, "new", cmd_layout_new, "draw a random layout")
    _layout_args(p)

    p = command(sub, "mselect", cmd_mselect, "select m-challenges")
    _chip_args(p)
    _layout_args(p)
    p.add_argument("--method", choices=[EMPIRICAL, MODEL_BASED], default=EMPIRICAL)
    p.add_argument("--model", help="learned model for model-based selection")
    p.add_argument("--candidates", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--bound", type=float, help="delay bound b for model-based selection")
    p.add_argument("--mchallenges", type=int, help="keep at most this many")

    p = command(sub, "enroll", cmd_enroll, "enrol a chip")
    _chip_args(p)
    p.add_argument("--layouts", type=int)
    p.add_argument("--mchallenges", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--max-candidates", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--stages", type=int)
    p.add_argument("--reference-chip", help="select m-challenges on this chip instead")
    p.add_argument("--noiseless", action="store_true", help="record jitter-free templates")

    p = command(sub, "serve", cmd_serve, "run the verifier")
    _protocol_args(p)
    p.add_argument("--listen", help="host:port to listen on")
    p.add_argument("--stdio", action="store_true", help="serve one session on stdin/stdout")

    for name, func, help_text in (("device", cmd_device, "authenticate an emulated chip over TCP"),
                                  ("verify", cmd_verify, "authenticate an emulated chip in-process")):
        p = command(sub, name, func, help_text)
        _chip_args(p)
        _protocol_args(p)
        p.add_argument("--noiseless", action="store_true", help="answer without jitter")
        p.add_argument("--transcript", help="save the exchanged messages to this file")
        if name == "device":
            p.add_argument("--connect", help="verifier host:port")

    attack = sub.add_parser("attack", help="modeling attack").add_subparsers(dest="action", required=True)
    for name, func, help_text in (("train", cmd_attack_train, "train a model on CRPs"),
                                  ("eval", cmd_attack_eval, "measure held-out prediction error")):
        p = command(attack, name, func, help_text)
        _chip_args(p)
        _layout_args(p)
        p.add_argument("--crp-file", help="CRP text file instead of simulated CRPs")
        p.add_argument("--noisy", action="store_true", help="simulate CRPs with jitter")
        p.add_argument("--model", required=name == "eval", help="model JSON path")
        if name == "train":
            p.add_argument("--crps", type=int)
            p.add_argument("--epochs", type=int)
        else:
            p.add_argument("--test-crps", type=int)

    report = sub.add_parser("report", help="evaluation reports").add_subparsers(dest="action", required=True)
    p = command(report, "bias", cmd_report_bias, "response bias per layout")
    _chip_args(p)
    p.add_argument("--layouts", type=int)
    p.add_argument("--challenges", type=int)
    p.add_argument("--stages", type=int)
    p = command(report, "uniqueness", cmd_report_uniqueness, "inter-chip fingerprint distances")
    _chip_args(p)
    p.add_argument("--chips", type=int)
    p.add_argument("--layouts", type=int)
    p.add_argument("--mchallenges", type=int)
    p.add_argument("--stages", type=int)
    p = command(report, "noise", cmd_report_noise, "metastable rate and total noise")
    _chip_args(p)
    p.add_argument("--layouts", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--stages", type=int)
    p = command(report, "farfrr", cmd_report_farfrr, "FAR and FRR against the threshold")
    p.add_argument("--length", type=int, help="fingerprint length")
    p.add_argument("--p", type=float, help="inter-chip bit mismatch probability")
    p.add_argument("--mean-hd", type=float, help="mean intra-chip distance")
    p.add_argument("--threshold", type=int)
    p.add_argument("--t-max", type=int)
    p.add_argument("--strict", action="store_true", help="FRR with acceptance at HD < t")
    p = command(report, "delaydist", cmd_report_delaydist, "delay-difference histogram")
    _chip_args(p)
    _layout_args(p)
    p.add_argument("--model")
    p.add_argument("--samples", type=int)
    p.add_argument("--bins", type=int)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
        args.command_path = " ".join(filter(None, [args.command, getattr(args, "action", None)]))
        code = args.func(Options(args))
        return 0 if code is None else code
    except PufLabError as exc:
        sys.stderr.write(json.dumps({"error": exc.code, "message": str(exc)}) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io_error", "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
