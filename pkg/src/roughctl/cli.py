"""Command-line runner.

Every run resolves a config (JSON document, then per-key flag overrides
given as ``--set key=value`` or plain ``--key value``),
writes its CSV tables plus ``manifest.json`` into the output directory and
exits with 0 (ok), 1 (acceptance failures), 2 (invalid config),
3 (numerical failure) or 4 (I/O failure).  Outputs are written to temporary
files and renamed only after every table has been produced.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4

SIMPLE = ["lift", "brownian", "integrate", "solve", "dpp", "continuity-probe",
          "pathwise-check", "randomize", "accept"]
EXAMPLES = ["linear-target", "hjb-quadratic"]

HELP = {
    "lift": "lift a catalogue path or a CSV of samples to a rough path",
    "brownian": "sample an Itô or Stratonovich Brownian rough path",
    "integrate": "compensated Riemann sum of a controlled integrand",
    "solve": "Davie-scheme trajectories of a catalogue RSDE",
    "dpp": "value function and policy by backward dynamic programming",
    "continuity-probe": "value sensitivity to bump perturbations of the driver",
    "pathwise-check": "coupled rough vs Euler-Maruyama terminal gaps",
    "randomize": "value samples over sampled Brownian rough paths",
    "accept": "run the acceptance checks",
    "linear-target": "linear-target closed form vs dynamic programming",
    "hjb-quadratic": "quadratic HJB closed form vs dynamic programming",
}


class ConfigError(ValueError):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config document or a manifest to replay")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--threads", type=int, default=None, help="thread cap for numeric kernels")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (value parsed as JSON when possible); "
                        "any other --key value pair is treated the same way")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughctl", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SIMPLE:
        _add_common(sub.add_parser(name, help=HELP[name]))
    ex = sub.add_parser("example", help="closed-form benchmark problems").add_subparsers(
        dest="example", required=True)
    for name in EXAMPLES:
        _add_common(ex.add_parser(name, help=HELP[name]))
    replay = sub.add_parser("replay", help="re-run a written manifest")
    replay.add_argument("manifest")
    replay.add_argument("--out", default=None)
    replay.add_argument("--threads", type=int, default=None)
    return ap


def _extra_overrides(tokens: list[str]) -> list[str]:
    """Turn leftover ``--key value`` / ``--key=value`` tokens into overrides."""
    out, i = [], 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}")
        key, sep, val = tok[2:].partition("=")
        if not sep:
            if i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
                val = tokens[i + 1]
                i += 1
            else:
                val = "true"
        out.append(f"{key}={val}")
        i += 1
    return out


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def resolve(command: str, document: dict, overrides: list[str]):
    """Validate ``document`` plus ``KEY=VALUE`` overrides for ``command``."""
    from pydantic import ValidationError
    from .commands import CONFIGS
    data = dict(document)
    for item in overrides:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        data[key.replace("-", "_")] = _parse_value(val)
    try:
        return CONFIGS[command].model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"invalid config for {command!r}: {loc}: {first['msg']}") from None


def _load_document(path: str | None) -> tuple[dict, str | None]:
    if path is None:
        return {}, None
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "config" in doc and "subcommand" in doc:
        return doc["config"], doc["subcommand"]
    return doc, None


def _write_outputs(out_dir: str, files: dict[str, bytes]):
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, data in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            staged.append((tmp, os.path.join(out_dir, name)))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)


def _render(table) -> bytes:
    from .commands import fmt
    lines = [",".join(table.header)]
    lines += [",".join(fmt(v) for v in row) for row in table.rows]
    return ("\n".join(lines) + "\n").encode()


def _jsonable(obj):
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def execute(command: str, cfg, out_dir: str, threads: int | None = None) -> int:
    from .commands import RUNNERS
    from .rsde import NumericalError
    try:
        result = RUNNERS[command](cfg)
    except NumericalError as exc:
        print(f"roughctl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"roughctl: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"roughctl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    files = {name: _render(t) for name, t in result.tables.items()}
    resolved = cfg.model_dump(mode="json")
    manifest = {
        "subcommand": command,
        "config": resolved,
        "config_hash": hashlib.sha256(_canonical([command, resolved]).encode()).hexdigest(),
        "outputs": {n: hashlib.sha256(b).hexdigest() for n, b in sorted(files.items())},
        "threads": threads,
        **_jsonable(result.extra),
    }
    files["manifest.json"] = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    try:
        _write_outputs(out_dir, files)
    except OSError as exc:
        print(f"roughctl: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if result.ok else EXIT_FAILED


def _cap_threads(n: int | None):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv: list[str] | None = None) -> int:
    args, extra = build_parser().parse_known_args(argv)
    try:
        _cap_threads(args.threads)
        if args.command == "replay":
            if extra:
                raise ConfigError(f"replay takes no overrides, got {extra}")
            doc, command = _load_document(args.manifest)
            if command is None:
                raise ConfigError(f"{args.manifest} is not a manifest")
            out = args.out or os.path.dirname(os.path.abspath(args.manifest))
            cfg = resolve(command, doc, [])
        else:
            command = args.command if args.command != "example" else f"example {args.example}"
            doc, recorded = _load_document(args.config)
            if recorded is not None and recorded != command:
                raise ConfigError(f"manifest is for {recorded!r}, not {command!r}")
            cfg = resolve(command, doc, args.set + _extra_overrides(extra))
            out = args.out
    except ConfigError as exc:
        print(f"roughctl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"roughctl: {exc}", file=sys.stderr)
        return EXIT_IO
    return execute(command, cfg, out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
