"""Command-line entry point: ``sonoptic <subcommand> ...``.

Failures exit with status 1 and print one line ``error: <ErrorClass>: <message>``
to stderr; any file the command had started writing is removed.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
from pathlib import Path

from .core import (LABELS, load_manifest, pair_from_record, read_manifest_records, save_pair,
                   save_segmentation, write_manifest)
from .descriptors import FEATURE_NAMES
from .errors import InvalidSpec, InvalidValue, MalformedFile, MissingFile, SonopticError
from .evaluation import run_monte_carlo
from .fusion import MODES, DEFAULT_RIDGE, classify, fit, load_model, save_model
from .optic2sas import optic_to_sas
from .pipeline import feature_table
from .scenes import BenchmarkConfig, SceneSpec, generate_scene, make_benchmark

SEED_ENV = "SONOPTIC_SEED"
SENSITIVITY_DRAWS = 100


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise InvalidValue(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _fmt(x) -> str:
    # repr round-trips exactly and is stable across runs
    return repr(float(x))


class _Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path) -> Path:
        path = Path(path)
        self.paths.append(path)
        return path

    def write_text(self, path, text: str) -> None:
        path = self.add(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)

    def cleanup(self) -> None:
        for p in reversed(self.paths):
            with contextlib.suppress(OSError):
                p.unlink()


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise MissingFile(f"missing file: {path}") from None
    except json.JSONDecodeError as err:
        raise MalformedFile(f"{path}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise MalformedFile(f"{path}: expected a JSON object")
    return doc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, out: _Outputs) -> None:
    doc = _load_json(args.spec)
    if "scenes" in doc:
        extra = set(doc) - {"scenes"}
        if extra:
            raise InvalidSpec(f"unknown keys next to 'scenes': {sorted(extra)}")
        if not isinstance(doc["scenes"], list):
            raise InvalidSpec("'scenes' must be a list")
        pairs = [generate_scene(SceneSpec.from_dict(s), str(s.get("id", f"scene-{i:03d}")))
                 for i, s in enumerate(doc["scenes"])]
    else:
        doc = dict(doc)
        doc.setdefault("seed", default_seed())
        try:
            pairs = make_benchmark(BenchmarkConfig.from_dict(doc))
        except TypeError as err:
            raise InvalidSpec(str(err)) from None
    directory = Path(args.out)
    records = []
    for i, pair in enumerate(pairs):
        stem = f"{i:04d}_{pair.pair_id}" if pair.pair_id else f"{i:04d}"
        for suffix in ("_sas.pgm", "_sas_seg.pgm", "_opt.pgm", "_opt_seg.pgm"):
            out.add(directory / f"{stem}{suffix}")
        records.append(save_pair(pair, directory, stem))
    write_manifest(out.add(directory / "manifest.jsonl"), records)


def _pair_argument(spec: str):
    """A JSON object (paths relative to the cwd) or ``<manifest>#<row>``."""
    if spec.lstrip().startswith("{"):
        try:
            record = json.loads(spec)
        except json.JSONDecodeError as err:
            raise MalformedFile(f"--pair: {err.msg}") from None
        if not isinstance(record, dict):
            raise MalformedFile("--pair must be a JSON object")
        return pair_from_record(record, ".")
    path, sep, row = spec.rpartition("#")
    if not sep:
        path, row = spec, "0"
    try:
        index = int(row)
    except ValueError:
        raise InvalidValue(f"bad manifest row {row!r}") from None
    records = read_manifest_records(path)
    if not 0 <= index < len(records):
        raise InvalidValue(f"manifest has {len(records)} rows; row {index} requested")
    return pair_from_record(records[index], Path(path).parent, default_id=str(index))


def cmd_transform(args, out: _Outputs) -> None:
    pair = _pair_argument(args.pair)
    maps = optic_to_sas(pair, args.height_scale)
    save_segmentation(out.add(args.out), maps.to_segmentation())


def cmd_features(args, out: _Outputs) -> None:
    table = feature_table(load_manifest(args.manifest))
    header = ["id", "modality", *FEATURE_NAMES, "shadow_missing", "psi"]
    rows = []
    for i, pid in enumerate(table.ids):
        for modality, t, missing, psi in (
                ("sas", table.t_sas[i], table.shadow_missing_sas[i], table.psi_sas[i]),
                ("optical", table.t_opt[i], table.shadow_missing_opt[i], table.psi_opt[i])):
            rows.append([pid, modality, *(_fmt(v) for v in t), int(bool(missing)), _fmt(psi)])
    out.write_text(args.out, _csv_text(header, rows))


def cmd_train(args, out: _Outputs) -> None:
    table = feature_table(load_manifest(args.manifest))
    model = fit(table.t_sas, table.t_opt, table.labels, ridge=args.ridge)
    save_model(model, out.add(args.model))


def cmd_classify(args, out: _Outputs) -> None:
    model = load_model(args.model)
    table = feature_table(load_manifest(args.manifest))
    header = ["id", "label", *(f"logp_{lab.value}" for lab in LABELS),
              "psi_sas", "psi_opt", "w_sas", "w_opt"]
    rows = []
    for i, pid in enumerate(table.ids):
        d = classify(model, table.t_sas[i], table.t_opt[i], table.psi_sas[i], table.psi_opt[i],
                     mode=args.mode, w_sas=args.w_sas, w_opt=args.w_opt)
        total = d.w_sas + d.w_opt
        rows.append([pid, d.label.value, *(_fmt(v) for v in d.log_densities),
                     _fmt(table.psi_sas[i]), _fmt(table.psi_opt[i]),
                     _fmt(d.w_sas / total), _fmt(d.w_opt / total)])
    out.write_text(args.out, _csv_text(header, rows))


def cmd_evaluate(args, out: _Outputs) -> None:
    seed = default_seed() if args.seed is None else args.seed
    table = feature_table(load_manifest(args.manifest))
    report = run_monte_carlo(table, trials=args.trials, split=args.split, mode=args.mode, seed=seed,
                             ridge=args.ridge, sensitivity_draws=args.sensitivity_draws,
                             config={"manifest": Path(args.manifest).name})
    out.write_text(args.out, report.to_json())


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sonoptic", description="Optical/SAS object classification.")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic benchmark or explicit scenes")
    s.add_argument("--spec", required=True, help="JSON: benchmark settings or {\"scenes\": [...]}")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("transform", help="render the synthetic SAS maps of one pair's optical view")
    s.add_argument("--pair", required=True, help="JSON manifest record, or MANIFEST#ROW")
    s.add_argument("--out", required=True, help="output graymap (0 background, 128 shadow, 255 highlight)")
    s.add_argument("--height-scale", type=float, default=0.45)
    s.set_defaults(func=cmd_transform)

    s = sub.add_parser("features", help="per-pair, per-modality feature rows")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="fit the classifier on a labelled manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("classify", help="label every pair of a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=MODES, default="fused")
    s.add_argument("--w-sas", type=float, default=None, help="override the SAS weight")
    s.add_argument("--w-opt", type=float, default=None, help="override the optical weight")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("evaluate", help="Monte-Carlo train/test evaluation")
    s.add_argument("--manifest", required=True)
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--split", type=float, default=0.7)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=MODES, default="fused")
    s.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")
    s.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    s.add_argument("--sensitivity-draws", type=int, default=SENSITIVITY_DRAWS,
                   help="transfer-weight perturbation draws (fused mode only)")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _Outputs()
    try:
        args.func(args, out)
    except (SonopticError, OSError, ValueError) as err:
        out.cleanup()
        msg = " ".join(str(err).split())
        print(f"error: {type(err).__name__}: {msg}", file=sys.stderr)
        return 1
    except BaseException:
        out.cleanup()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
