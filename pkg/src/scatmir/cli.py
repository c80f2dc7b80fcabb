"""
Command-line front end.

    scatmir [--config PATH] [--seed N] [--jobs N] [--out DIR] COMMAND ...

Commands: ``synth`` (write a corpus of WAV files and ground-truth JSON),
``features`` (one representation per WAV, cached by content hash),
``onsets`` (ROC sweep and operating point per representation) and
``classify`` (split, cross-validated grid search, held-out confusion
matrix). Every command writes ``manifest.json`` into the output directory;
manifests list file names and SHA-256 hashes only, so reruns with the same
config and seed produce identical bytes.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pydantic

from . import __version__
from . import pipeline as P
from .classify import Track
from .config import REPRESENTATIONS, ExperimentConfig, load_config
from .dataset import (DirectoryPool, Score, SyntheticPool, degrade_snr, encode_wav, parse_midi,
                      read_wav, synthesize)
from .dsp import FeatureMatrix
from .errors import InvalidInputError, ParseError, ScatmirError

log = logging.getLogger("scatmir")


class UsageError(Exception):
    """Bad arguments or inputs; exit code 2."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_bytes(path: Path, data: bytes) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return sha256(data)


def write_text(path: Path, text: str) -> str:
    return write_bytes(path, text.encode())


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, files: dict,
                   extra: dict | None = None) -> Path:
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": sha256(cfg.canonical_json().encode()),
        "files": dict(sorted(files.items())),
    }
    doc.update(extra or {})
    path = out / "manifest.json"
    write_text(path, dumps(doc))
    return path


def run_parallel(fn, args: list, jobs: int) -> list:
    """``[fn(a) for a in args]``, optionally across processes; order is preserved."""
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, args))


def feature_csv(fm: FeatureMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = list(fm.labels) if len(fm.labels) == fm.width else [f"c{i}" for i in range(fm.width)]
    w.writerow(["time"] + labels)
    for t, row in zip(fm.times(), fm.rows):
        w.writerow([f"{t:.6f}"] + [f"{v:.10g}" for v in row])
    return buf.getvalue()


def feature_header(fm: FeatureMatrix, extra: dict | None = None) -> str:
    doc = {"kind": fm.kind, "n_frames": fm.n_frames, "n_columns": fm.width,
           "hop_seconds": fm.hop_seconds, "start_seconds": fm.start_seconds,
           "labels": list(fm.labels)}
    doc.update(extra or {})
    return json.dumps(doc, sort_keys=True, indent=1, default=str) + "\n"


def list_corpus(corpus: Path, need: str) -> list[tuple[str, Path, dict]]:
    """(id, wav path, truth doc) for every WAV in ``corpus``; truth must contain ``need``."""
    if not corpus.is_dir():
        raise UsageError(f"corpus directory {corpus} does not exist")
    wavs = sorted(corpus.glob("*.wav"))
    if not wavs:
        raise UsageError(f"no .wav files in {corpus}")
    items, missing = [], []
    for wav in wavs:
        truth = wav.with_suffix(".json")
        if not truth.exists():
            missing.append(truth.name)
            continue
        try:
            doc = json.loads(truth.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{truth.name}: invalid JSON ({exc})") from exc
        if need not in doc:
            missing.append(f"{truth.name}:{need}")
            continue
        items.append((wav.stem, wav, doc))
    if missing:
        raise UsageError(f"missing ground truth: {', '.join(missing)}")
    return items


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def read_score(path: Path) -> Score:
    if path.suffix.lower() in (".mid", ".midi"):
        return parse_midi(path.read_bytes())
    return Score.from_json(path.read_text())


def cmd_synth(args, cfg: ExperimentConfig, out: Path) -> int:
    ds = cfg.dataset
    fmt = args.format
    records = []   # (id, signal, truth doc, seed)
    if args.kind == "sequences":
        score_dir = args.scores or ds.score_dir
        template_dir = args.templates or ds.template_dir
        pool = DirectoryPool(template_dir) if template_dir else SyntheticPool(ds.sample_rate)
        snrs = list(args.snr) if args.snr else list(ds.snr_db)
        if score_dir:
            root = Path(score_dir)
            paths = sorted(p for ext in ("*.mid", "*.midi", "*.json") for p in root.glob(ext)) \
                if root.is_dir() else []
            if not paths:
                raise UsageError(f"no score files (*.mid, *.midi, *.json) found in {root}")
            sources = []
            for p in paths:
                seed = P.substream(cfg.seed, "synth", p.name)
                sig, truth = synthesize(read_score(p), pool, seed, instrument=args.instrument)
                sources.append((p.stem, sig, truth))
        else:
            sources = [(it.name, it.signal, it.score)
                       for it in P.onset_corpus(ds, cfg.seed, None, pool)]
        for name, sig, truth in sources:
            base = {"onsets": [float(t) for t in truth.onsets()],
                    "score": json.loads(truth.to_json()),
                    "meta": {k: v for k, v in truth.meta.items() if k != "removed"}}
            for snr in snrs:
                noisy = degrade_snr(sig, snr, P.substream(cfg.seed, "noise", name, snr))
                tag = name if len(snrs) == 1 else f"{name}_snr{snr:g}"
                records.append((tag, noisy, dict(base, snr_db=snr)))
    elif args.kind == "clicks":
        for it in P.click_corpus(ds, cfg.seed):
            records.append((it.name, it.signal, {"onsets": [float(t) for t in it.onsets]}))
    else:
        for it in P.class_corpus(ds, cfg.seed):
            records.append((it.track_id, it.signal, {"label": it.label}))
    files = {}
    provenance = {"seed": cfg.seed, "config_sha256": sha256(cfg.canonical_json().encode()),
                  "kind": args.kind}
    for name, sig, doc in records:
        doc = dict(doc, generation=provenance)
        files[f"{name}.wav"] = write_bytes(out / f"{name}.wav", encode_wav(sig, fmt))
        files[f"{name}.json"] = write_text(out / f"{name}.json", dumps(doc))
    write_manifest(out, "synth", cfg, files, {"kind": args.kind, "n_items": len(records)})
    print(f"synth: wrote {len(records)} items to {out}")
    return 0


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def _feature_job(job):
    data, rep, cfg_json = job
    from .dataset import load_wav

    cfg = ExperimentConfig.model_validate_json(cfg_json)
    fs = cfg.features
    sig = load_wav(data)
    if rep == "scattering":
        from .scattering import scatter

        coeffs = scatter(sig, P.scattering_config(fs.scattering, sig.sample_rate))
        fm = coeffs.to_matrix(fs.scattering.orders)
        extra = {"path_index": [list(p) for p in coeffs.path_index
                                if len(p) in fs.scattering.orders],
                 "scattering": coeffs.config}
    else:
        fm = P.features(sig, rep, fs.frames, fs.scattering)
        extra = {}
    return feature_csv(fm), feature_header(fm, extra)


def cmd_features(args, cfg: ExperimentConfig, out: Path) -> int:
    rep = args.rep or cfg.features.representation
    if args.delta:
        if rep != "mfcc":
            raise UsageError("--delta only applies to --rep mfcc")
        rep = "delta-mfcc"
    inputs = []
    for src in args.inputs:
        p = Path(src)
        if p.is_dir():
            inputs += sorted(p.glob("*.wav"))
        elif p.exists():
            inputs.append(p)
        else:
            raise UsageError(f"input {p} does not exist")
    if not inputs:
        raise UsageError("no input .wav files")
    stems = [p.stem for p in inputs]
    if len(set(stems)) != len(stems):
        raise UsageError("input file names must be unique")
    cfg_json = cfg.canonical_json()
    cache = Path(args.cache) if args.cache else out / ".cache"
    files, todo, keys = {}, [], {}
    blobs = {p: p.read_bytes() for p in inputs}
    for p in inputs:
        key = sha256(b"|".join([blobs[p], rep.encode(), cfg_json.encode(),
                                __version__.encode()]))
        keys[p] = key
        if not (cache / f"{key}.csv").exists():
            todo.append(p)
    results = run_parallel(_feature_job, [(blobs[p], rep, cfg_json) for p in todo], args.jobs)
    for p, (text, header) in zip(todo, results):
        write_text(cache / f"{keys[p]}.csv", text)
        write_text(cache / f"{keys[p]}.json", header)
    log.info("features: %d computed, %d from cache", len(todo), len(inputs) - len(todo))
    for p in inputs:
        for ext in ("csv", "json"):
            dst = out / f"{p.stem}.{rep}.{ext}"
            shutil.copyfile(cache / f"{keys[p]}.{ext}", dst)
            files[dst.name] = sha256(dst.read_bytes())
    inputs_doc = {p.name: sha256(blobs[p]) for p in inputs}
    write_manifest(out, "features", cfg, files, {"representation": rep, "inputs": inputs_doc})
    print(f"features: {rep} for {len(inputs)} files -> {out}")
    return 0


# ---------------------------------------------------------------------------
# onsets
# ---------------------------------------------------------------------------


def _odf_job(job):
    path, rep, cfg_json = job
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    return P.onset_function(read_wav(path), rep, cfg.onset)


def cmd_onsets(args, cfg: ExperimentConfig, out: Path) -> int:
    if args.scales is not None:
        scales = tuple(float(v) for v in args.scales.split(",") if v.strip())
        cfg = cfg.model_copy(update={"onset": cfg.onset.model_validate(
            dict(cfg.onset.model_dump(), scales=scales))})
    reps = args.rep or list(cfg.onset.representations)
    items = list_corpus(Path(args.corpus), "onsets")
    truths = [np.asarray(doc["onsets"], dtype=np.float64) for _, _, doc in items]
    if not any(t.size for t in truths):
        raise UsageError("ground truth has no onsets")
    cfg_json = cfg.canonical_json()
    files, summary = {}, {}
    for rep in reps:
        odfs = run_parallel(_odf_job, [(str(p), rep, cfg_json) for _, p, _ in items], args.jobs)
        roc = P.evaluate_onsets(None, rep, cfg.onset, odfs, truths)
        files[f"roc_{rep}.csv"] = write_text(out / f"roc_{rep}.csv", roc.to_csv())
        files[f"summary_{rep}.json"] = write_text(out / f"summary_{rep}.json",
                                                  roc.summary_json() + "\n")
        summary[rep] = roc.operating_point()
        op = summary[rep]
        print(f"onsets: {rep:12s} E_OP={op['e_op']:.3f} TPR={op['tpr']:.3f} "
              f"FPR={op['fpr']:.4f} F={op['f']:.3f}")
    inputs = {p.name: sha256(p.read_bytes()) for _, p, _ in items}
    write_manifest(out, "onsets", cfg, files, {"inputs": inputs, "operating_points": summary})
    return 0


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------


def _track_job(job):
    path, rep, cfg_json = job
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    return P.track_frames(read_wav(path), rep, cfg.svm)


def cmd_classify(args, cfg: ExperimentConfig, out: Path) -> int:
    reps = args.features or ["clsc"]
    for rep in reps:
        if rep not in ("clsc", "delta-mfcc", "mfcc", "mfsc", "scattering"):
            raise UsageError(f"--features {rep} is not supported for classification")
    items = list_corpus(Path(args.corpus), "label")
    labels = sorted({str(doc["label"]) for _, _, doc in items})
    if len(labels) < 2:
        raise UsageError(f"need at least two classes, found {labels}")
    cfg_json = cfg.canonical_json()
    files, summary = {}, {}
    for rep in reps:
        frames = run_parallel(_track_job, [(str(p), rep, cfg_json) for _, p, _ in items],
                              args.jobs)
        tracks = [Track(tid, str(doc["label"]), f) for (tid, _, doc), f in zip(items, frames)]
        report = P.evaluate_classification(tracks, rep, cfg.svm, cfg.seed)
        files[f"confusion_{rep}.csv"] = write_text(out / f"confusion_{rep}.csv",
                                                   report.confusion.to_csv())
        files[f"errors_{rep}.csv"] = write_text(out / f"errors_{rep}.csv",
                                                report.confusion.error_table_csv())
        files[f"report_{rep}.json"] = write_text(out / f"report_{rep}.json",
                                                 report.to_json() + "\n")
        summary[rep] = report.error_rate
        print(f"classify: {rep:12s} error={report.error_rate:.4f} "
              f"C={report.best_C:g} gamma={report.best_gamma:g}")
    inputs = {p.name: sha256(p.read_bytes()) for _, p, _ in items}
    write_manifest(out, "classify", cfg, files, {"inputs": inputs, "error_rates": summary})
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=d(None), help="override the config seed")
    parser.add_argument("--jobs", type=int, default=d(1), help="worker processes")
    parser.add_argument("--out", default=d("scatmir-out"), help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scatmir", description=__doc__.split("\n\n")[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a corpus with ground truth")
    _global_flags(p, suppress=True)
    p.add_argument("--kind", choices=("sequences", "clicks", "tracks"), default="sequences")
    p.add_argument("--scores", help="directory of .mid/.json scores")
    p.add_argument("--templates", help="template directory (default: built-in synthetic pool)")
    p.add_argument("--instrument", help="pool instrument to render the scores with")
    p.add_argument("--snr", type=float, nargs="+", help="SNR values in dB")
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="compute one representation per WAV file")
    _global_flags(p, suppress=True)
    p.add_argument("inputs", nargs="+", help="WAV files or directories")
    p.add_argument("--rep", choices=REPRESENTATIONS)
    p.add_argument("--delta", action="store_true", help="append deltas (with --rep mfcc)")
    p.add_argument("--cache", help="cache directory (default OUT/.cache)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("onsets", help="onset detection ROC sweep over a corpus")
    _global_flags(p, suppress=True)
    p.add_argument("corpus", help="directory of WAV files with JSON ground truth")
    p.add_argument("--rep", choices=REPRESENTATIONS, action="append")
    p.add_argument("--scales", help="comma-separated threshold scales")
    p.set_defaults(func=cmd_onsets)

    p = sub.add_parser("classify", help="instrument recognition over a labelled corpus")
    _global_flags(p, suppress=True)
    p.add_argument("corpus", help="directory of WAV files with JSON labels")
    p.add_argument("--features", choices=REPRESENTATIONS, action="append")
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config).with_seed(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return args.func(args, cfg, out)
    except (UsageError, InvalidInputError, ParseError, pydantic.ValidationError) as exc:
        print(f"scatmir: error: {exc}", file=sys.stderr)
        return 2
    except (ScatmirError, OSError) as exc:
        print(f"scatmir: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
