"""Command-line entry point: ``coughgan {eda,preprocess,train,generate,classify}``.

Every flag may also be given through an environment variable named
``COUGHGAN_<FLAG>`` (upper case, dashes as underscores); an explicit flag
wins over the environment. Exit codes: 0 ok, 2 usage or input error,
3 empty result, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, features, metadata, storage
from .errors import CoughGanError, EmptyInputError, InsufficientClassError, TrainingError

log = logging.getLogger("coughgan")

EXIT_OK, EXIT_USAGE, EXIT_EMPTY, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


# ----------------------------------------------------------------- parser

def _env_name(flag):
    return "COUGHGAN_" + flag.lstrip("-").replace("-", "_").upper()


def _add(parser, flag, **kw):
    """``add_argument`` whose default may come from ``COUGHGAN_<FLAG>``."""
    env = os.environ.get(_env_name(flag))
    if env is not None:
        if kw.get("action") == "store_true":
            kw["default"] = env.strip().lower() in ("1", "true", "yes", "on")
        else:
            kw["default"] = kw.get("type", str)(env)
        kw["required"] = False
    if "default" in kw and kw.get("action") != "store_true":
        kw["help"] = f"{kw.get('help', '')} (default: %(default)s)".strip()
    elif kw.get("action") == "store_true":
        kw["help"] = f"{kw.get('help', '')} (default: off)".strip()
    kw["help"] = f"{kw['help']} [env {_env_name(flag)}]" if "help" in kw else f"[env {_env_name(flag)}]"
    parser.add_argument(flag, **kw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coughgan", description="Cough segmentation, mel features and ACGAN training.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add(p, "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
         help="logging verbosity")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("eda", help="null, status, physician and diagnosis-match tables")
    _add(s, "--metadata", required=True, help="metadata CSV")
    _add(s, "--out", required=True, help="output directory for the CSV reports")

    s = sub.add_parser("preprocess", help="filter, balance, segment and store coughs")
    _add(s, "--metadata", required=True, help="metadata CSV")
    _add(s, "--audio-dir", required=True, help="directory holding {uuid}.wav files")
    _add(s, "--out", required=True, help="segment store root")
    _add(s, "--seed", type=int, default=0, help="balanced-sampling seed")
    _add(s, "--min-cough-prob", type=float, default=0.5, help="cough_detected threshold")
    _add(s, "--workers", type=int, default=1, help="parallel file workers")

    s = sub.add_parser("train", help="train the ACGAN on a segment store")
    _add(s, "--segments", required=True, help="segment store root")
    _add(s, "--epochs", type=int, default=30, help="training epochs")
    _add(s, "--batch-size", type=int, default=64, help="batch size")
    _add(s, "--latent-dim", type=int, default=100, help="noise vector length")
    _add(s, "--checkpoint-dir", required=True, help="checkpoints, history and samples go here")
    _add(s, "--checkpoint-every", type=int, default=10, help="epochs between checkpoints")
    _add(s, "--test-fraction", type=float, default=0.2, help="held-out share of the maps")
    _add(s, "--seed", type=int, default=0, help="seed for weights, noise and the split")
    _add(s, "--paper-faithful", action="store_true",
         help="fake maps labelled class 0 and generator labels drawn from all but the last class")
    _add(s, "--figures", action="store_true", help="also write PNG sample grids and loss curves")
    _add(s, "--no-samples", action="store_true", help="skip the per-epoch sample export")

    s = sub.add_parser("generate", help="sample maps and audio for one class")
    _add(s, "--checkpoint", required=True, help="checkpoint file")
    _add(s, "--class", dest="class_name", required=True, help="class name")
    _add(s, "--count", type=int, default=4, help="number of samples")
    _add(s, "--out", required=True, help="output directory")
    _add(s, "--seed", type=int, default=0, help="noise seed")
    _add(s, "--griffin-lim-iters", type=int, default=32, help="phase reconstruction iterations")

    s = sub.add_parser("classify", help="per-class probabilities for WAV files")
    _add(s, "--checkpoint", required=True, help="checkpoint file")
    s.add_argument("files", nargs="+", help="WAV files")
    return p


# ---------------------------------------------------------------- commands

def cmd_eda(args) -> int:
    try:
        records = metadata.load_metadata(args.metadata)
    except (OSError, CoughGanError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read metadata {args.metadata}: {exc}") from None
    for path in metadata.write_reports(records, args.out):
        print(path)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    from .dsp import SegmentConfig, fix_length, preprocess_cough, segment_cough
    from .wavio import load_wav

    try:
        records = metadata.load_metadata(args.metadata)
    except (OSError, CoughGanError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read metadata {args.metadata}: {exc}") from None
    kept = metadata.fill_unknown(metadata.quality_filter(records, p_min=args.min_cough_prob))
    try:
        selected = metadata.balanced_sample(kept, args.seed)
    except InsufficientClassError as exc:
        raise CliError(str(exc), EXIT_EMPTY) from None

    def work(rec):
        path = os.path.join(args.audio_dir, f"{rec.uuid}.wav")
        if not os.path.exists(path):
            return rec, None
        try:
            processed, fs = preprocess_cough(load_wav(path))
        except (OSError, CoughGanError) as exc:
            return rec, exc
        segs = segment_cough(processed.samples, fs, SegmentConfig()).segments
        return rec, [fix_length(s, features.SEGMENT_SAMPLES).astype(np.float32) for s in segs]

    if args.workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(args.workers) as pool:
            results = list(pool.map(work, selected))  # map keeps input order
    else:
        results = [work(r) for r in selected]

    missing, unreadable, segments = 0, 0, {}
    for rec, segs in results:
        if segs is None:
            missing += 1
            log.warning("missing audio for %s", rec.uuid)
        elif isinstance(segs, Exception):
            unreadable += 1
            log.warning("unreadable audio for %s: %s", rec.uuid, segs)
        else:
            segments[(rec.uuid, rec.status)] = segs
    if missing or unreadable:
        print(f"skipped {missing} record(s) without audio and {unreadable} unreadable", file=sys.stderr)
    manifest = storage.store_segments(segments, args.out)
    if not manifest:
        raise CliError("no cough segments found", EXIT_EMPTY)
    storage.write_manifest(manifest, os.path.join(args.out, "manifest.csv"))
    counts = {}
    for e in manifest:
        counts[e.status] = counts.get(e.status, 0) + 1
    print("status | segments")
    for status in sorted(counts):
        print(f"{status} | {counts[status]}")
    return EXIT_OK


def class_names_for(statuses) -> tuple[str, ...]:
    """Class list for a store: the three metadata statuses when every folder
    names one of them, otherwise the sorted folder names themselves."""
    canonical = {s.lower(): s for s in metadata.STATUSES}
    if all(s in canonical for s in statuses):
        return tuple(metadata.STATUSES)
    return tuple(sorted(statuses))


def load_store(root):
    """Featurize every stored segment; returns ``(maps, labels, class_names)``."""
    from .dsp import fix_length

    if not os.path.isdir(root):
        raise CliError(f"segment store {root} does not exist")
    entries = storage.scan_store(root)
    if not entries:
        raise CliError(f"no segments under {root}", EXIT_EMPTY)
    names = class_names_for(sorted({e.status for e in entries}))
    lowered = [n.lower() for n in names]
    maps = np.empty((len(entries),) + features.MAP_SHAPE, np.float32)
    labels = np.empty(len(entries), np.int64)
    for i, e in enumerate(entries):
        seg = fix_length(storage.npy_read(e.path), features.SEGMENT_SAMPLES)
        maps[i] = features.featurize(seg).values
        labels[i] = lowered.index(e.status)
    return maps, labels, names


def split_train_test(n, fraction, seed):
    """Seeded permutation; the first ``round(n * fraction)`` indices are held out."""
    if not 0 <= fraction < 1:
        raise CliError("--test-fraction must lie in [0, 1)")
    order = np.random.default_rng(np.random.SeedSequence([seed, 1])).permutation(n)
    n_test = int(round(n * fraction))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


GEN_HEADER = "epoch | component | total loss | real/fake loss | class loss"
DISC_HEADER = GEN_HEADER + " | real/fake acc | class acc"


def format_tables(model, epoch) -> str:
    h = model.history
    lines = [GEN_HEADER]
    for split, table in (("train", h.train), ("test", h.test)):
        if table.get("generator"):
            r = table["generator"][epoch]
            lines.append(f"{epoch + 1} | generator ({split}) | {r.total:.4f} | {r.validity_loss:.4f} | "
                         f"{r.class_loss:.4f}")
    lines.append(DISC_HEADER)
    for split, table in (("train", h.train), ("test", h.test)):
        for series, label in (("discriminator_real", "real"), ("discriminator_fake", "fake")):
            if table.get(series):
                r = table[series][epoch]
                lines.append(f"{epoch + 1} | discriminator {label} ({split}) | {r.total:.4f} | "
                             f"{r.validity_loss:.4f} | {r.class_loss:.4f} | {r.validity_accuracy:.3f} | "
                             f"{r.class_accuracy:.3f}")
    return "\n".join(lines)


def cmd_train(args) -> int:
    from .acgan import ACGAN, TrainConfig
    from .errors import ConfigError

    maps, labels, names = load_store(args.segments)
    train_idx, test_idx = split_train_test(len(maps), args.test_fraction, args.seed)
    try:
        cfg = TrainConfig(latent_dim=args.latent_dim, num_classes=len(names), batch_size=args.batch_size,
                          epochs=args.epochs, checkpoint_every=args.checkpoint_every, seed=args.seed,
                          paper_faithful=args.paper_faithful, class_names=names)
    except ConfigError as exc:
        raise CliError(str(exc)) from None
    if len(train_idx) < cfg.batch_size:
        raise CliError(f"{len(train_idx)} training maps, fewer than batch size {cfg.batch_size}", EXIT_EMPTY)
    model = ACGAN(cfg)
    print(f"classes: {', '.join(names)}; train {len(train_idx)}, test {len(test_idx)}")
    try:
        model.train(maps[train_idx], labels[train_idx], maps[test_idx], labels[test_idx],
                    out_dir=args.checkpoint_dir, export_samples=not args.no_samples, figures=args.figures,
                    on_epoch=lambda m, e: print(format_tables(m, e), flush=True))
    except TrainingError as exc:
        raise CliError(f"training diverged at {exc}", EXIT_NUMERIC) from None
    except EmptyInputError as exc:
        raise CliError(str(exc), EXIT_EMPTY) from None
    return EXIT_OK


def _load_model(path):
    from .checkpoint import load_checkpoint
    try:
        return load_checkpoint(path)
    except (OSError, CoughGanError) as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}") from None


def cmd_generate(args) -> int:
    from .export import export_samples

    model = _load_model(args.checkpoint)
    names = model.cfg.class_names
    lowered = [n.lower() for n in names]
    if args.class_name.lower() not in lowered:
        raise CliError(f"unknown class {args.class_name!r}; valid classes: {', '.join(names)}")
    if args.count <= 0:
        raise CliError("--count must be positive")
    labels = np.full(args.count, lowered.index(args.class_name.lower()))
    unit, raw = model.sample(labels, seed=args.seed)
    stem = names[labels[0]].lower()
    for path in export_samples(unit, raw, args.out, prefix=stem, griffin_lim_iters=args.griffin_lim_iters):
        print(path)
    return EXIT_OK


def cmd_classify(args) -> int:
    from .acgan import classify

    model = _load_model(args.checkpoint)
    names = model.cfg.class_names
    print(" | ".join(["file", *names, "prediction"]))
    failures = 0
    for res in classify(model, args.files):
        if res.error is not None:
            failures += 1
            print(f"{res.path} | error: {res.error}")
        elif res.no_cough:
            print(f"{res.path} | no cough detected")
        else:
            cells = [f"{p:.3f}" + ("*" if k == res.label else "") for k, p in enumerate(res.probs)]
            print(" | ".join([res.path, *cells, names[res.label]]))
    if failures == len(args.files):
        raise CliError("no file could be read")
    return EXIT_OK


COMMANDS = {"eda": cmd_eda, "preprocess": cmd_preprocess, "train": cmd_train,
            "generate": cmd_generate, "classify": cmd_classify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"coughgan {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except FloatingPointError as exc:
        print(f"coughgan {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
