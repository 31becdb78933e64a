"""``faultwave`` command-line interface.

Typical flow::

    faultwave simulate    --config run.cfg --out data/
    faultwave spectrogram --manifest data/manifest.tsv --merge --out specs/
    faultwave train       --manifest specs/manifest.tsv --out model/
    faultwave evaluate    --model model/model.fwnn --manifest specs/manifest.tsv \\
                          --split model/split.tsv --out report/
    faultwave sweep       --axis duration --out sweeps/

Exit codes: 0 ok, 1 configuration error, 2 I/O or format error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from faultwave import __version__, config, evalharness, pipeline, sigmodel
from faultwave.datastore import (
    Manifest,
    ManifestRecord,
    SpectrogramRecord,
    atomic_write,
    read_spectrogram,
    read_trace,
    write_spectrogram,
    write_trace,
)
from faultwave.dcnn import load_network, predict_labels, save_network
from faultwave.errors import ConfigurationError, DomainError, FormatError, NumericError
from faultwave.sigmodel import FaultCondition
from faultwave.spectro import merge, render_pgm, trace_to_spectrogram

log = logging.getLogger("faultwave")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST_NAME = "manifest.tsv"
_KIND_FOR_MODALITY = {"s11": "S11", "s21": "S21", "both": "both"}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which this tool reserves for I/O
    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def _cell_dir(carrier_hz: float, distance_m: float) -> str:
    return f"{carrier_hz / 1e6:g}MHz_{distance_m * 100:g}cm"


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def _write_config(cfg: config.RunConfig, out_dir: Path) -> None:
    atomic_write(out_dir / config.CONFIG_FILENAME, config.dumps(cfg).encode("utf-8"))


def resolve_config(args) -> config.RunConfig:
    """Config file (if any) overlaid by command-line flags."""
    cfg = config.load(args.config) if args.config else config.RunConfig()
    over = {}
    if args.seed is not None:
        over["run.seed"] = str(args.seed)
    if args.threads is not None:
        over["run.threads"] = str(args.threads)
    if getattr(args, "modality", None):
        over["run.modality"] = args.modality
    if getattr(args, "carrier", None) is not None:
        over["sigmodel.carriers_hz"] = repr(args.carrier)
    if getattr(args, "distance_m", None) is not None:
        over["sigmodel.distances_m"] = repr(args.distance_m)
    return config.apply(cfg, over, "command line")


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args, cfg: config.RunConfig) -> int:
    if args.duration_s is not None:
        cfg = config.apply(cfg, {"sigmodel.duration_s": repr(args.duration_s)}, "command line")
    plan = cfg.dataset_plan()
    sigmodel.check_plan(plan)
    dims = (
        f"{len(plan.conditions)} conditions x {len(plan.antennas)} carriers x "
        f"{len(plan.distances_m)} distances x {plan.trials} trials x {len(plan.kinds)} S-parameters"
    )
    if args.dry_run:
        print(f"plan: {dims} = {plan.n_traces} traces of {plan.duration_s:g} s at {plan.sample_rate_hz:g} Hz")
        return EXIT_OK
    out = Path(args.out)
    records, counts = [], {}
    for trace in sigmodel.generate_dataset(plan):
        m = trace.metadata
        rel = (
            f"{_cell_dir(m.carrier_hz, m.distance_m)}/{m.fault.label}/"
            f"{m.sparam_kind.name}_t{m.trial_index:03d}.sptr"
        )
        write_trace(trace, out / rel)
        records.append(ManifestRecord(rel, m.fault, m.sparam_kind.name, m.carrier_hz, m.distance_m, m.trial_index))
        cell = (m.carrier_hz, m.distance_m)
        counts[cell] = counts.get(cell, 0) + 1
    Manifest(records).save(out / MANIFEST_NAME)
    _write_config(cfg, out)
    for (carrier, dist), n in sorted(counts.items()):
        print(f"cell\tcarrier_hz={carrier:g}\tdistance_m={dist:g}\ttraces={n}")
    print(f"wrote {len(records)} traces ({dims}) to {out}")
    return EXIT_OK


# -- spectrogram -------------------------------------------------------------


def _load_manifest(path) -> tuple[Manifest, Path]:
    path = Path(path)
    return Manifest.load(path), path.parent


def cmd_spectrogram(args, cfg: config.RunConfig) -> int:
    manifest, root = _load_manifest(args.manifest)
    trace_recs = [r for r in manifest if r.kind in ("S11", "S21")]
    if not trace_recs:
        raise ConfigurationError(f"{args.manifest} lists no S11/S21 traces")
    stft = cfg.pipeline.stft
    duration = args.duration_s

    def image(rec):
        tr = read_trace(root / rec.path)
        if duration is not None and duration < tr.duration_s - 1e-12:
            tr = tr.truncated(duration, cfg.pipeline.duration_offset_s)
        return trace_to_spectrogram(tr, stft)

    jobs = []  # (relative path, record, spectrogram)
    if args.merge:
        pairs: dict = {}
        for r in trace_recs:
            pairs.setdefault(r.pair_key, {})[r.kind] = r
        missing = [
            f"{FaultCondition(k[0]).label} carrier={k[1]:g} distance={k[2]:g} trial={k[3]} lacks "
            + ("S21" if "S11" in p else "S11")
            for k, p in sorted(pairs.items()) if len(p) != 2
        ]
        if missing:
            raise ConfigurationError("cannot merge, unpaired trials:\n  " + "\n  ".join(missing))
        for key in sorted(pairs):
            s11, s21 = pairs[key]["S11"], pairs[key]["S21"]
            rel = str(Path(s11.path).with_name(f"both_t{s11.trial:03d}.spgm"))
            jobs.append((rel, s11, merge(image(s11), image(s21)), "both"))
    else:
        for r in trace_recs:
            jobs.append((str(Path(r.path).with_suffix(".spgm")), r, image(r), r.kind.lower()))

    out = Path(args.out)
    records = []
    for rel, src, spec, modality in jobs:
        rec = SpectrogramRecord(spec, src.fault, modality, src.carrier_hz, src.distance_m, src.trial)
        write_spectrogram(rec, out / rel, cfg.spectrogram_dtype)
        if args.emit_images:
            atomic_write((out / rel).with_suffix(".pgm"), render_pgm(spec))
        records.append(ManifestRecord(rel, src.fault, _KIND_FOR_MODALITY[modality], src.carrier_hz, src.distance_m, src.trial))
    Manifest(records).save(out / MANIFEST_NAME)
    _write_config(cfg, out)
    h, w = jobs[0][2].values.shape
    print(f"wrote {len(records)} {h}x{w} spectrograms to {out}")
    return EXIT_OK


# -- train / evaluate / predict ----------------------------------------------


def _select(manifest: Manifest, cfg: config.RunConfig, modality: str) -> list[ManifestRecord]:
    kind = _KIND_FOR_MODALITY[modality]
    chosen = [
        r for r in manifest
        if r.kind == kind
        and any(_close(r.carrier_hz, c) for c in cfg.carriers_hz)
        and any(_close(r.distance_m, d) for d in cfg.distances_m)
    ]
    if not chosen:
        raise ConfigurationError(
            f"no {kind} spectrograms match carriers {cfg.carriers_hz} and distances {cfg.distances_m}"
        )
    return chosen


def _image_key(rec: ManifestRecord) -> tuple:
    # fault first: the split stratifies on key[0]
    return (int(rec.fault), rec.carrier_hz, rec.distance_m, rec.trial)


def _load_images(root: Path, records) -> dict:
    images = {}
    for r in records:
        key = _image_key(r)
        if key in images:
            raise ConfigurationError(f"duplicate spectrogram for {key} ({r.path})")
        images[key] = read_spectrogram(root / r.path).spectrogram.values
    return images


def cmd_train(args, cfg: config.RunConfig) -> int:
    manifest, root = _load_manifest(args.manifest)
    records = _select(manifest, cfg, cfg.modality)
    images = _load_images(root, records)
    result = pipeline.train_and_evaluate(images, cfg.pipeline, cfg.seed, cfg.threads)
    out = Path(args.out)
    by_key = {_image_key(r): r.path for r in records}
    split = ["path\trole"] + [f"{by_key[k]}\ttrain" for k in result.train_keys]
    split += [f"{by_key[k]}\tval" for k in result.val_keys]
    save_network(result.network, out / "model.fwnn")
    atomic_write(out / "history.tsv", result.history.to_tsv().encode("utf-8"))
    atomic_write(out / "split.tsv", ("\n".join(split) + "\n").encode("utf-8"))
    _write_config(cfg, out)
    print(
        f"trained on {len(result.train_keys)} {cfg.modality} images, "
        f"held-out accuracy {result.accuracy:.4f} ({len(result.val_keys)} images)"
    )
    return EXIT_OK


def _read_split(path) -> dict[str, str]:
    roles = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "path\trole":
        raise FormatError(f"{path}: missing 'path<TAB>role' header")
    for n, line in enumerate(lines[1:], 2):
        p, sep, role = line.partition("\t")
        if not sep or role not in ("train", "val"):
            raise FormatError(f"{path}:{n}: expected '<path>\\t<train|val>'")
        roles[p] = role
    return roles


def evaluate_images(predict_fn, images: dict, out: Path) -> evalharness.MetricsReport:
    """Score ``predict_fn`` on ``images`` (keys start with the fault code) and write the report."""
    keys = sorted(images)
    truth = np.array([k[0] for k in keys])
    preds = np.asarray(predict_fn(np.stack([images[k] for k in keys])))
    cm = evalharness.confusion(preds, truth)
    report = evalharness.metrics(cm)
    atomic_write(out / "metrics.tsv", report.to_tsv("model").encode("utf-8"))
    atomic_write(out / "per_class.tsv", report.per_class_tsv().encode("utf-8"))
    atomic_write(out / "confusion.tsv", cm.to_tsv().encode("utf-8"))
    atomic_write(out / "confusion.pgm", cm.to_pgm())
    from faultwave.plotting import plot_confusion

    plot_confusion(cm, out / "confusion.png")
    if report.flagged:
        log.warning("classes with empty precision/recall denominators: %s", report.flagged)
    return report


def cmd_evaluate(args, cfg: config.RunConfig) -> int:
    net = load_network(args.model)
    manifest, root = _load_manifest(args.manifest)
    records = _select(manifest, cfg, cfg.modality)
    if args.split:
        roles = _read_split(args.split)
        records = [r for r in records if roles.get(r.path) == "val"]
        if not records:
            raise ConfigurationError(f"{args.split} marks none of the selected spectrograms as val")
    images = _load_images(root, records)
    out = Path(args.out)
    report = evaluate_images(lambda x: predict_labels(net, x), images, out)
    _write_config(cfg, out)
    sys.stdout.write(report.to_tsv(cfg.modality))
    return EXIT_OK


def cmd_predict(args, cfg: config.RunConfig) -> int:
    net = load_network(args.model)
    lines = ["path\tlabel\t" + "\t".join(f"p_{n}" for n in evalharness.CLASS_NAMES)]
    for name in args.inputs:
        path = Path(name)
        with open(path, "rb") as fh:
            magic = fh.read(4)
        if magic == b"SPTR":
            values = trace_to_spectrogram(read_trace(path), cfg.pipeline.stft).values
        else:
            values = read_spectrogram(path).spectrogram.values
        probs = net.predict_proba(values[None])[0]
        label = FaultCondition(int(np.argmax(probs))).label
        lines.append(f"{name}\t{label}\t" + "\t".join(f"{p:.6f}" for p in probs))
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(Path(args.out), text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- sweep -------------------------------------------------------------------


def cmd_sweep(args, cfg: config.RunConfig) -> int:
    out = Path(args.out)
    modalities = (args.modality,) if args.modality else None
    if args.axis == "duration":
        durations = (args.duration_s,) if args.duration_s is not None else cfg.durations_s
        result = evalharness.sweep_duration(
            cfg.pipeline, durations, modalities or (cfg.modality,), cfg.seeds,
            cfg.antennas[0] if args.carrier is not None else sigmodel.ANTENNA_2G4,
            cfg.distances_m[0] if args.distance_m is not None else 0.0,
            threads=cfg.threads,
        )
    else:
        result = evalharness.sweep_distance(
            cfg.pipeline, cfg.distances_m, cfg.antennas, modalities or cfg.modalities,
            cfg.seeds, threads=cfg.threads,
        )
    from faultwave.plotting import plot_sweep

    tsv = result.to_tsv()
    atomic_write(out / f"sweep_{result.axis}.tsv", tsv.encode("utf-8"))
    plot_sweep(result, out / f"sweep_{result.axis}.png")
    _write_config(cfg, out)
    sys.stdout.write(tsv)
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value run config file")
    common.add_argument("--seed", type=int, help="root seed (overrides run.seed)")
    common.add_argument("--threads", type=int, help="BLAS thread cap; 1 is bit-deterministic")

    modality = _Parser(add_help=False)
    modality.add_argument("--modality", choices=pipeline.MODALITIES)

    select = _Parser(add_help=False)
    select.add_argument("--carrier", type=float, help="restrict to one carrier (Hz)")
    select.add_argument("--distance-m", type=float, help="restrict to one antenna distance")

    parser = _Parser(prog="faultwave", description="S-parameter motor fault classification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common, select], help="synthesize traces and a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--duration-s", type=float, help="trace length (overrides sigmodel.duration_s)")
    p.add_argument("--dry-run", action="store_true", help="print plan dimensions, write nothing")

    p = sub.add_parser("spectrogram", parents=[common], help="cache classifier images for a trace manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--merge", action="store_true", help="stack paired S11/S21 images (160x80)")
    p.add_argument("--duration-s", type=float, help="use only the leading window of each trace")
    p.add_argument("--emit-images", action="store_true", help="also write 8-bit PGM images")

    p = sub.add_parser("train", parents=[common, select, modality], help="train on a spectrogram manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common, select, modality], help="score a model, write metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", help="split.tsv from train; evaluates only its val rows")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", parents=[common], help="classify SPGM or SPTR files")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="write the TSV here instead of stdout")
    p.add_argument("inputs", nargs="+")

    p = sub.add_parser("sweep", parents=[common, select, modality], help="duration or distance accuracy sweep")
    p.add_argument("--axis", choices=("duration", "distance"), required=True)
    p.add_argument("--duration-s", type=float, help="one-point duration sweep")
    p.add_argument("--out", required=True)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "spectrogram": cmd_spectrogram,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
}


def _setup_logging() -> None:
    level = os.environ.get("FAULTWAVE_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigurationError(f"FAULTWAVE_LOG={level!r} is not a logging level")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cfg.threads):
            return _COMMANDS[args.command](args, cfg)
    except (ConfigurationError, DomainError) as exc:
        print(f"faultwave: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"faultwave: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, FloatingPointError) as exc:
        print(f"faultwave: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
