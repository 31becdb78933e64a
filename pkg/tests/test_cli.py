import re
from pathlib import Path

import numpy as np
import pytest

from faultwave import cli, config
from faultwave.datastore import Manifest, read_spectrogram
from faultwave.evalharness import SweepResult

SMALL = """\
sigmodel.trials=2
sigmodel.duration_s=0.6
sigmodel.carriers_hz=2400000000.0
sigmodel.distances_m=0.0
spectro.hop=32
dcnn.channel_scale=1/32
train.epochs=1
train.batch_size=4
datastore.train_fraction=0.5
eval.seeds=0
eval.durations_s=0.6
"""


def files(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.cfg"
    cfg.write_text(SMALL)
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(root / "data")]) == 0
    assert cli.main(["spectrogram", "--config", str(cfg), "--manifest", str(root / "data/manifest.tsv"),
                     "--merge", "--emit-images", "--out", str(root / "specs")]) == 0
    assert cli.main(["train", "--config", str(cfg), "--manifest", str(root / "specs/manifest.tsv"),
                     "--out", str(root / "model")]) == 0
    return root, cfg


def test_dry_run_prints_dimensions_and_writes_nothing(tmp_path, capsys):
    assert cli.main(["simulate", "--dry-run", "--out", str(tmp_path / "x")]) == 0
    out = capsys.readouterr().out
    assert "4 conditions x 3 carriers x 3 distances x 40 trials x 2 S-parameters = 2880 traces" in out
    assert not (tmp_path / "x").exists()


def test_simulate_layout_and_summary(work, capsys):
    root, _ = work
    manifest = Manifest.load(root / "data/manifest.tsv")
    assert len(manifest) == 4 * 2 * 2
    paths = [r.path for r in manifest]
    assert "2400MHz_0cm/OuterRace/S21_t001.sptr" in paths
    manifest.verify(root / "data")
    assert config.load(root / "data" / config.CONFIG_FILENAME) == config.load(root / "small.cfg")


def test_simulate_summary_line_per_cell(tmp_path, work, capsys):
    _, cfg = work
    cli.main(["simulate", "--config", str(cfg), "--distance-m", "0.05", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert re.search(r"^cell\tcarrier_hz=2\.4e\+09\tdistance_m=0\.05\ttraces=16$", out, re.M)


def test_simulate_repeat_is_byte_identical(tmp_path, work):
    root, cfg = work
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
    assert files(tmp_path / "again") == files(root / "data")


def test_seed_flag_overrides_config(tmp_path, work):
    root, cfg = work
    cli.main(["simulate", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path)])
    assert config.load(tmp_path / config.CONFIG_FILENAME).seed == 7
    a = (tmp_path / "2400MHz_0cm/Normal/S11_t000.sptr").read_bytes()
    assert a != (root / "data/2400MHz_0cm/Normal/S11_t000.sptr").read_bytes()


def test_merged_caches_are_160x80(work):
    root, _ = work
    manifest = Manifest.load(root / "specs/manifest.tsv")
    assert len(manifest) == 8
    assert {r.kind for r in manifest} == {"both"}
    rec = read_spectrogram(root / "specs" / manifest.records[0].path)
    assert rec.spectrogram.values.shape == (160, 80)
    assert rec.modality == "both"
    pgm = (root / "specs" / manifest.records[0].path).with_suffix(".pgm").read_bytes()
    assert pgm.startswith(b"P5 80 160 255\n")


def test_spectrogram_cache_idempotent(tmp_path, work):
    root, cfg = work
    args = ["spectrogram", "--config", str(cfg), "--manifest", str(root / "data/manifest.tsv"),
            "--merge", "--emit-images", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    assert files(tmp_path) == files(root / "specs")


def test_single_spectrograms_per_trace(tmp_path, work):
    root, cfg = work
    assert cli.main(["spectrogram", "--config", str(cfg), "--manifest", str(root / "data/manifest.tsv"),
                     "--out", str(tmp_path)]) == 0
    manifest = Manifest.load(tmp_path / "manifest.tsv")
    assert len(manifest) == 16
    assert read_spectrogram(tmp_path / manifest.records[0].path).spectrogram.values.shape == (80, 80)


def test_unpaired_trial_lists_missing_partner(tmp_path, work, capsys):
    root, _ = work
    text = (root / "data/manifest.tsv").read_text()
    kept = [ln for ln in text.splitlines() if "Imbalance/S21_t001" not in ln]
    (tmp_path / "manifest.tsv").write_text("\n".join(kept) + "\n")
    (tmp_path / "2400MHz_0cm").symlink_to(root / "data/2400MHz_0cm")
    code = cli.main(["spectrogram", "--manifest", str(tmp_path / "manifest.tsv"), "--merge",
                     "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "Imbalance" in err and "trial=1 lacks S21" in err
    assert not (tmp_path / "out").exists()


def test_train_outputs(work):
    root, _ = work
    model = root / "model"
    for name in ("model.fwnn", "history.tsv", "split.tsv", config.CONFIG_FILENAME):
        assert (model / name).is_file()
    rows = (model / "split.tsv").read_text().splitlines()
    assert rows[0] == "path\trole"
    roles = [r.split("\t")[1] for r in rows[1:]]
    assert roles.count("train") == roles.count("val") == 4


def test_train_is_byte_reproducible(tmp_path, work):
    root, cfg = work
    assert cli.main(["train", "--config", str(cfg), "--threads", "1", "--manifest",
                     str(root / "specs/manifest.tsv"), "--out", str(tmp_path)]) == 0
    assert files(tmp_path) == files(root / "model")


def test_evaluate_on_val_split(tmp_path, work, capsys):
    root, cfg = work
    assert cli.main(["evaluate", "--config", str(cfg), "--model", str(root / "model/model.fwnn"),
                     "--manifest", str(root / "specs/manifest.tsv"), "--split", str(root / "model/split.tsv"),
                     "--out", str(tmp_path)]) == 0
    head, row = capsys.readouterr().out.splitlines()
    assert head == "case\taccuracy\tprecision\trecall\tf1"
    assert row.startswith("both\t")
    for name in ("metrics.tsv", "per_class.tsv", "confusion.tsv", "confusion.pgm", "confusion.png",
                 config.CONFIG_FILENAME):
        assert (tmp_path / name).is_file()
    cm = (tmp_path / "confusion.tsv").read_text().splitlines()
    assert sum(int(v) for ln in cm[1:] for v in ln.split("\t")[1:]) == 4


def test_evaluate_perfect_oracle_stub(tmp_path):
    images = {(c, t): np.full((4, 4), c / 3) for c in range(4) for t in range(3)}
    report = cli.evaluate_images(lambda x: np.rint(x[:, 0, 0] * 3).astype(int), images, tmp_path)
    assert (report.accuracy, report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0, 1.0)
    assert (tmp_path / "metrics.tsv").read_text().splitlines()[1] == "model\t1.000000\t1.000000\t1.000000\t1.000000"


def test_predict_spgm_and_sptr(work, capsys):
    root, _ = work
    single = root / "single"
    if not single.exists():
        cli.main(["spectrogram", "--config", str(root / "small.cfg"), "--manifest",
                  str(root / "data/manifest.tsv"), "--out", str(single)])
    cli.main(["train", "--config", str(root / "small.cfg"), "--modality", "s11",
              "--manifest", str(single / "manifest.tsv"), "--out", str(root / "model11")])
    capsys.readouterr()
    spgm = single / "2400MHz_0cm/Normal/S11_t000.spgm"
    sptr = root / "data/2400MHz_0cm/Normal/S11_t000.sptr"
    assert cli.main(["predict", "--config", str(root / "small.cfg"), "--model",
                     str(root / "model11/model.fwnn"), str(spgm), str(sptr)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split("\t") == ["path", "label", "p_Normal", "p_Imbalance", "p_InnerRace", "p_OuterRace"]
    a, b = (ln.split("\t") for ln in lines[1:])
    # the cached image and the on-the-fly one come from the same trace
    assert a[1:] == b[1:]
    assert sum(float(p) for p in a[2:]) == pytest.approx(1.0, abs=1e-5)


def test_sweep_duration_tsv_schema(tmp_path, work, capsys):
    _, cfg = work
    assert cli.main(["sweep", "--config", str(cfg), "--axis", "duration", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "sweep_duration_s.tsv").read_text()
    assert text.splitlines()[0] == "duration_s\tmodality\tcarrier_hz\taccuracy\tn_seeds\tseed_accuracies"
    res = SweepResult.from_tsv(text)
    assert [(r.setting, r.modality, len(r.seed_accuracies)) for r in res.rows] == [(0.6, "both", 1)]
    assert res.to_tsv() == text
    assert (tmp_path / "sweep_duration_s.png").read_bytes()[:4] == b"\x89PNG"
    assert (tmp_path / config.CONFIG_FILENAME).is_file()


def test_exit_code_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("sigmodel.bogus=1\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "unknown key" in capsys.readouterr().err
    assert cli.main(["simulate"]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", "--axis", "sideways", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--carrier", "1e9", "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_exit_code_io_errors(tmp_path, capsys):
    assert cli.main(["spectrogram", "--manifest", str(tmp_path / "none.tsv"), "--out", str(tmp_path)]) == cli.EXIT_IO
    junk = tmp_path / "m.fwnn"
    junk.write_bytes(b"not a model")
    assert cli.main(["predict", "--model", str(junk), str(junk)]) == cli.EXIT_IO
    assert "I/O error" in capsys.readouterr().err


def test_exit_code_numeric_error(tmp_path, work, capsys):
    root, cfg = work
    blowup = tmp_path / "blowup.cfg"
    blowup.write_text(cfg.read_text() + "train.learning_rate=1e300\n")
    code = cli.main(["train", "--config", str(blowup), "--manifest", str(root / "specs/manifest.tsv"),
                     "--out", str(tmp_path / "n")])
    assert code == cli.EXIT_NUMERIC
    assert "non-finite" in capsys.readouterr().err
    assert not (tmp_path / "n").exists()


def test_bad_log_level(monkeypatch, tmp_path):
    monkeypatch.setenv("FAULTWAVE_LOG", "chatty")
    assert cli.main(["simulate", "--dry-run", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
