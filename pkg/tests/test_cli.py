import json
from pathlib import Path

import numpy as np
import pytest

from mpc_acoustic.cli import main
from mpc_acoustic.cli.commands import (
    DataError,
    cmd_avg_checkpoints,
    cmd_evaluate,
    cmd_finetune,
    cmd_inspect_checkpoint,
    cmd_pretrain,
    cmd_synth_data,
)
from mpc_acoustic.cli.config import DEFAULT_CONFIG, ConfigError, load_config, parse_config
from mpc_acoustic.cli.container import (
    MAGIC,
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    read_container,
    save_checkpoint,
    write_container,
)
from mpc_acoustic.cli.manifest import ManifestError, ManifestRecord, read_manifest, write_manifest
from mpc_acoustic.numerics import AdamState

# tiny runs keep fewer than five checkpoints on purpose
pytestmark = pytest.mark.filterwarnings("ignore:only .* checkpoints available")

TINY_MODEL = """
[model]
d_model = 16
ffn = 32
heads = 2
dropout = 0.0
enc_layers = 1
dec_layers = 1

[schedule]
k = 0.05
warmup_n = 10
"""


def write_config(tmp_path, task, manifest, extra="", valid=""):
    run = f"[run]\ntask = {task}\nseed = 0\nbatch_size = 4\nmax_steps = 6\neval_every = 2\n"
    run += f"train_manifest = {manifest}\n"
    if valid:
        run += f"valid_manifest = {valid}\n"
    run += "checkpoint_dir = ck\n" + extra
    path = tmp_path / f"{task}.cfg"
    path.write_text(run + TINY_MODEL)
    return path


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpora")
    return {kind: cmd_synth_data(kind, 8, 0, root / kind) for kind in ("pretrain", "tag", "seq2seq")}


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def test_default_config_parses_with_full_size_values():
    cfg = parse_config(DEFAULT_CONFIG)
    m = cfg.model
    assert (m.d_model, m.ffn, m.heads, m.dropout, m.enc_layers, m.dec_layers) == (256, 2048, 4, 0.1, 12, 6)
    assert cfg.mask_rate == 0.15 and cfg.label_smoothing == 0.1 and cfg.beam == 10
    assert (cfg.schedule.k, cfg.schedule.warmup_n) == (0.5, 8000)


def test_task_schedule_defaults():
    cfg = parse_config("[run]\ntask = seq2seq\n")
    assert (cfg.schedule.k, cfg.schedule.warmup_n) == (2.5, 25000)
    assert cfg.speed_perturb == (0.9, 1.1)
    assert parse_config("[run]\ntask = pretrain\n").speed_perturb == ()


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError, match=r"\[model\] d_modle: unknown key"):
        parse_config("[model]\nd_modle = 8\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[extras]\nx = 1\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("[run]\nbatch_size = many\n")


def test_validation_reports_fields(tmp_path):
    cfg = parse_config("[run]\ntask = pretrain\nbatch_size = 0\ntrain_manifest = nope.tsv\n", tmp_path)
    with pytest.raises(ConfigError) as err:
        cfg.validate()
    assert "batch_size" in str(err.value) and "nope.tsv" in str(err.value)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def test_manifest_round_trip(tmp_path):
    recs = [ManifestRecord("a", tmp_path / "a.wav", "dog"), ManifestRecord("b", tmp_path / "w" / "b.wav", None, "x y")]
    write_manifest(tmp_path / "m.tsv", recs)
    back = read_manifest(tmp_path / "m.tsv")
    assert [(r.utt_id, r.audio_path, r.label, r.text) for r in back] == [
        ("a", tmp_path / "a.wav", "dog", None), ("b", tmp_path / "w" / "b.wav", None, "x y")]
    assert "\tw/b.wav" in (tmp_path / "m.tsv").read_text()


def test_manifest_duplicate_ids_report_lines(tmp_path):
    (tmp_path / "m.tsv").write_text("# header\na\tx.wav\n\nb\ty.wav\na\tz.wav\n")
    with pytest.raises(ManifestError, match=r"m\.tsv:5: duplicate id 'a' \(first on line 2\)"):
        read_manifest(tmp_path / "m.tsv")


def test_manifest_task_fields(tmp_path):
    (tmp_path / "m.tsv").write_text("a\tx.wav\n")
    with pytest.raises(ManifestError, match=":1: tagging manifest needs a class label"):
        read_manifest(tmp_path / "m.tsv", "tag")
    with pytest.raises(ManifestError, match="seq2seq manifest needs a target text"):
        read_manifest(tmp_path / "m.tsv", "seq2seq")
    (tmp_path / "bad.tsv").write_text("only-id\n")
    with pytest.raises(ManifestError, match=":1:"):
        read_manifest(tmp_path / "bad.tsv")


# ---------------------------------------------------------------------------
# container
# ---------------------------------------------------------------------------

def _checkpoint(rng):
    params = {"w": rng.normal(size=(3, 5)).astype(np.float32), "b": rng.normal(size=7),
              "scalar": np.array(1.5, dtype=np.float32)}
    opt = AdamState(t=3)
    opt.m = {k: rng.normal(size=np.shape(v)) for k, v in params.items()}
    opt.v = {k: rng.random(size=np.shape(v)) for k, v in params.items()}
    return Checkpoint(params, {"d_model": 16}, {"task": "pretrain"}, 12, 0.25, opt, {"note": "x"})


def test_checkpoint_round_trip_bit_exact(tmp_path):
    ck = _checkpoint(np.random.default_rng(0))
    save_checkpoint(tmp_path / "c.ckpt", ck)
    back = load_checkpoint(tmp_path / "c.ckpt")
    for k, v in ck.params.items():
        assert back.params[k].dtype == v.dtype and back.params[k].tobytes() == v.tobytes()
    for k in ck.params:
        assert back.optimizer.m[k].tobytes() == ck.optimizer.m[k].tobytes()
        assert back.optimizer.v[k].tobytes() == ck.optimizer.v[k].tobytes()
    assert (back.step, back.score, back.optimizer.t, back.meta) == (12, 0.25, 3, {"note": "x"})
    save_checkpoint(tmp_path / "d.ckpt", back)
    assert (tmp_path / "c.ckpt").read_bytes() == (tmp_path / "d.ckpt").read_bytes()


def test_container_arrays_are_aligned(tmp_path):
    write_container(tmp_path / "a.bin", {"x": np.arange(3, dtype=np.int16), "y": np.ones(5)}, {"kind": "t"})
    blob = (tmp_path / "a.bin").read_bytes()
    _, header = read_container(tmp_path / "a.bin")
    assert blob[:8] == MAGIC and header["kind"] == "t"
    hlen = int.from_bytes(blob[12:20], "little")
    start = -(-(20 + hlen) // 64) * 64
    assert blob[start:start + 6] == np.arange(3, dtype="<i2").tobytes()
    assert blob[start + 64:start + 64 + 40] == np.ones(5, dtype="<f8").tobytes()


def test_container_rejects_bad_files(tmp_path):
    save_checkpoint(tmp_path / "c.ckpt", _checkpoint(np.random.default_rng(1)))
    blob = bytearray((tmp_path / "c.ckpt").read_bytes())
    blob[8:12] = (2).to_bytes(4, "little")
    (tmp_path / "v2.ckpt").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version 2"):
        load_checkpoint(tmp_path / "v2.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "junk.ckpt")
    (tmp_path / "short.ckpt").write_bytes((tmp_path / "c.ckpt").read_bytes()[:-40])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "short.ckpt")


def test_model_config_mismatch_is_diffed(tmp_path):
    save_checkpoint(tmp_path / "c.ckpt", _checkpoint(np.random.default_rng(2)))
    with pytest.raises(CheckpointError, match="d_model: expected 32, found 16"):
        load_checkpoint(tmp_path / "c.ckpt", {"d_model": 32})


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["pretrain", "tag", "seq2seq"])
def test_synth_same_seed_is_byte_identical(tmp_path, kind):
    a = cmd_synth_data(kind, 3, 7, tmp_path / "a")
    cmd_synth_data(kind, 3, 7, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) > 2
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert set(a) == {"train", "valid"}
    cmd_synth_data(kind, 3, 8, tmp_path / "c")
    wav = sorted((tmp_path / "a" / "wav").iterdir())[0].name
    assert (tmp_path / "c" / "wav" / wav).read_bytes() != (tmp_path / "a" / "wav" / wav).read_bytes()


def test_synth_tag_classes_differ_in_band_energy(tmp_path, corpora):
    from mpc_acoustic.audio import FrontendConfig
    from mpc_acoustic.cli.commands import extract_features

    items = extract_features(read_manifest(corpora["tag"]["train"], "tag"), FrontendConfig())
    means = {}
    for rec, f in items:
        means.setdefault(rec.label, []).append(f.mean(axis=0))
    peaks = {label: int(np.argmax(np.mean(v, axis=0))) for label, v in means.items()}
    assert len(set(peaks.values())) == len(peaks) == 4


def test_synth_errors(tmp_path):
    with pytest.raises(ValueError, match="size"):
        cmd_synth_data("tag", 0, 0, tmp_path)
    (tmp_path / "file").write_text("x")
    with pytest.raises(DataError):
        cmd_synth_data("tag", 2, 0, tmp_path / "file" / "sub")
    assert main(["synth-data", "tag", "--size", "0", "--out", str(tmp_path / "z")]) == 3


# ---------------------------------------------------------------------------
# commands end to end
# ---------------------------------------------------------------------------

def test_pretrain_is_bit_deterministic(tmp_path, corpora):
    cfg = write_config(tmp_path, "pretrain", corpora["pretrain"]["train"], valid=corpora["pretrain"]["valid"])
    a = cmd_pretrain(cfg, out=tmp_path / "a")
    b = cmd_pretrain(cfg, out=tmp_path / "b")
    assert Path(a["checkpoint"]).read_bytes() == Path(b["checkpoint"]).read_bytes()
    assert a["losses"] == b["losses"] and len(a["losses"]) == 6
    c = cmd_pretrain(cfg, seed=1, out=tmp_path / "c")
    assert Path(c["checkpoint"]).read_bytes() != Path(a["checkpoint"]).read_bytes()
    log = [json.loads(x) for x in (tmp_path / "a" / "train_log.jsonl").read_text().splitlines()]
    assert [x["step"] for x in log] == list(range(1, 7))
    assert len(a["averaged"]) == 3


def test_feature_cache_gives_same_run(tmp_path, corpora):
    cfg = write_config(tmp_path, "pretrain", corpora["pretrain"]["train"], extra="feature_cache = cache\n")
    a = cmd_pretrain(cfg, out=tmp_path / "a")
    assert list((tmp_path / "cache").glob("*.feats"))
    b = cmd_pretrain(cfg, out=tmp_path / "b")
    assert Path(a["checkpoint"]).read_bytes() == Path(b["checkpoint"]).read_bytes()


def test_missing_audio_names_manifest_line(tmp_path):
    (tmp_path / "m.tsv").write_text("a\tmissing.wav\n")
    cfg = write_config(tmp_path, "pretrain", "m.tsv")
    with pytest.raises(DataError, match=r"m\.tsv:1: audio file not found"):
        cmd_pretrain(cfg)
    assert main(["pretrain", "--config", str(cfg)]) == 3


def test_exit_codes(tmp_path, corpora, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[model]\nwidth = 3\n")
    assert main(["pretrain", "--config", str(bad)]) == 2
    assert "unknown key" in capsys.readouterr().err
    (tmp_path / "x.ckpt").write_bytes(b"garbage")
    assert main(["inspect-checkpoint", str(tmp_path / "x.ckpt")]) == 4
    tag_cfg = write_config(tmp_path, "tag", corpora["tag"]["train"])
    assert main(["pretrain", "--config", str(tag_cfg)]) == 2


def test_finetune_tag_and_evaluate(tmp_path, corpora, capsys):
    pre_cfg = write_config(tmp_path, "pretrain", corpora["pretrain"]["train"])
    pre = cmd_pretrain(pre_cfg, out=tmp_path / "pre")
    cfg = write_config(tmp_path, "tag", corpora["tag"]["train"], valid=corpora["tag"]["valid"])
    scratch = cmd_finetune(cfg, out=tmp_path / "s")
    warm = cmd_finetune(cfg, init=pre["checkpoint"], out=tmp_path / "w")
    assert scratch["losses"][0] != warm["losses"][0]
    a = load_checkpoint(scratch["checkpoint"]).params
    b = load_checkpoint(warm["checkpoint"]).params
    assert {k: v.shape for k, v in a.items()} == {k: v.shape for k, v in b.items()}
    assert scratch["metric"] == "uar" and 0.0 <= scratch["score"] <= 1.0

    out = tmp_path / "report.jsonl"
    r1 = cmd_evaluate(warm["checkpoint"], corpora["tag"]["valid"], "tag", out)
    r2 = cmd_evaluate(warm["checkpoint"], corpora["tag"]["valid"], "tag", out)
    assert [x.to_line() for x in r1] == [x.to_line() for x in r2]
    assert [x.metric for x in r1] == ["uar", "macro_f1"]
    assert len(out.read_text().splitlines()) == 4
    assert main(["evaluate", warm["checkpoint"], str(corpora["tag"]["valid"]), "--task", "tag"]) == 0
    assert json.loads(capsys.readouterr().out.splitlines()[0])["metric"] == "uar"
    # the wrong task for this head
    with pytest.raises(CheckpointError, match="tag head"):
        cmd_evaluate(warm["checkpoint"], corpora["tag"]["valid"], "seq2seq")
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    with pytest.raises(DataError, match="no records"):
        cmd_evaluate(warm["checkpoint"], empty, "tag")


def test_incompatible_init_lists_parameters(tmp_path, corpora):
    cfg = write_config(tmp_path, "tag", corpora["tag"]["train"])
    other = tmp_path / "other.ckpt"
    save_checkpoint(other, Checkpoint({"encoder.final_norm.gamma": np.ones(8, dtype=np.float32)}, {}))
    with pytest.raises(CheckpointError, match="encoder.final_norm.gamma"):
        cmd_finetune(cfg, init=other, out=tmp_path / "o")


def test_finetune_seq2seq_and_evaluate(tmp_path, corpora):
    cfg = write_config(tmp_path, "seq2seq", corpora["seq2seq"]["train"], valid=corpora["seq2seq"]["valid"],
                       extra="speed_perturb =\n[seq2seq]\nvocab = words\nmax_len = 10\n")
    res = cmd_finetune(cfg, out=tmp_path / "s")
    assert res["metric"] == "loss" and np.isfinite(res["score"])
    reports = cmd_evaluate(res["checkpoint"], corpora["seq2seq"]["valid"], "seq2seq", beam=2)
    assert reports[0].metric == "bleu" and 0.0 <= reports[0].value <= 100.0


def test_avg_and_inspect(tmp_path, capsys):
    rng = np.random.default_rng(3)
    paths = []
    for i in range(3):
        ck = Checkpoint({"w": rng.normal(size=(2, 2)).astype(np.float32)}, {"d_model": 4}, step=i)
        save_checkpoint(tmp_path / f"{i}.ckpt", ck)
        paths.append(tmp_path / f"{i}.ckpt")
    out = cmd_avg_checkpoints(paths, tmp_path / "avg.ckpt")
    avg = load_checkpoint(out)
    want = np.mean([load_checkpoint(p).params["w"].astype(np.float64) for p in paths], axis=0)
    np.testing.assert_allclose(avg.params["w"], want, rtol=1e-6)
    assert avg.step == 2
    info = cmd_inspect_checkpoint(out)
    assert info["parameters"] == 4 and info["tensors"] == 1
    save_checkpoint(tmp_path / "odd.ckpt", Checkpoint({"w": np.zeros((2, 2), np.float32)}, {"d_model": 8}))
    assert main(["avg-checkpoints", str(paths[0]), str(tmp_path / "odd.ckpt"), "--out", str(tmp_path / "x")]) == 4
    assert main(["default-config"]) == 0
    assert "[model]" in capsys.readouterr().out
