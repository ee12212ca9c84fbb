"""Implementations behind the command-line entry points."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..audio import AudioFormatError, FrontendConfig, log_mel, read_wav, speed_perturb
from ..finetune import (
    EvalReport,
    TokenVocab,
    average_checkpoints,
    bleu,
    bpe_train,
    confusion_matrix,
    decode_all,
    finetune,
    finetune_loss,
    macro_f1,
    make_seq2seq_batch,
    per_class_f1,
    per_class_recall,
    predict_classes,
    select_best_k,
    uar,
)
from ..model import ModelConfig, init_params, load_encoder
from ..numerics import AdamState, Tensor
from ..pretraining import evaluate_pretrain, pretrain
from .config import ConfigError, RunConfig, config_from_dict, load_config, with_seed
from .container import (
    Checkpoint,
    CheckpointError,
    config_diff,
    load_checkpoint,
    load_features,
    save_checkpoint,
    save_features,
)
from .manifest import ManifestError, ManifestRecord, read_manifest
from .synth import synth_corpus

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Problem with manifests, audio files or labels."""


# ---------------------------------------------------------------------------
# data loading
# ---------------------------------------------------------------------------

def _read_records(path: Path, task: str | None) -> list[ManifestRecord]:
    try:
        records = read_manifest(path, task)
    except ManifestError as err:
        raise DataError(str(err)) from None
    if not records:
        raise DataError(f"{path}: manifest has no records")
    return records


def _cache_file(cache_dir: Path, manifest: Path, frontend: FrontendConfig, factors) -> Path:
    h = hashlib.sha1()
    h.update(manifest.read_bytes())
    h.update(json.dumps([asdict(frontend), list(factors)], sort_keys=True).encode())
    return cache_dir / f"{manifest.stem}-{h.hexdigest()[:16]}.feats"


def extract_features(records: Sequence[ManifestRecord], frontend: FrontendConfig,
                     factors: Sequence[float] = (), source: str = "manifest") -> list[tuple[ManifestRecord, np.ndarray]]:
    """Log-mel features per record, plus one extra copy per speed factor."""
    out = []
    for rec in records:
        if not rec.audio_path.is_file():
            raise DataError(f"{source}:{rec.line}: audio file not found: {rec.audio_path}")
        try:
            wav = read_wav(rec.audio_path)
            variants = [wav] + [speed_perturb(wav, f) for f in factors]
            for w in variants:
                out.append((rec, log_mel(w, frontend, rec.utt_id).frames.astype(np.float32)))
        except AudioFormatError as err:
            raise DataError(f"{source}:{rec.line}: {err}") from None
    return out


def load_split(cfg: RunConfig, manifest: str, task: str | None, factors=()) -> list[tuple[ManifestRecord, np.ndarray]]:
    path = cfg.path(manifest)
    records = _read_records(path, task)
    if not cfg.feature_cache:
        return extract_features(records, cfg.frontend, factors, str(path))
    cache_dir = cfg.path(cfg.feature_cache)
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache = _cache_file(cache_dir, path, cfg.frontend, factors)
    if cache.is_file():
        arrays, _ = load_features(cache)
        by_id = {r.utt_id: r for r in records}
        keyed = sorted(arrays.items(), key=lambda kv: int(kv[0].rsplit("#", 1)[1]))
        return [(by_id[k.rsplit("#", 1)[0]], v) for k, v in keyed]
    items = extract_features(records, cfg.frontend, factors, str(path))
    save_features(cache, {f"{r.utt_id}#{i}": f for i, (r, f) in enumerate(items)},
                  {"manifest": str(path)})
    return items


def _usable(items, downsample: int):
    kept = [(r, f) for r, f in items if f.shape[0] >= downsample]
    if len(kept) < len(items):
        log.warning("skipped %d clips shorter than one chunk", len(items) - len(kept))
    return kept


# ---------------------------------------------------------------------------
# checkpoint bookkeeping
# ---------------------------------------------------------------------------

def _arrays(params) -> dict[str, np.ndarray]:
    return {n: p.data.copy() for n, p in params.items()}


def _tensors(arrays: dict[str, np.ndarray]):
    return {n: Tensor(a.copy(), requires_grad=True, name=n) for n, a in arrays.items()}


class CheckpointKeeper:
    """Saves periodic checkpoints and keeps only the current best ``k`` on disk."""

    def __init__(self, outdir: Path, k: int, direction: str, model_cfg: ModelConfig, run_cfg: RunConfig,
                 meta: dict):
        self.outdir = outdir
        self.k = k
        self.direction = direction
        self.model_cfg = model_cfg
        self.run_cfg = run_cfg
        self.meta = meta
        self.entries: list[tuple[str, int, float]] = []
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "scores.jsonl").write_text("")

    def add(self, params, opt: AdamState, step: int, score: float) -> None:
        ck_id = f"step-{step:07d}"
        save_checkpoint(self.outdir / f"{ck_id}.ckpt",
                        Checkpoint(_arrays(params), self.model_cfg.to_dict(), self.run_cfg.to_dict(), step,
                                   float(score), opt, self.meta))
        self.entries.append((ck_id, step, float(score)))
        with open(self.outdir / "scores.jsonl", "a") as fh:
            fh.write(json.dumps({"id": ck_id, "step": step, "score": float(score)}) + "\n")
        keep = set(self._best())
        for old, _, _ in self.entries:
            path = self.outdir / f"{old}.ckpt"
            if old not in keep and path.exists():
                path.unlink()

    def _best(self) -> list[str]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return select_best_k(self.entries, min(self.k, len(self.entries)), self.direction)

    def averaged(self) -> tuple[dict[str, np.ndarray], list[str]]:
        best = select_best_k(self.entries, self.k, self.direction)
        params = [load_checkpoint(self.outdir / f"{b}.ckpt").params for b in best]
        return average_checkpoints(params), best


def _write_final(outdir: Path, arrays, model_cfg: ModelConfig, run_cfg: RunConfig, step: int, score: float,
                 meta: dict, name: str = "average.ckpt") -> Path:
    path = outdir / name
    save_checkpoint(path, Checkpoint(arrays, model_cfg.to_dict(), run_cfg.to_dict(), step, float(score), None, meta))
    return path


def _total_steps(cfg: RunConfig, n_items: int) -> int:
    if cfg.max_steps > 0:
        return cfg.max_steps
    return cfg.epochs * math.ceil(n_items / cfg.batch_size)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_run_config(config: str | Path, seed: int | None, task: str | tuple) -> RunConfig:
    cfg = with_seed(load_config(config), seed).validate()
    tasks = (task,) if isinstance(task, str) else task
    if cfg.task not in tasks:
        raise ConfigError(f"[run] task: this command needs task {' or '.join(tasks)}, config says {cfg.task!r}")
    return cfg


def cmd_pretrain(config: str | Path, seed: int | None = None, out: str | Path | None = None) -> dict:
    cfg = _load_run_config(config, seed, "pretrain")
    outdir = Path(out) if out else cfg.path(cfg.checkpoint_dir)
    train = _usable(load_split(cfg, cfg.train_manifest, None), cfg.model.downsample)
    valid = _usable(load_split(cfg, cfg.valid_manifest, None), cfg.model.downsample) if cfg.valid_manifest else train
    model_cfg = replace(cfg.model, vocab_size=None, n_classes=None)
    params = init_params(model_cfg, cfg.seed)
    steps = _total_steps(cfg, len(train))
    eval_every = cfg.eval_every or math.ceil(len(train) / cfg.batch_size)
    opt = AdamState()
    keeper = CheckpointKeeper(outdir, cfg.keep_best, "min", model_cfg, cfg, {"task": "pretrain"})
    seqs = [f for _, f in train]
    val_seqs = [f for _, f in valid]
    with open(outdir / "train_log.jsonl", "w") as log_file:
        result = pretrain(params, model_cfg, seqs, cfg.schedule, steps=steps, batch_size=cfg.batch_size,
                          seed=cfg.seed, rate=cfg.mask_rate, loss_mode=cfg.loss_mode, opt=opt,
                          val_sequences=val_seqs, eval_every=eval_every,
                          on_eval=lambda step, score: keeper.add(params, opt, step, score), log_file=log_file)
    averaged, best = keeper.averaged()
    score = evaluate_pretrain(_tensors(averaged), model_cfg, val_seqs, cfg.mask_rate, cfg.seed + 1,
                              cfg.batch_size, cfg.loss_mode)
    final = _write_final(outdir, averaged, model_cfg, cfg, result.step, score,
                         {"task": "pretrain", "averaged": best})
    return {"checkpoint": str(final), "score": score, "averaged": best, "losses": result.losses,
            "steps": result.step}


def _class_list(cfg: RunConfig, records) -> list[str]:
    if cfg.classes:
        return list(cfg.classes)
    return sorted({r.label for r in records})


def _label_ids(items, classes: list[str], source: str) -> list[int]:
    index = {c: i for i, c in enumerate(classes)}
    ids = []
    for rec, _ in items:
        if rec.label not in index:
            raise DataError(f"{source}:{rec.line}: unknown class label {rec.label!r}")
        ids.append(index[rec.label])
    return ids


def build_vocab(cfg: RunConfig, texts: Sequence[str]) -> TokenVocab:
    if cfg.vocab == "words":
        return TokenVocab.from_words(sorted({w for t in texts for w in t.split(" ") if w}))
    return bpe_train(texts, cfg.bpe_size)


def cmd_finetune(config: str | Path, init: str | Path | None = None, seed: int | None = None,
                 out: str | Path | None = None) -> dict:
    cfg = _load_run_config(config, seed, ("tag", "seq2seq"))
    outdir = Path(out) if out else cfg.path(cfg.checkpoint_dir)
    train = _usable(load_split(cfg, cfg.train_manifest, cfg.task, cfg.speed_perturb), cfg.model.downsample)
    valid_manifest = cfg.valid_manifest or cfg.train_manifest
    valid = _usable(load_split(cfg, valid_manifest, cfg.task), cfg.model.downsample)
    meta: dict = {"task": cfg.task}
    if cfg.task == "tag":
        classes = _class_list(cfg, [r for r, _ in train])
        targets = _label_ids(train, classes, cfg.train_manifest)
        val_targets = _label_ids(valid, classes, valid_manifest)
        missing = sorted(set(classes) - {classes[t] for t in val_targets})
        if missing and cfg.metric == "uar":
            raise DataError(f"{valid_manifest}: no validation samples for classes {missing}; UAR is undefined")
        model_cfg = replace(cfg.model, n_classes=len(classes), vocab_size=None)
        meta["classes"] = classes
    else:
        vocab = build_vocab(cfg, [r.text for r, _ in train])
        targets = [vocab.encode(r.text) for r, _ in train]
        val_targets = [vocab.encode(r.text) for r, _ in valid]
        model_cfg = replace(cfg.model, vocab_size=len(vocab), n_classes=None)
        meta["vocab"] = vocab.to_json()
    params = init_params(model_cfg, cfg.seed)
    if init is not None:
        source = load_checkpoint(init)
        try:
            load_encoder(params, source.params)
        except ValueError as err:
            raise CheckpointError(f"{init}: {err}") from None
        meta["init"] = str(init)

    seqs = [f for _, f in train]
    val_seqs = [f for _, f in valid]
    metric = cfg.metric

    def evaluate(p) -> float:
        if metric in ("uar", "macro_f1"):
            cm = confusion_matrix(val_targets, predict_classes(p, model_cfg, val_seqs), model_cfg.n_classes)
            return uar(cm) if metric == "uar" else macro_f1(cm)
        if metric == "bleu":
            hyps = decode_all(p, model_cfg, val_seqs, cfg.beam, cfg.max_len)
            return bleu([[str(t) for t in h] for h in hyps], [[str(t) for t in r] for r in val_targets])
        return seq2seq_loss(p, model_cfg, val_seqs, val_targets, cfg.label_smoothing)

    steps = _total_steps(cfg, len(train))
    eval_every = cfg.eval_every or math.ceil(len(train) / cfg.batch_size)
    opt = AdamState()
    keeper = CheckpointKeeper(outdir, cfg.keep_best, cfg.metric_direction, model_cfg, cfg, meta)
    with open(outdir / "train_log.jsonl", "w") as log_file:
        result = finetune(params, model_cfg, seqs, targets, cfg.schedule, steps=steps, batch_size=cfg.batch_size,
                          seed=cfg.seed, smoothing=cfg.label_smoothing, opt=opt, eval_every=eval_every,
                          evaluate=evaluate, on_eval=lambda step, s: keeper.add(params, opt, step, s),
                          log_file=log_file)
    averaged, best = keeper.averaged()
    score = evaluate(_tensors(averaged))
    final = _write_final(outdir, averaged, model_cfg, cfg, result.step, score, dict(meta, averaged=best))
    return {"checkpoint": str(final), "score": score, "metric": metric, "averaged": best,
            "losses": result.losses, "steps": result.step}


def seq2seq_loss(params, model_cfg: ModelConfig, seqs, targets, smoothing: float, batch_size: int = 32) -> float:
    total, n = 0.0, 0
    for i in range(0, len(seqs), batch_size):
        batch = make_seq2seq_batch(seqs[i:i + batch_size], targets[i:i + batch_size], model_cfg)
        k = len(batch.lengths)
        total += finetune_loss(params, model_cfg, batch, train=False, smoothing=smoothing).item() * k
        n += k
    return total / n


def cmd_evaluate(checkpoint: str | Path, manifest: str | Path, task: str, out: str | Path | None = None,
                 beam: int | None = None, max_len: int | None = None) -> list[EvalReport]:
    ck = load_checkpoint(checkpoint)
    model_cfg = ModelConfig.from_dict(ck.model_config)
    if task != model_cfg.head_kind:
        raise CheckpointError(f"{checkpoint}: checkpoint has a {model_cfg.head_kind} head, task {task!r} requested")
    run_cfg = config_from_dict(ck.run_config) if ck.run_config else RunConfig()
    manifest = Path(manifest)
    items = extract_features(_read_records(manifest, task), run_cfg.frontend, (), str(manifest))
    params = _tensors(ck.params)
    seqs = [f for _, f in items]
    ck_id = Path(checkpoint).name
    dataset = manifest.name
    reports: list[EvalReport] = []
    if task == "tag":
        classes = ck.meta["classes"]
        refs = _label_ids(items, classes, str(manifest))
        cm = confusion_matrix(refs, predict_classes(params, model_cfg, seqs), len(classes))
        try:
            reports.append(EvalReport("uar", uar(cm), dataset, ck_id, per_class_recall(cm).tolist()))
        except ValueError as err:
            raise DataError(f"{manifest}: {err}") from None
        reports.append(EvalReport("macro_f1", macro_f1(cm), dataset, ck_id, per_class_f1(cm).tolist()))
    elif task == "seq2seq":
        vocab = TokenVocab.from_json(ck.meta["vocab"])
        beam = beam or run_cfg.beam
        max_len = max_len or run_cfg.max_len
        hyps = decode_all(params, model_cfg, seqs, beam, max_len)
        texts = [vocab.decode(h) for h in hyps]
        reports.append(EvalReport("bleu", bleu(texts, [r.text for r, _ in items]), dataset, ck_id))
    else:
        score = evaluate_pretrain(params, model_cfg, seqs, run_cfg.mask_rate, run_cfg.seed + 1,
                                  loss_mode=run_cfg.loss_mode)
        reports.append(EvalReport("masked_l1", score, dataset, ck_id))
    if out is not None:
        with open(out, "a", encoding="utf-8") as fh:
            for r in reports:
                fh.write(r.to_line() + "\n")
    return reports


def cmd_synth_data(kind: str, size: int, seed: int, outdir: str | Path, valid_size: int | None = None,
                   n_classes: int = 4) -> dict:
    try:
        paths = synth_corpus(kind, size, seed, outdir, valid_size, n_classes)
    except OSError as err:
        raise DataError(str(err)) from None
    return {k: str(v) for k, v in paths.items()}


def cmd_avg_checkpoints(paths: Sequence[str | Path], out: str | Path) -> Path:
    cks = [load_checkpoint(p) for p in paths]
    if not cks:
        raise CheckpointError("no checkpoints to average")
    for p, ck in zip(paths[1:], cks[1:]):
        if ck.model_config != cks[0].model_config:
            raise CheckpointError(f"{p}: model configuration differs:\n  "
                                  + "\n  ".join(config_diff(cks[0].model_config, ck.model_config)))
    try:
        averaged = average_checkpoints([ck.params for ck in cks])
    except ValueError as err:
        raise CheckpointError(str(err)) from None
    first = cks[0]
    meta = dict(first.meta, averaged=[str(p) for p in paths])
    save_checkpoint(out, Checkpoint(averaged, first.model_config, first.run_config,
                                    max(ck.step for ck in cks), None, None, meta))
    return Path(out)


def cmd_inspect_checkpoint(path: str | Path) -> dict:
    ck = load_checkpoint(path)
    n_params = int(sum(a.size for a in ck.params.values()))
    return {"path": str(path), "step": ck.step, "score": ck.score, "model_config": ck.model_config,
            "parameters": n_params, "tensors": len(ck.params),
            "optimizer_step": ck.optimizer.t if ck.optimizer else None,
            "meta": {k: v for k, v in ck.meta.items() if k != "vocab"}}
