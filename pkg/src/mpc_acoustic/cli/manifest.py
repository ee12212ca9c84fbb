"""Tab-separated utterance manifests.

One record per line: ``id<TAB>audio_path[<TAB>label[<TAB>text]]``. Blank
lines and lines starting with ``#`` are skipped. Relative audio paths are
resolved against the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    audio_path: Path
    label: str | None = None
    text: str | None = None
    line: int = 0

    def to_line(self, base: Path | None = None) -> str:
        path = self.audio_path
        if base is not None:
            try:
                path = path.relative_to(base)
            except ValueError:
                pass
        fields = [self.utt_id, path.as_posix(), self.label or "", self.text or ""]
        while fields and fields[-1] == "":
            fields.pop()
        return "\t".join(fields)


def read_manifest(path: str | Path, task: str | None = None) -> list[ManifestRecord]:
    """Parse and validate a manifest; ``task`` enforces the fields it needs."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ManifestError(f"{path}: cannot read manifest ({err.strerror})") from None
    records = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        cols = raw.split("\t")
        if len(cols) < 2 or not cols[0] or not cols[1]:
            raise ManifestError(f"{path}:{lineno}: expected at least id and audio path")
        if len(cols) > 4:
            raise ManifestError(f"{path}:{lineno}: too many fields ({len(cols)})")
        utt_id = cols[0]
        if utt_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate id {utt_id!r} (first on line {seen[utt_id]})")
        seen[utt_id] = lineno
        label = cols[2] if len(cols) > 2 and cols[2] else None
        utt_text = cols[3] if len(cols) > 3 and cols[3] else None
        if task == "tag" and label is None:
            raise ManifestError(f"{path}:{lineno}: tagging manifest needs a class label")
        if task == "seq2seq" and utt_text is None:
            raise ManifestError(f"{path}:{lineno}: seq2seq manifest needs a target text")
        audio = Path(cols[1])
        if not audio.is_absolute():
            audio = path.parent / audio
        records.append(ManifestRecord(utt_id, audio, label, utt_text, lineno))
    return records


def write_manifest(path: str | Path, records) -> None:
    path = Path(path)
    lines = [r.to_line(path.parent) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
