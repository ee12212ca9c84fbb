from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class ModelConfig:
    """Network hyper-parameters. Defaults are the full-size experiment values."""

    d_model: int = 256
    ffn: int = 2048
    heads: int = 4
    dropout: float = 0.1
    enc_layers: int = 12
    dec_layers: int = 6
    downsample: int = 4
    n_mels: int = 40
    vocab_size: int | None = None
    n_classes: int | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        n = self.downsample
        if n < 1 or n & (n - 1):
            raise ValueError(f"downsample must be a power of two >= 1, got {n}")
        if self.vocab_size is not None and self.n_classes is not None:
            raise ValueError("set at most one of vocab_size / n_classes")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def head_kind(self) -> str:
        if self.vocab_size is not None:
            return "seq2seq"
        if self.n_classes is not None:
            return "tag"
        return "pretrain"

    @property
    def n_convs(self) -> int:
        return self.downsample.bit_length() - 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def encoder_view(self) -> "ModelConfig":
        """Same encoder, no task head; used for compatibility checks."""
        d = self.to_dict()
        d.update(vocab_size=None, n_classes=None)
        return ModelConfig(**d)
