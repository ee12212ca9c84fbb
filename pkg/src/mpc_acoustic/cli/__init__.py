from .commands import (
    DataError,
    cmd_avg_checkpoints,
    cmd_evaluate,
    cmd_finetune,
    cmd_inspect_checkpoint,
    cmd_pretrain,
    cmd_synth_data,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .container import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .main import main
from .manifest import ManifestError, ManifestRecord, read_manifest, write_manifest
