"""``mpc-acoustic`` command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 checkpoint error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..audio import AudioFormatError
from .commands import (
    DataError,
    cmd_avg_checkpoints,
    cmd_evaluate,
    cmd_finetune,
    cmd_inspect_checkpoint,
    cmd_pretrain,
    cmd_synth_data,
)
from .config import DEFAULT_CONFIG, ConfigError
from .container import CheckpointError
from .manifest import ManifestError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECKPOINT = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpc-acoustic", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="masked-reconstruction pre-training")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="checkpoint directory (overrides the config)")

    p = sub.add_parser("finetune", help="fine-tune a tagging or seq2seq head")
    p.add_argument("--config", required=True)
    p.add_argument("--init", help="pre-trained checkpoint to take encoder weights from")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--task", required=True, choices=("pretrain", "tag", "seq2seq"))
    p.add_argument("--out", help="append report lines to this file")
    p.add_argument("--beam", type=int)
    p.add_argument("--max-len", type=int)

    p = sub.add_parser("synth-data", help="write a deterministic synthetic corpus")
    p.add_argument("kind", choices=("pretrain", "tag", "seq2seq"))
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--valid-size", type=int)
    p.add_argument("--classes", type=int, default=4)

    p = sub.add_parser("avg-checkpoints", help="average parameters of several checkpoints")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint summary")
    p.add_argument("checkpoint")

    sub.add_parser("default-config", help="print a config template with the full-size values")
    return parser


def _run(args) -> int:
    if args.command == "pretrain":
        res = cmd_pretrain(args.config, args.seed, args.out)
        print(json.dumps({k: res[k] for k in ("checkpoint", "score", "steps", "averaged")}))
    elif args.command == "finetune":
        res = cmd_finetune(args.config, args.init, args.seed, args.out)
        print(json.dumps({k: res[k] for k in ("checkpoint", "metric", "score", "steps", "averaged")}))
    elif args.command == "evaluate":
        for r in cmd_evaluate(args.checkpoint, args.manifest, args.task, args.out, args.beam, args.max_len):
            print(r.to_line())
    elif args.command == "synth-data":
        print(json.dumps(cmd_synth_data(args.kind, args.size, args.seed, args.out, args.valid_size, args.classes)))
    elif args.command == "avg-checkpoints":
        print(cmd_avg_checkpoints(args.checkpoints, args.out))
    elif args.command == "inspect-checkpoint":
        print(json.dumps(cmd_inspect_checkpoint(args.checkpoint), indent=2))
    elif args.command == "default-config":
        sys.stdout.write(DEFAULT_CONFIG)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ManifestError, AudioFormatError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ValueError as err:
        if args.command == "synth-data":
            print(f"data error: {err}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())
