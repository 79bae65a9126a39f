"""Command-line front end over the pipeline stages.

Exit codes: 0 success, 1 validation failure (or invalid data), 2 usage
error (bad arguments or missing input artifacts). Each run prints one
machine-readable JSON log line.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .errors import GraphShieldError

COMMANDS = {
    "validate": pipeline.run_validate,
    "synth": pipeline.run_synth,
    "train-embed": pipeline.run_train_embed,
    "embed-graphs": pipeline.run_embed_graphs,
    "train-clf": pipeline.run_train_clf,
    "evaluate": pipeline.run_evaluate,
    "fuse": pipeline.run_fuse,
    "attack": pipeline.run_attack,
    "report": pipeline.run_report,
}


def _log(command: str, status: str, exit_code: int, artifacts, started: float, message: str = ""):
    line = {
        "command": command,
        "status": status,
        "exit": exit_code,
        "artifacts": [str(a) for a in artifacts],
        "elapsed_ms": round((time.perf_counter() - started) * 1000, 3),
    }
    if message:
        line["message"] = message
    print(json.dumps(line))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="graphshield",
        description="Two-layer malware detection pipeline over graph embeddings.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--epsilon", type=float, help="override the attack epsilon")
    parser.add_argument("--mode", choices=["logic", "weighted"], help="override the fuse mode")
    args = parser.parse_args(argv)

    started = time.perf_counter()
    config_path = Path(args.config)
    if not config_path.is_file():
        _log(args.command, "error", 2, [], started, f"config not found: {config_path}")
        return 2
    try:
        cfg = pipeline.config_from_json(config_path.read_bytes(), config_path.parent)
    except GraphShieldError as exc:
        _log(args.command, "error", 2, [], started, str(exc))
        return 2

    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.epsilon is not None:
        cfg = replace(cfg, attack=replace(cfg.attack, epsilon=args.epsilon))
    if args.mode is not None:
        cfg = replace(cfg, ensemble_mode="logic_gate" if args.mode == "logic" else "weighted")

    try:
        if args.command == "validate":
            out, problems = pipeline.run_validate(cfg)
            if problems:
                _log(args.command, "invalid", 1, [out], started, f"{len(problems)} problem(s)")
                return 1
            _log(args.command, "ok", 0, [out], started)
            return 0
        artifacts = COMMANDS[args.command](cfg)
        _log(args.command, "ok", 0, artifacts, started)
        return 0
    except pipeline.MissingInputError as exc:
        _log(args.command, "error", 2, [], started, str(exc))
        return 2
    except GraphShieldError as exc:
        _log(args.command, "error", 1, [], started, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
