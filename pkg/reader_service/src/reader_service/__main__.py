"""Command-line launcher: viqa-reader-service --model <id-or-path>."""

from __future__ import annotations

import argparse
import logging

from .model import ServiceConfig
from .service import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="viqa-reader-service", description=__doc__)
    parser.add_argument("--model", required=True, help="HF model id or local path")
    parser.add_argument("--device", choices=("cpu", "gpu"), default="cpu")
    parser.add_argument("--max-seq-len", type=int, default=384)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--stride", type=int, default=128)
    parser.add_argument("--host", default="0.0.0.0")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    config = ServiceConfig(
        model=args.model,
        device=args.device,
        max_sequence_length=args.max_seq_len,
        batch_size=args.batch_size,
        window_stride=args.stride,
    )
    serve(config, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
