"""Command-line entry points mirroring extract and inject.

Exit codes: 0 success, 1 named operation error (no-matching-layers,
ambiguous-pattern, shape-mismatch, dtype-mismatch, or another bridge
failure), 2 invalid flags, 5 unreadable input file.
"""

from __future__ import annotations

import argparse
import sys

from .core import BridgeError, LayerSelector, extract, inject


def _err(message) -> None:
    print(f"retina-bridge: {message}", file=sys.stderr)


def cmd_extract(ns: argparse.Namespace) -> int:
    try:
        selector = LayerSelector(
            name_pattern=ns.pattern,
            expected_kernel_size=ns.kernel_size,
            use_regex=ns.regex,
        )
    except ValueError as exc:
        _err(exc)
        return 2
    index_path = extract(ns.checkpoint, selector, ns.out_dir)
    print(index_path)
    return 0


def cmd_inject(ns: argparse.Namespace) -> int:
    injected = inject(ns.checkpoint, ns.index, ns.out)
    for name in injected:
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retina-bridge",
        description="Move depthwise convolution weights between checkpoints and NPY banks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="pull depthwise weights out of a checkpoint")
    e.add_argument("--checkpoint", required=True, help="input checkpoint (.pt/.pth)")
    e.add_argument("--pattern", required=True, help="parameter-name pattern (glob by default)")
    e.add_argument("--regex", action="store_true", help="treat the pattern as a regex")
    e.add_argument("--kernel-size", dest="kernel_size", type=int,
                   help="only extract layers with this odd kernel size")
    e.add_argument("--out-dir", dest="out_dir", required=True,
                   help="directory for the NPY files and index.json")
    e.set_defaults(func=cmd_extract)

    i = sub.add_parser("inject", help="write banks from an index into a new checkpoint")
    i.add_argument("--checkpoint", required=True, help="input checkpoint (.pt/.pth)")
    i.add_argument("--index", required=True, help="layer index JSON naming the bank files")
    i.add_argument("--out", required=True, help="output checkpoint path (never the input)")
    i.set_defaults(func=cmd_inject)
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except BridgeError as exc:
        _err(exc)
        return 1
    except (OSError, ValueError) as exc:
        _err(exc)
        return 5


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
