"""Command line entry: convert an archive dump or verify an existing container."""

import argparse
import sys

from .archive import convert
from .verify import verify


def _print_report(report):
    print(f"file: {report['path']}")
    print(f"datasets: {', '.join(report['datasets'])}")
    print(f"architectures: {report['arch_count']}, curve epochs: {report['epoch_count']}")
    for name, value in report["max_final_val"].items():
        print(f"max final val {name}: {value:.3f}")
    for pair, rho in report["spearman"].items():
        print(f"spearman {pair}: {rho:.4f}")
    print(f"payload sha256: {report['sha256']}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="bench-ingest",
        description="convert the tabular benchmark archive to the engine's portable container")
    parser.add_argument("input", help="archive dump to convert, or a container with --verify")
    parser.add_argument("output", nargs="?", help="container path to write")
    parser.add_argument("--verify", action="store_true",
                        help="check an existing container instead of converting")
    args = parser.parse_args(argv)
    if args.verify and args.output is not None:
        parser.error("--verify takes a single container path")
    if not args.verify and args.output is None:
        parser.error("output path is required when converting")
    try:
        if not args.verify:
            convert(args.input, args.output)
        # A fresh conversion is verified through the same read-back path a
        # consumer would use, so convert never reports PASS on a bad file.
        report = verify(args.input if args.verify else args.output)
    except (OSError, ValueError) as err:
        print(f"FAIL: {err}", file=sys.stderr)
        return 1
    _print_report(report)
    print("PASS")
    return 0


if __name__ == "__main__":
    sys.exit(main())
