"""`nopain-adapter encode|decode`: bridge clouds and latent feature files."""

import argparse
import sys

from .codec import CodecSpec, decode_batch, encode_batch
from .errors import AdapterError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nopain-adapter",
        description="Encode NPPC point clouds to NPFT features and back.")
    sub = parser.add_subparsers(dest="command")
    for name, blurb in (("encode", "NPPC in, NPFT out"),
                        ("decode", "NPFT in, NPPC out")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--model", required=True,
                       help="codec identifier (ships with 'stub')")
        p.add_argument("--in", dest="src", required=True, help="input file")
        p.add_argument("--out", dest="dst", required=True, help="output file")
        p.add_argument("--latent-dim", type=int, default=8)
        p.add_argument("--points", type=int, default=64,
                       help="points per decoded cloud")
        p.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if not args.command:
        parser.print_help(file=sys.stderr)
        return 2
    spec = CodecSpec(encoder_id=args.model, decoder_id=args.model,
                     latent_dim=args.latent_dim, device=args.device,
                     points_per_cloud=args.points)
    try:
        if args.command == "encode":
            count = encode_batch(args.src, spec, args.dst)
            print(f"encoded {count} clouds -> {args.dst}")
        else:
            count = decode_batch(args.src, spec, args.dst)
            print(f"decoded {count} features -> {args.dst}")
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
