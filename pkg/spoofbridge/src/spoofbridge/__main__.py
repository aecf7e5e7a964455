"""Command line entry: `python -m spoofbridge` or the `spoofbridge` script."""
import argparse
import sys

from . import BridgeConfig, serve


def build_parser():
    ap = argparse.ArgumentParser(
        prog="spoofbridge",
        description="Serve anti-spoofing scores over the stdin/stdout JSON protocol.")
    backend = ap.add_mutually_exclusive_group(required=True)
    backend.add_argument("--fixture", metavar="MODE",
                         help="fixture backend: echo or constant:P")
    backend.add_argument("--model", metavar="PATH",
                         help="TorchScript checkpoint to serve")
    ap.add_argument("--model-rate", type=int, default=16000,
                    help="sample rate the model expects (default 16000)")
    ap.add_argument("--device", choices=("cpu", "accelerator"), default="cpu")
    ap.add_argument("--probs", action="store_true",
                    help="model already emits probabilities; skip the softmax")
    ap.add_argument("--swap-heads", action="store_true",
                    help="checkpoint emits (bona fide, spoof) instead of (spoof, bona fide)")
    ap.add_argument("--name", default=None, help="override the handshake name")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig(
            model_id=args.model, fixture_mode=args.fixture, device=args.device,
            logits_to_probs="identity" if args.probs else "softmax",
            swap_heads=args.swap_heads, model_rate=args.model_rate, name=args.name)
        serve(config)
    except BrokenPipeError:
        return 0
    except Exception as exc:  # noqa: BLE001 - startup failure must exit nonzero
        print(f"spoofbridge: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
