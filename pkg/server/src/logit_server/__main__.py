"""CLI: train a reference checkpoint or serve one over the wire protocol."""

import argparse
import sys

from .model import save_checkpoint
from .server import ServerConfig, serve
from .train import load_timelines, train_reference


def main(argv=None):
    parser = argparse.ArgumentParser(prog="logit-server")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the reference model on tokenized timelines")
    t.add_argument("--timelines", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--vocab-size", type=int, default=208)
    t.add_argument("--epochs", type=int, default=3)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--width", type=int, default=128)
    t.add_argument("--batch-rows", type=int, default=8)
    t.add_argument("--d-model", type=int, default=64)
    t.add_argument("--n-layers", type=int, default=2)
    t.add_argument("--n-heads", type=int, default=2)
    t.add_argument("--lr", type=float, default=3e-3)

    s = sub.add_parser("serve", help="answer hello/cond/repr requests for a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--tcp", default=None, metavar="HOST:PORT")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-context", type=int, default=1024)
    s.add_argument("--no-deterministic", action="store_true")

    args = parser.parse_args(argv)
    if args.command == "train":
        model, _ = train_reference(
            load_timelines(args.timelines),
            vocab_size=args.vocab_size,
            epochs=args.epochs,
            seed=args.seed,
            width=args.width,
            batch_rows=args.batch_rows,
            d_model=args.d_model,
            n_layers=args.n_layers,
            n_heads=args.n_heads,
            lr=args.lr,
            log=lambda msg: print(msg, file=sys.stderr, flush=True),
        )
        save_checkpoint(model, args.out)
        print(f"saved checkpoint to {args.out}", file=sys.stderr)
        return
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        config = ServerConfig(
            checkpoint=args.checkpoint, mode="tcp", host=host or "127.0.0.1",
            port=int(port), max_context=args.max_context,
            deterministic_eval=not args.no_deterministic, seed=args.seed,
        )
    else:
        config = ServerConfig(
            checkpoint=args.checkpoint, mode="stdio", max_context=args.max_context,
            deterministic_eval=not args.no_deterministic, seed=args.seed,
        )
    serve(config)


if __name__ == "__main__":
    main()
