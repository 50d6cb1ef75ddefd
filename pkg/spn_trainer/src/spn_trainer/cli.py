"""Command-line entry points: curriculum training and policy export."""

from __future__ import annotations

import argparse

import torch

from .model import ModelConfig
from .train import Checkpoint, CurriculumConfig, PHASE_ORDER, run_curriculum


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spn-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="run curriculum phases")
    tr.add_argument("--phases", default="phase1", help=f"comma list from {PHASE_ORDER}")
    tr.add_argument("--out-dir", default="checkpoints")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--scale", type=float, default=1.0, help="epoch budget multiplier")
    tr.add_argument("--d-h", type=int, default=128)
    tr.add_argument("--l-enc", type=int, default=3)
    tr.add_argument("--m-star", type=int, default=16)
    tr.add_argument("--heads", type=int, default=8)
    tr.add_argument("--decoder", choices=("ded", "dcad"), default="ded")
    tr.add_argument("--no-anneal", action="store_true")
    tr.add_argument("--no-pretrain", action="store_true")

    ex = sub.add_parser("export", help="answer a solver policy request")
    ex.add_argument("checkpoint")
    ex.add_argument("--request", required=True)
    ex.add_argument("-o", "--output", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        config = CurriculumConfig(
            model=ModelConfig(
                d_h=args.d_h,
                l_enc=args.l_enc,
                m_star=args.m_star,
                heads=args.heads,
                decoder=args.decoder,
            ),
            phases=tuple(p.strip() for p in args.phases.split(",") if p.strip()),
            out_dir=args.out_dir,
            seed=args.seed,
            scale=args.scale,
            anneal=not args.no_anneal,
            pretrain=not args.no_pretrain,
        )
        written = run_curriculum(config)
        for name, path in written.items():
            print(f"{name}: {path}")
        return 0
    if args.command == "export":
        from .export import export_policy
        from .model import SPN

        ckpt = Checkpoint.load(args.checkpoint)
        model = SPN(ckpt.config)
        model.load_state_dict(ckpt.state_dict)
        model.eval()
        export_policy(model, args.request, args.output)
        print(f"wrote {args.output}")
        return 0
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
