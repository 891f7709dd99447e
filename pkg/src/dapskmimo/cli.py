"""Command line front end: train the amplitude detector, run sweeps, print oracles."""

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import harness, neural, oracles

DEFAULT_HIDDEN = (64, 64, 64)


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    grid = cfg.snr_grid_db
    print(
        f"generating {args.size} training samples "
        f"(U={cfg.n_antennas}, groups={cfg.group_sizes}, grid={list(grid)} dB)"
    )
    dataset = neural.generate_dataset(
        cfg.constellation(),
        cfg.n_antennas,
        cfg.group_sizes,
        cfg.n_taps,
        cfg.n_uses,
        grid,
        size=args.size,
        seed=cfg.seed,
    )
    dims = [4 + len(grid), *DEFAULT_HIDDEN, 2]
    model = neural.init_mlp(dims, np.random.default_rng(cfg.seed))
    train_cfg = neural.TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=cfg.seed,
    )
    model, history = neural.train(model, dataset, train_cfg)
    print(f"loss {history[0]:.4f} -> {history[-1]:.4f} over {train_cfg.epochs} epochs")
    neural.save_model(
        model,
        args.out,
        metadata={
            "snr_grid_db": list(grid),
            "n_antennas": cfg.n_antennas,
            "group_sizes": list(cfg.group_sizes),
            "mod_order": cfg.mod_order,
            "ring_ratio": cfg.ring_ratio,
            "train_size": args.size,
            "seed": cfg.seed,
        },
    )
    print(f"model written to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = harness.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.model is not None:
        overrides["model_path"] = args.model
    if overrides:
        cfg = replace(cfg, **overrides)
    records = harness.sweep(cfg)
    harness.emit_csv(records, args.out)
    print(f"{len(records)} records written to {args.out}")
    if args.svg is not None:
        harness.emit_svg(records, args.svg)
        print(f"curves written to {args.svg}")
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    b = oracles.bussgang_mc(n_samples=args.samples, seed=args.seed)
    print(f"bussgang gain:        {b['eta_hat']:.5f}  (formula {np.sqrt(2 / np.pi):.5f})")
    print(f"bussgang distortion:  {b['sigma_eps2_hat']:.5f}  (formula {2 - 2 / np.pi:.5f})")
    print(
        f"orthogonality:        {b['orthogonality_residual']:+.2e}"
        f"  (stderr {b['orthogonality_stderr']:.2e})"
    )
    for rho in (0.5, 1.0, 4.0):
        f = oracles.likelihood_fidelity_mc(rho, n_draws=args.samples, seed=args.seed)
        print(
            f"pattern prob rho={rho:<4}: {f['p_hat']:.5f} empirical vs {f['p_model']:.5f} model"
            f"  (stderr {f['stderr']:.1e})"
        )
    for u in (8, 32):
        n = oracles.ncx2_quadrature(u)
        print(
            f"energy pdf U={u:<3}:     integral {n['integral']:.6f}, "
            f"mean {n['mean']:.6f} (model {n['mean_reference']:.6f})"
        )
    print(f"log Phi max error:    {oracles.logphi_max_error():.2e} over [-8, 8]")
    s = oracles.psk_spacing(8)
    print(
        f"8-PSK map:            {s['distinct']} distinct points, "
        f"gaps in [{s['min_gap']:.6f}, {s['max_gap']:.6f}] (expect {s['expected_gap']:.6f})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dapskmimo",
        description="Differential DAPSK over a one-bit massive-MIMO uplink: "
        "training, Monte-Carlo sweeps, and numeric oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="generate a dataset and train the amplitude detector")
    p_train.add_argument("--config", required=True, help="key=value config file")
    p_train.add_argument("--out", required=True, help="output model file (JSON)")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument("--size", type=int, default=20000, help="training set size")
    p_train.add_argument("--epochs", type=int, default=250)
    p_train.add_argument("--batch-size", type=int, default=1000)
    p_train.add_argument("--learning-rate", type=float, default=0.001)
    p_train.set_defaults(func=_cmd_train)

    p_sweep = sub.add_parser("sweep", help="run a Monte-Carlo campaign and write CSV/SVG")
    p_sweep.add_argument("--config", required=True, help="key=value config file")
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--svg", default=None, help="optional SVG plot path")
    p_sweep.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sweep.add_argument("--model", default=None, help="override the config model_path")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_oracle = sub.add_parser("oracle", help="recompute the derived constants and print them")
    p_oracle.add_argument("--samples", type=int, default=1_000_000)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
