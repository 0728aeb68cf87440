"""Command-line harness: train mechanisms, run baselines, attack checkpoints,
and sweep the privacy/revenue trade-off, emitting CSV tables and SVG figures.

Exit codes: 0 success, 2 configuration/validation errors, 3 I/O errors
(missing checkpoints, unwritable outputs), 4 numeric failures (training
divergence, gradient-check mismatch).

Only stdlib is imported at module load so ``--threads`` can configure BLAS
threading before numpy comes in.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

GRADCHECK_TOLERANCE = 1e-4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nauction",
        description="Neural auction training, inversion attacks, and noise-defense sweeps.",
    )
    p.add_argument("--threads", type=int, default=None, help="BLAS thread count (default: single-threaded)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", required=True, help="experiment YAML file")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.add_argument("--seed-override", type=int, default=None, help="replace the config seed list")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True, help="mechanism checkpoint to attack")

    sp = sub.add_parser("train", help="train mechanism(s), one per seed")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("myerson", help="baseline revenue and guessing-adversary accuracy")
    common(sp)
    sp.set_defaults(func=cmd_myerson)

    sp = sub.add_parser("invert", help="attack a trained checkpoint at one noise level")
    common(sp, checkpoint=True)
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("sweep", help="privacy/revenue sweep over the sigma grid")
    common(sp, checkpoint=True)
    sp.add_argument("--parallel", type=int, default=1, help="worker processes for sweep cells")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the mechanism gradients")
    sp.add_argument("--size", default="2x2", help="auction size, e.g. 2x2")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--draws", type=int, default=50)
    sp.add_argument("--sigmas", default="0,0.3", help="comma-separated noise levels to check")
    sp.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)  # negative-control hook
    sp.set_defaults(func=cmd_gradcheck)
    return p


def _outdir(args, cfg) -> Path:
    out = Path(args.out if args.out is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeds(args, cfg) -> list[int]:
    return [args.seed_override] if args.seed_override is not None else list(cfg.seeds)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v, digits=6):
    if v is None:
        return ""
    return f"{v:.{digits}f}" if isinstance(v, float) else str(v)


def cmd_train(args) -> int:
    import numpy as np

    from .expconfig import load_config
    from .mechanism import default_architecture, save_checkpoint
    from .training import evaluate, train

    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    size = cfg.size
    arch = default_architecture(size)
    summary = []
    for seed in _seeds(args, cfg):
        tcfg = cfg.train_config(seed)

        def progress(st):
            print(
                f"[train {size} seed {seed}] epoch {st.epoch}/{tcfg.epochs} "
                f"revenue={st.revenue:.4f} regret={st.regret:.5f} rho={st.rho:g}",
                flush=True,
            )

        net, report = train(arch, cfg.distribution, tcfg, progress=progress)
        ckpt = out / f"mech_{size}_seed{seed}.nauc"
        save_checkpoint(net, ckpt)
        report.to_csv(out / f"train_report_seed{seed}.csv")
        res = evaluate(
            net,
            cfg.distribution,
            n_profiles=cfg.eval_n_profiles,
            config=tcfg,
        )
        print(
            f"[train {size} seed {seed}] saved {ckpt}  revenue={res.revenue:.4f} "
            f"regret={res.regret:.6f}",
            flush=True,
        )
        summary.append([seed, res.revenue, res.revenue_se, res.regret, res.regret_se])

    rows = [[s[0]] + [_fmt(v) for v in s[1:]] for s in summary]
    if len(summary) > 1:
        rev = np.array([s[1] for s in summary])
        rgt = np.array([s[3] for s in summary])
        rows.append(
            ["aggregate"]
            + [
                _fmt(rev.mean()),
                _fmt(float(rev.std(ddof=1) / np.sqrt(len(rev)))),
                _fmt(rgt.mean()),
                _fmt(float(rgt.std(ddof=1) / np.sqrt(len(rgt)))),
            ]
        )
    _write_csv(out / "train_summary.csv", ["seed", "revenue", "revenue_se", "regret", "regret_se"], rows)
    return EXIT_OK


def cmd_myerson(args) -> int:
    from .core import Rng
    from .expconfig import ConfigError, load_config
    from .myerson import (
        Intelligent,
        IntelligentWithOwnBid,
        MyersonConfig,
        Naive,
        expected_revenue,
        guess_accuracy,
    )

    cfg = load_config(args.config)
    if cfg.size.n_bidders < 2:
        raise ConfigError(
            "experiment.size: guessing strategies need at least 2 bidders (second-price structure)"
        )
    out = _outdir(args, cfg)
    seed = _seeds(args, cfg)[0]
    rng = Rng(seed)
    mcfg = MyersonConfig(cfg.size, reserve=cfg.myerson_reserve)

    rev, rev_se = expected_revenue(mcfg, cfg.distribution, cfg.myerson_n_samples, rng.child("revenue"))
    rows = [["revenue", _fmt(rev), _fmt(rev_se)]]
    strategies = [
        ("naive", Naive()),
        ("intelligent", Intelligent()),
        ("intelligent_with_own_bid", IntelligentWithOwnBid(0)),
    ]
    for name, strat in strategies:
        acc, se = guess_accuracy(
            mcfg,
            strat,
            cfg.distribution,
            cfg.myerson_n_samples,
            cfg.myerson_tolerance,
            rng.child(name),
        )
        rows.append([name, _fmt(acc), _fmt(se)])
        print(f"[myerson {cfg.size}] {name}: {acc:.3f} ± {se:.3f}", flush=True)
    print(f"[myerson {cfg.size}] revenue: {rev:.4f} ± {rev_se:.4f}", flush=True)
    _write_csv(out / "myerson.csv", ["quantity", "value", "se"], rows)
    return EXIT_OK


def _load_net(args, cfg):
    from .mechanism import load_checkpoint

    return load_checkpoint(args.checkpoint, expected_size=cfg.size)


def cmd_invert(args) -> int:
    import numpy as np

    from .core import Rng
    from .expconfig import load_config
    from .mechanism import NO_NOISE, NoiseSpec
    from .metrics import PrivacyReport, attack_outcomes, mae, recovery_rate
    from .training import evaluate

    cfg = load_config(args.config)
    net = _load_net(args, cfg)
    out = _outdir(args, cfg)
    seed = _seeds(args, cfg)[0]
    rng = Rng(seed)
    sigma = cfg.attack_sigma
    noise = NoiseSpec(sigma, rng.child("defense")) if sigma > 0 else NO_NOISE

    profiles, results, exclude = attack_outcomes(
        net,
        cfg.distribution,
        noise,
        cfg.threat_model(),
        cfg.init_strategy(),
        cfg.attack_config(seed),
        cfg.n_outcomes,
        rng.child("cell"),
    )
    n, m = cfg.size.n_bidders, cfg.size.n_items
    header = (
        ["outcome"]
        + [f"true_{i}_{j}" for i in range(n) for j in range(m)]
        + [f"recovered_{i}_{j}" for i in range(n) for j in range(m)]
        + ["objective", "iterations"]
    )
    rows = []
    for k, res in enumerate(results):
        rows.append(
            [k]
            + [_fmt(v) for v in profiles[k].ravel()]
            + [_fmt(v) for v in res.recovered.ravel()]
            + [_fmt(res.objective), res.iterations_used]
        )
    _write_csv(out / "invert_outcomes.csv", header, rows)

    recovered = np.stack([r.recovered for r in results])
    rr, rr_se = recovery_rate(profiles, recovered, cfg.tolerance, exclude_rows=exclude)
    err, err_se = mae(profiles, recovered, exclude_rows=exclude)
    ev = evaluate(
        net,
        cfg.distribution,
        NoiseSpec(sigma, rng.child("eval-noise")) if sigma > 0 else NO_NOISE,
        n_profiles=cfg.eval_n_profiles,
        n_noise_samples=cfg.eval_n_noise_samples,
        config=cfg.train_config(seed),
        rng=rng.child("eval"),
    )
    report = PrivacyReport(
        sigma=sigma,
        n_outcomes=cfg.n_outcomes,
        recovery_rate=rr,
        recovery_rate_se=rr_se,
        mae=err,
        mae_se=err_se,
        revenue=ev.revenue,
        revenue_se=ev.revenue_se,
        regret=ev.regret,
        regret_se=ev.regret_se,
    )
    PrivacyReport.write_csv(out / "invert_summary.csv", [report])
    print(
        f"[invert {cfg.size}] sigma={sigma:g} recovery={rr:.2f}% mae={err:.4f} "
        f"revenue={ev.revenue:.4f} regret={ev.regret:.6f}",
        flush=True,
    )
    return EXIT_OK


def _sweep_cell(config_path: str, checkpoint: str, sigma: float, seed: int):
    """One sweep cell; module-level so process pools can import it."""
    from .core import Rng
    from .expconfig import load_config
    from .mechanism import NO_NOISE, NoiseSpec, load_checkpoint
    from .metrics import privacy_sweep_cell

    cfg = load_config(config_path)
    net = load_checkpoint(checkpoint, expected_size=cfg.size)
    rng = Rng(seed)
    cell_rng = rng.child("cell")  # same stream per cell: paired comparisons across sigmas
    noise = NoiseSpec(sigma, rng.child("defense")) if sigma > 0 else NO_NOISE
    return privacy_sweep_cell(
        net,
        cfg.distribution,
        noise,
        cfg.threat_model(),
        cfg.init_strategy(),
        cfg.attack_config(seed),
        cfg.n_outcomes,
        eval_cfg=cfg.train_config(seed),
        n_eval_profiles=cfg.eval_n_profiles,
        n_noise_samples=cfg.eval_n_noise_samples,
        tolerance=cfg.tolerance,
        rng=cell_rng,
    )


def cmd_sweep(args) -> int:
    from .core import Rng
    from .expconfig import load_config
    from .figures import RANDOM_GUESS_RATE, sweep_figure, write_figure
    from .metrics import PrivacyReport
    from .myerson import MyersonConfig, expected_revenue

    cfg = load_config(args.config)
    _load_net(args, cfg)  # fail fast on a bad checkpoint before the long loop
    out = _outdir(args, cfg)
    seed = _seeds(args, cfg)[0]

    reports: list[PrivacyReport] = []
    if args.parallel > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futures = [
                pool.submit(_sweep_cell, args.config, args.checkpoint, s, seed)
                for s in cfg.sigma_grid
            ]
            for s, fut in zip(cfg.sigma_grid, futures):
                reports.append(fut.result())
                print(f"[sweep] sigma={s:g} done", flush=True)
    else:
        for s in cfg.sigma_grid:
            reports.append(_sweep_cell(args.config, args.checkpoint, s, seed))
            r = reports[-1]
            print(
                f"[sweep] sigma={s:g} recovery={r.recovery_rate:.2f}% mae={r.mae:.4f} "
                f"revenue={r.revenue:.4f} regret={r.regret:.6f}",
                flush=True,
            )

    PrivacyReport.write_csv(out / "sweep.csv", reports)

    myerson_rev, _ = expected_revenue(
        MyersonConfig(cfg.size, reserve=cfg.myerson_reserve),
        cfg.distribution,
        n_samples=200_000,
        rng=Rng(seed).child("myerson-ref"),
    )
    sigmas = [r.sigma for r in reports]
    revs = [r.revenue for r in reports]
    write_figure(
        out / "sweep_recovery.svg",
        sweep_figure(
            sigmas,
            [r.recovery_rate for r in reports],
            revs,
            left_label="recovery rate (%)",
            myerson_revenue=myerson_rev,
            random_guess=RANDOM_GUESS_RATE,
            title=f"Privacy and revenue, {cfg.size} auctions",
        ),
    )
    write_figure(
        out / "sweep_mae.svg",
        sweep_figure(
            sigmas,
            [r.mae for r in reports],
            revs,
            left_label="reconstruction MAE",
            myerson_revenue=myerson_rev,
            random_guess=1.0 / 3.0,
            title=f"Reconstruction error and revenue, {cfg.size} auctions",
        ),
    )
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .core import AuctionSize
    from .mechanism import default_architecture, finite_difference_check

    try:
        n, m = (int(v) for v in args.size.lower().split("x"))
        size = AuctionSize(n, m)
    except (ValueError, TypeError):
        print(f"gradcheck: invalid --size {args.size!r}, expected like 2x2", file=sys.stderr)
        return EXIT_CONFIG
    arch = default_architecture(size)
    worst = 0.0
    for sigma_text in args.sigmas.split(","):
        sigma = float(sigma_text)
        err = finite_difference_check(
            arch, args.seed, sigma=sigma, n_draws=args.draws, corrupt=args.corrupt
        )
        status = "ok" if err <= GRADCHECK_TOLERANCE else "FAIL"
        print(f"[gradcheck {size}] sigma={sigma:g} max relative error {err:.3e} {status}")
        worst = max(worst, err)
    if worst > GRADCHECK_TOLERANCE:
        print(f"gradcheck failed: {worst:.3e} > {GRADCHECK_TOLERANCE:g}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("--threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .expconfig import ConfigError

    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # checkpoint + divergence errors resolved lazily below
        from .mechanism import CheckpointError
        from .training import TrainingDivergedError

        if isinstance(e, CheckpointError):
            print(f"checkpoint error: {e}", file=sys.stderr)
            return EXIT_IO
        if isinstance(e, TrainingDivergedError):
            print(f"numeric failure: {e}", file=sys.stderr)
            return EXIT_NUMERIC
        raise


if __name__ == "__main__":
    sys.exit(main())
