"""Driver used to produce the shipped training artifacts (same code path the
CLI train command wraps): nauction.training.train with per-size defaults."""
import sys
import nauction  # noqa: F401  (BLAS setup before numpy)
import os
import numpy as np
from nauction.core import AuctionSize, UNIFORM_UNIT
from nauction.mechanism import default_architecture, save_checkpoint
from nauction.training import TrainConfig, train, evaluate

def main():
    n, m = int(sys.argv[1]), int(sys.argv[2])
    overrides = {}
    if len(sys.argv) > 3 and sys.argv[3] == "quarter":
        overrides["n_train_samples"] = 160_000
    tag = f"{n}x{m}" + ("_quarter" if overrides else "")
    size = AuctionSize(n, m)
    arch = default_architecture(size)
    cfg = TrainConfig.for_size(size, **overrides)
    def prog(st):
        print(f"[{tag}] epoch {st.epoch}/{cfg.epochs} revenue={st.revenue:.4f} "
              f"regret={st.regret:.5f} rho={st.rho:g} t={st.wall_time_s:.0f}s", flush=True)
    net, report = train(arch, UNIFORM_UNIT, cfg, progress=prog)
    out = os.path.join(os.path.dirname(__file__), f"{tag}.nauc")
    save_checkpoint(net, out)
    report.to_csv(os.path.join(os.path.dirname(__file__), f"{tag}_train_report.csv"))
    res = evaluate(net, UNIFORM_UNIT, n_profiles=10_000, config=cfg)
    print(f"[{tag}] FINAL revenue={res.revenue:.4f}±{res.revenue_se:.4f} "
          f"regret={res.regret:.6f}±{res.regret_se:.6f}", flush=True)

if __name__ == "__main__":
    main()
