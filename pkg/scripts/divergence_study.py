"""Finite-difference divergence against step size, over a wider range of h than the checks use.

The slope reaches 2 only once h is well below the width of the cutoff ramps,
lambda * delta / 8, which shrinks with the stage.
"""
import argparse
from dataclasses import dataclass

import numpy as np

from crushflow import analysis, blob
from crushflow.moving_blob import eta
from crushflow.field import Params, StageField


@dataclass
class Config:
    stages: tuple = (1, 2, 3, 4)
    samples: int = 4000
    seed: int = 0


def main(cfg: Config):
    params = Params()
    hs = 10.0 ** -np.arange(2, 9.5, 0.5)
    rng = np.random.default_rng(cfg.seed)
    for i in cfg.stages:
        st = StageField(params, i)
        ramp = st.lam * blob.bump_table(st.delta).eps
        # sample near blobs so the ramps are actually hit
        b = st.blobs[rng.integers(len(st.blobs))]
        s = rng.uniform(0.05, 0.95, cfg.samples)
        t = st.t_s + s * (st.t_e - st.t_s)
        c = np.asarray(b.x_s) + np.multiply.outer(eta(s), b.displacement)
        x = (c + st.lam * rng.uniform(-0.56, 0.56, (cfg.samples, params.d))) % 1.0
        fd = [np.abs(analysis.fd_divergence(st, t, x, h)).max() for h in hs]
        local = np.diff(np.log10(fd)) / np.diff(np.log10(hs))
        print(f"stage {i}: ramp width {ramp:.2e}")
        for h, v, sl in zip(hs[1:], fd[1:], local):
            print(f"  h={h:.1e}  max|div_h|={v:.3e}  local slope {sl:+.2f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--stages", default="1,2,3,4")
    ap.add_argument("--samples", type=int, default=4000)
    a = ap.parse_args()
    main(Config(tuple(int(s) for s in a.stages.split(",")), a.samples))
