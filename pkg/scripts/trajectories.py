"""Analytic against numeric Cantor trajectories for random addresses, stage by stage."""
import argparse
from dataclasses import dataclass

import numpy as np

from crushflow import cantor, flowmap
from crushflow.cantor import Address, phi
from crushflow.field import ConstructionField, Params, tau


@dataclass
class Config:
    addresses: int = 10
    depth: int = 6
    tol: float = 1e-10
    seed: int = 0


def main(cfg: Config):
    params = Params()
    rng = np.random.default_rng(cfg.seed)
    v = ConstructionField(params)
    for _ in range(cfg.addresses):
        a = Address(tuple(tuple(int(s) for s in rng.choice([-1, 1], params.d)) for _ in range(cfg.depth)))
        y = cantor.limit_point(phi(params.nu), a)
        errs = []
        for i in range(1, cfg.depth + 1):
            y = flowmap.integrate_batch(v, y[None, :], tau(params, i - 1), tau(params, i), cfg.tol)[0]
            ref = flowmap.analytic_cantor_trajectory(params, a, tau(params, i))
            errs.append(float(np.abs(cantor.torus_delta(y, ref)).max()))
        print(f"{str(a):24s} " + " ".join(f"{e:.1e}" for e in errs))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--addresses", type=int, default=10)
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    main(Config(a.addresses, a.depth, a.tol, a.seed))
