"""Hoelder quotient sweeps of v for several exponents and seeds.

At separations above the cutoff ramp width the largest velocity difference
is already of the order of the sup norm, so the max quotient behaves like
r^-alpha there; the printed slopes show how close the sweep is to that regime.
"""
import argparse
from dataclasses import dataclass

from crushflow import suite
from crushflow.field import Params


@dataclass
class Config:
    alphas: tuple = (0.0, 0.0625, 0.125, 0.25, 1.5)
    seeds: tuple = (0, 1, 2, 3, 4, 5)
    samples: int = 20_000


def main(cfg: Config):
    params = Params()
    print(f"admissible bound {params.alpha_bound:.4f}; default alpha {params.alpha:.4f}")
    for alpha in cfg.alphas:
        slopes = [suite.holder_sweep(params, alpha, cfg.samples, seed=s)[1] for s in cfg.seeds]
        mean = sum(slopes) / len(slopes)
        print(f"alpha={alpha:<7g} slopes " + " ".join(f"{s:+.3f}" for s in slopes) + f"  mean {mean:+.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--seeds", type=int, default=6)
    a = ap.parse_args()
    main(Config(samples=a.samples, seeds=tuple(range(a.seeds))))
