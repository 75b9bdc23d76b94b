"""Collapse reports of the crushing map over a range of generations."""
import argparse
from dataclasses import dataclass

from crushflow import analysis
from crushflow.field import Params


@dataclass
class Config:
    grid: int = 64
    max_gen: int = 6
    seed: int = 0
    nu: float = 0.75


def main(cfg: Config):
    params = Params(nu=cfg.nu)
    print("n  in_cantor  core_frac  core_ok  cells_ok  volume      density_ratio")
    for n in range(cfg.max_gen + 1):
        rep = analysis.collapse_report(params, cfg.grid, n, seed=cfg.seed, keep_points=True)
        cells = analysis.translated_cell_fraction(params, rep.starts, n)
        print(f"{n}  {rep.fraction_in_cantor:9.4f}  {rep.core_fraction:9.5f}  {rep.core_contained:7.3f}  "
              f"{cells:8.3f}  {rep.volume:.4e}  {rep.density_ratio:.1f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, default=64)
    ap.add_argument("--gen", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--nu", type=float, default=0.75)
    a = ap.parse_args()
    main(Config(a.grid, a.gen, a.seed, a.nu))
