"""Stage norms, fitted exponents, and the same fits with the displacement prefactor divided out.

The stage displacement is (l_Theta^i - l_Phi^i)/4 = 2^-i (1 - 2^-nu i)/4, so over
a finite stage range the raw log2 slopes carry the extra slope of
log2(1 - 2^-nu i); the time derivative carries it twice.
"""
import argparse
import math
from dataclasses import dataclass

import numpy as np

from crushflow import analysis
from crushflow.field import Params


@dataclass
class Config:
    nu: float = 0.75
    beta: float | None = None
    d: int = 2
    first: int = 1
    last: int = 6
    ps: tuple = (1.0, 1.3)
    out: str | None = None


def prefactor_power(quantity: str) -> int:
    return 2 if quantity == "time_deriv_sup" else 1


def main(cfg: Config):
    params = Params(d=cfg.d, nu=cfg.nu, beta=cfg.beta)
    stages = list(range(cfg.first, cfg.last + 1))
    prefactor = np.array([math.log2(1 - 2.0 ** (-params.nu * i)) for i in stages])
    shift, _, _ = analysis.fit_line(stages, prefactor)
    body = {"params": {"d": params.d, "nu": params.nu, "beta": params.beta},
            "p_threshold": params.p_threshold, "prefactor_slope": shift, "fits": {}}
    print(f"p threshold {params.p_threshold:.6f}; slope of log2(1 - 2^-nu i) over {stages}: {shift:.5f}")
    for p in cfg.ps:
        reports = [analysis.stage_norms(params, i, p) for i in stages]
        fits = analysis.fit_exponents(params, stages, p, reports=reports)
        rows = []
        for f in fits:
            y = np.array([math.log2(getattr(r, f.quantity)) for r in reports])
            corrected, _, _ = analysis.fit_line(stages, y - prefactor_power(f.quantity) * prefactor)
            rows.append({**f.to_dict()["exponent_fit"], "corrected_slope": corrected})
            print(f"p={p:<4} {f.quantity:15s} slope {f.slope:+.4f}  corrected {corrected:+.4f}  "
                  f"predicted {f.predicted:+.4f}")
        body["fits"][str(p)] = {"fits": rows, "reports": [r.to_dict()["norm_report"] for r in reports]}
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(analysis.dumps(body) + "\n")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--nu", type=float, default=0.75)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--stages", default="1-6")
    ap.add_argument("--p", type=float, action="append")
    ap.add_argument("--out")
    a = ap.parse_args()
    lo, hi = (int(s) for s in a.stages.split("-"))
    main(Config(a.nu, a.beta, a.d, lo, hi, tuple(a.p or (1.0, 1.3)), a.out))
