"""Run every verification check at the default parameters and print one line per check."""
import argparse
import sys

from crushflow import suite
from crushflow.field import Params


def main(only=None) -> int:
    results = suite.run_checks(Params(), only)
    width = max(len(n) for n in results)
    for name, r in results.items():
        print(f"{'PASS' if r.passed else 'FAIL'}  {name:{width}s}  {r.seconds:6.2f}s  {r.values}")
    failed = sum(not r.passed for r in results.values())
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--only", action="append")
    sys.exit(main(ap.parse_args().only))
