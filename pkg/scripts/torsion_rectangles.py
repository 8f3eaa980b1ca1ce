"""Torsional rigidity of unit-area rectangles against the Saint-Venant series.

    python scripts/torsion_rectangles.py --aspects 1 2 4 --levels 1 2 3
"""

import argparse
from dataclasses import dataclass

import numpy as np

from rodlim.cli import atomic_write, to_csv
from rodlim.cross_section import generate_rectangle
from rodlim.torsion import solve_torsion


@dataclass
class Config:
    aspects: tuple[float, ...] = (1.0, 2.0, 4.0)
    levels: tuple[int, ...] = (1, 2, 3)
    terms: int = 50
    out: str = "results/torsion_rectangles.csv"


def series(aspect: float, terms: int) -> float:
    a, b = 1 / np.sqrt(aspect), np.sqrt(aspect)  # unit area
    n = 2 * np.arange(terms) + 1
    s = np.sum(np.tanh(n * np.pi * b / (2 * a)) / n ** 5)
    return a ** 3 * b / 3 * (1 - 192 * a / (np.pi ** 5 * b) * s)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--aspects", type=float, nargs="+", default=list(Config.aspects))
    p.add_argument("--levels", type=int, nargs="+", default=list(Config.levels))
    p.add_argument("--out", default=Config.out)
    a = p.parse_args()
    cfg = Config(tuple(a.aspects), tuple(a.levels), out=a.out)
    rows = []
    for asp in cfg.aspects:
        ref = series(asp, cfg.terms)
        for r in cfg.levels:
            sol = solve_torsion(generate_rectangle(asp, r))
            err = abs(sol.tau - ref) / ref
            rows.append([asp, r, sol.tau, ref, err])
            print(f"aspect={asp:<4g} level={r} tau={sol.tau:.6f} series={ref:.6f} rel. error={err:.1e}")
    atomic_write(cfg.out, to_csv(["aspect", "level", "tau", "series", "rel_error"], rows))


if __name__ == "__main__":
    main()
