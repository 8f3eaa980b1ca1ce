"""Q* on the disk under mesh refinement, against the isotropic closed form.

    python scripts/qstar_convergence.py --levels 1 2 3 4 --out results/qstar_convergence.csv
"""

import argparse
import time
from dataclasses import dataclass

import numpy as np

from rodlim.cell_problem import reduce_qstar
from rodlim.cli import atomic_write, to_csv
from rodlim.cross_section import generate_disk
from rodlim.material import isotropic


@dataclass
class Config:
    levels: tuple[int, ...] = (1, 2, 3, 4)
    lambdas: tuple[float, ...] = (0.0, 1.0, 10.0)
    mu: float = 1.0
    out: str = "results/qstar_convergence.csv"


def run(cfg: Config) -> list[list]:
    exact = cfg.mu * np.array([3 / (4 * np.pi), 3 / (4 * np.pi), 1 / (2 * np.pi), 3.0])
    rows = []
    for lam in cfg.lambdas:
        for r in cfg.levels:
            cs = generate_disk(r)
            t0 = time.perf_counter()
            q = reduce_qstar(cs, isotropic(lam, cfg.mu))
            dt = time.perf_counter() - t0
            d = np.diag(q.matrix)
            err = np.abs(d - exact) / exact
            rows.append([lam, r, cs.n_triangles, cs.mesh_size, *d, err.max(), np.abs(q.cross_block).max(), dt])
            print(f"lambda={lam:<5g} level={r} triangles={cs.n_triangles:<6d} max rel. error={err.max():.2e}  {dt:.2f}s")
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--levels", type=int, nargs="+", default=list(Config.levels))
    p.add_argument("--lambdas", type=float, nargs="+", default=list(Config.lambdas))
    p.add_argument("--mu", type=float, default=Config.mu)
    p.add_argument("--out", default=Config.out)
    a = p.parse_args()
    cfg = Config(tuple(a.levels), tuple(a.lambdas), a.mu, a.out)
    header = ["lambda", "level", "n_triangles", "h_max", "Q11", "Q22", "Q33", "Q44", "max_rel_error",
              "cross_block", "seconds"]
    atomic_write(cfg.out, to_csv(header, run(cfg)))


if __name__ == "__main__":
    main()
