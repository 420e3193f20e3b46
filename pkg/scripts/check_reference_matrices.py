#!/usr/bin/env python3
"""Compare locally supplied reference matrices against expected structure.

Looks for <name>.mtx files under --dir (default data/uf/ or $SAIKIT_UF_DIR)
and checks n, nnz, p, p_d and the irregular-column count against the
published values; for the two small fs_541 systems it also runs the
split-path solve and reports the accuracy multiple. Missing files are
listed and skipped. Download the matrices from the SuiteSparse collection
yourself; nothing is fetched here.
"""

import argparse
import os
import sys

import numpy as np

from saikit import (DriverConfig, column_stats, matvec, read_matrix_market,
                    solve_irregular)

EXPECTED = {
    "fs_541_3": (541, 4282, 7, 538, 1),
    "fs_541_4": (541, 4273, 7, 535, 1),
    "rajat04": (1041, 8725, 8, 642, 4),
    "tols4000": (4000, 8784, 2, 22, 18),
}

SOLVE_NAMES = ("fs_541_3", "fs_541_4")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    default_dir = os.environ.get("SAIKIT_UF_DIR", "data/uf")
    ap.add_argument("--dir", default=default_dir)
    args = ap.parse_args(argv)

    any_found = False
    failures = 0
    for name, (n, nnz, p, p_d, s) in EXPECTED.items():
        path = os.path.join(args.dir, f"{name}.mtx")
        if not os.path.exists(path):
            print(f"{name:10s}  missing ({path})")
            continue
        any_found = True
        a = read_matrix_market(path)
        stats = column_stats(a, 10.0)
        got = (a.n_rows, a.nnz, stats.p, stats.p_d, stats.s)
        ok = got == (n, nnz, p, p_d, s)
        failures += 0 if ok else 1
        print(f"{name:10s}  n={got[0]} nnz={got[1]} p={got[2]} p_d={got[3]} "
              f"s={got[4]}  expected=({n},{nnz},{p},{p_d},{s})  "
              f"{'ok' if ok else 'MISMATCH'}")
        if name in SOLVE_NAMES and ok:
            b = matvec(a, np.ones(a.n_rows))
            rep = solve_irregular(a, b, DriverConfig(method="psai"))
            print(f"{'':10s}  split-path solve: a={rep.a:.2f} "
                  f"iter={rep.max_iter_used} converged={rep.converged}")
            failures += 0 if rep.converged else 1
    if not any_found:
        print("no reference matrices found; nothing checked")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
