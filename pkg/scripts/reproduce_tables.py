"""Controllability tables of the two-tank plant for one parameterisation.

Prints, for both controller versions, each attacker's loop-closed
vulnerability row and y hulls next to the symbolic expectation
instantiated on the measured operating band.

    python scripts/reproduce_tables.py                 # desk config
    python scripts/reproduce_tables.py --r1 30 --r2 30
    python scripts/reproduce_tables.py --sweep         # fairness row over a grid
"""

import argparse
import itertools
import time
from dataclasses import dataclass

from cpsflow.errors import CpsError
from cpsflow.fixtures import TwoTankConfig, build_two_tank
from cpsflow.reach import integrity_verdict, project_all, reach, vulnerability_report

PREDICATES = ("E1", "E2", "F1", "F2")
ROWS = {"original": {"alpha1": "✓✓✓✓", "alpha2": "✗✓✗✓", "alpha3": "✓✓✓✗"},
        "fairness": {"alpha3": "✓✗✓✗"}}


@dataclass
class TableRun:
    L: int = 100
    w: int = 10
    v1: int = 3
    v2: int = 4
    r1: int = 20
    r2: int = 20

    def config(self, version: str) -> TwoTankConfig:
        return TwoTankConfig(self.L, self.w, self.v1, self.v2, self.r1, self.r2, version)


def expected_hulls(sc, attacker):
    L, band, cfg = sc.config.L, sc.band, sc.config
    if attacker == "alpha1":
        return {"y1": (0, L), "y2": (0, L)}
    if attacker == "alpha2":
        return {"y1": (band.lo[0], band.hi[0]), "y2": (0, L)}
    if cfg.controller_version == "fairness":
        return {"y2": (band.lo[1] - cfg.v2, band.hi[1])}
    return {"y2": (0, band.hi[1])}


def analyse(sc, attacker):
    t0 = time.perf_counter()
    res = reach(sc.model, sc.attackers[attacker], sc.sigma0, "auto")
    rep = vulnerability_report(res, sc.predicates)
    row = "".join("✓" if rep[p].reachable else "✗" for p in PREDICATES)
    values = project_all(res).values
    hulls = {name: (min(v[t] for v in values), max(v[t] for v in values))
             for t, name in enumerate(("y1", "y2"))}
    return row, hulls, integrity_verdict(res), res, time.perf_counter() - t0


def print_tables(run: TableRun) -> bool:
    ok = True
    for version, rows in ROWS.items():
        sc = build_two_tank(run.config(version))
        print(f"{version} controller: band lo={sc.band.lo} hi={sc.band.hi}"
              f"{'  (degenerate)' if sc.band.degenerate else ''}")
        for attacker, want in rows.items():
            row, hulls, verdict, res, secs = analyse(sc, attacker)
            hull_want = expected_hulls(sc, attacker)
            hull_ok = all(hulls[v] == h for v, h in hull_want.items())
            ok &= row == want and hull_ok
            print(f"  {attacker}: row {row} (expected {want})  "
                  f"hulls {hulls} (expected {hull_want})  integrity {verdict.status}"
                  f"  k={res.k}  {secs:.1f}s")
    return ok


def sweep() -> None:
    print("L w v1 v2 r  fairness-alpha3-row  y2-hull  r2_lo-v2")
    for w, v1, v2, r in itertools.product((10, 12, 14), (2, 3), (2, 3, 4), (20, 30, 40)):
        try:
            sc = build_two_tank(TableRun(100, w, v1, v2, r, r).config("fairness"))
        except CpsError:
            continue
        row, hulls, *_ = analyse(sc, "alpha3")
        print(100, w, v1, v2, r, row, hulls["y2"], sc.band.lo[1] - v2)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in vars(TableRun()).items():
        p.add_argument(f"--{name}", type=int, default=default)
    p.add_argument("--sweep", action="store_true", help="fairness row over a parameter grid")
    args = p.parse_args(argv)
    if args.sweep:
        sweep()
        return 0
    run = TableRun(**{k: getattr(args, k) for k in vars(TableRun())})
    return 0 if print_tables(run) else 1


if __name__ == "__main__":
    raise SystemExit(main())
