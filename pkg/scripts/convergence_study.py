"""Grid-refinement tables for the static identities and the normal-velocity gauge check.

Prints one row per grid with the residual and the observed order against
the previous row. With --plot the residuals are drawn on a log-log chart.
"""

import argparse
import math

import numpy as np

from graphflow import presets
from graphflow.diagnostics import calabi_residual, eq1_residual, simons_flat_residual
from graphflow.discretization import Grid, jets
from graphflow.factors import FactorManifold, ProductSpace
from graphflow.flow import GraphState, normal_velocity_check
from graphflow.immersion import GraphJet, gauss_curvature_check


def catenoid_rows(sizes):
    sp = ProductSpace(FactorManifold("euclidean-chart", 2), FactorManifold("euclidean-chart", 1))
    rows = {"cosh identity": [], "calabi operator": [], "gauss curvature": [], "simons identity": []}
    hs = []
    for n in sizes:
        g = Grid.box([-2.5, -2.5], [2.5, 2.5], n)
        r = np.sqrt(np.sum(g.coords() ** 2, axis=-1))
        J = presets.catenoid_jets(g, 0.5, r > 0.5)
        ann = presets.annulus_mask(g)
        rows["cosh identity"].append(eq1_residual(J, sp, g, ann).max_residual)
        rows["calabi operator"].append(calabi_residual(presets.catenoid(g, 0.5), sp, ann).max_residual)
        Jd = jets(presets.catenoid(g, 0.5))
        rows["gauss curvature"].append(
            gauss_curvature_check(GraphJet(Jd.x, Jd.y, Jd.df, Jd.d2f), sp, g, ann & Jd.valid).residual)
        rows["simons identity"].append(simons_flat_residual(J, sp, g, ann).max_residual)
        hs.append(g.h_min)
    return rows, hs


def sphere_rows(lats):
    sp = ProductSpace(FactorManifold("round-sphere", 2, 1.0), FactorManifold("round-sphere", 2, 2.0))
    errs, hs = [], []
    for nl in lats:
        g = Grid.sphere(nl, polar_band=math.pi / 6)
        errs.append(normal_velocity_check(GraphState(presets.sphere_bump(g, sp, 0.25), sp)))
        hs.append(g.h_min)
    return {"normal velocity (sphere bump)": errs}, hs


def print_table(rows, hs):
    for name, errs in rows.items():
        print(name)
        for k, (h, e) in enumerate(zip(hs, errs)):
            order = "" if k == 0 else f"  order {math.log(errs[k - 1] / e) / math.log(hs[k - 1] / h):.3f}"
            print(f"  h = {h:.4e}  residual = {e:.4e}{order}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="51,101,201", help="catenoid box resolutions")
    ap.add_argument("--lats", default="16,32,64", help="sphere latitude counts")
    ap.add_argument("--plot", help="write a log-log PNG to this path")
    args = ap.parse_args()
    cat, hc = catenoid_rows([int(s) for s in args.sizes.split(",")])
    sph, hsph = sphere_rows([int(s) for s in args.lats.split(",")])
    print_table(cat, hc)
    print_table(sph, hsph)
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6.4, 4.6))
        for rows, hs in ((cat, hc), (sph, hsph)):
            for name, errs in rows.items():
                ax.loglog(hs, errs, "o-", label=name)
        ax.set_xlabel("h")
        ax.set_ylabel("max residual")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(args.plot, dpi=110)
        print(args.plot)


if __name__ == "__main__":
    main()
