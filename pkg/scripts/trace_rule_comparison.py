"""Single-layer jump residual for several trace-extrapolation rules on the sphere.

Compares the two-offset rule (offsets 0,1; source at panel resolution) with
the rule used by the package (offsets 0..3, source upsampled four times).
"""
import argparse

import numpy as np

from diracshell.algebra import alpha_dot_many
from diracshell.layer import BoundaryDensity, apply_gamma, numerical_traces
from diracshell.surface import SurfaceSpec, build_mesh


def jump_residual(mesh, offsets, upsample):
    x = mesh.points
    phi = np.stack([1 + x[:, 0], x[:, 1] * x[:, 2], 1j * x[:, 2], 0.5 + x[:, 0] ** 2], -1)
    dens = BoundaryDensity(phi, mesh)
    tp, tm, _ = numerical_traces(lambda p: apply_gamma(0.0, dens, p, upsample=upsample).values, mesh,
                                 offsets=offsets)
    jump = 1j * np.einsum("nij,nj->ni", alpha_dot_many(mesh.normals), tp.values - tm.values) - phi
    w = mesh.weights[:, None]
    return float(np.sqrt(np.sum(w * np.abs(jump) ** 2) / np.sum(w * np.abs(phi) ** 2)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="1,2")
    args = ap.parse_args()
    rules = [("offsets 0,1 / upsample 1", (0, 1), 1), ("offsets 0..3 / upsample 4", (0, 1, 2, 3), 4)]
    for lv in (int(v) for v in args.levels.split(",")):
        mesh = build_mesh(SurfaceSpec(), lv)
        print(f"level {lv}: " + ", ".join(f"{name}: {jump_residual(mesh, o, u):.3e}" for name, o, u in rules))


if __name__ == "__main__":
    main()
