"""CP1 walk-through: potential, frames, harmonic map, extended solution.

Builds the frames of lam^-1 E12 dz on a square patch, checks them against the
closed form, embeds into the sphere and writes a CSV of unit vectors.

    python3 demos/cp1_sphere.py [out.csv]
"""
import sys

import numpy as np

from dpwloops import (
    build_extended_frame,
    cartan_embed,
    extended_solution,
    make_potential,
    maurer_cartan_residual,
    square_grid,
    uniton_number,
    SymmetricSpaceSpec,
)
from dpwloops.cli import export_sphere_map, sphere_points

spec = SymmetricSpaceSpec(2, (1, -1))
eta = make_potential(spec, {-1: [[0, 1], [0, 0]]})

grid = square_grid(0, 2.0, 21)
frames = build_extended_frame(eta, grid)
print(f"{frames.in_cell.sum()} of {frames.in_cell.size} points in the cell, degree spread {frames.degree_spread()}")

# closed form F = [[1, z/lam], [-lam conj(z), 1]] / sqrt(1 + |z|^2)
z, lam = grid[3, 17], np.exp(0.4j)
F = np.array([[1, z / lam], [-lam * np.conj(z), 1]]) / np.sqrt(1 + abs(z) ** 2)
print("closed form error at one point:", np.abs(frames.frames[3, 17](lam) - F).max())

mm = cartan_embed(frames)
pts = sphere_points(mm)
print("z = 0 maps to", np.round(pts[10, 10], 12), "; corner maps to", np.round(pts[0, 0], 3))

phi = extended_solution(frames)
print("Phi(lam = 1) deviation from identity:", phi.at_one_is_identity())
print("uniton number (upper bound):", uniton_number(phi).k)

fine = build_extended_frame(eta, square_grid(0.3 + 0.2j, 0.1, 21))
print("Maurer-Cartan residuals at lam = 1, i, -1:", maurer_cartan_residual(fine).residuals)

out = sys.argv[1] if len(sys.argv) > 1 else "cp1_sphere.csv"
rows = export_sphere_map(mm, out)
print(f"wrote {rows} rows to {out}")
