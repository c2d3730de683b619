"""Monodromy of potentials with a pole at z = 0.

The log potential lam^-1 E12 dz / z has unipotent monodromy around the pole,
which is not unitary, so the harmonic map is not single valued on C*.  The
symmetric potential D dz / z with D Hermitian on the unit circle has unitary
monodromy exp(2 pi i D), trivial exactly when the eigenvalues of D are
integers.

    python3 demos/monodromy_log.py
"""
import numpy as np

from dpwloops import (
    SymmetricSpaceSpec,
    build_extended_frame,
    circle_path,
    extended_solution,
    extended_solution_monodromy_relation,
    is_finite_uniton_type,
    make_potential,
    monodromy,
    square_grid,
    transported_frames,
)

spec = SymmetricSpaceSpec(2, (1, -1))
log = make_potential(spec, {-1: [[0, "1/z"], [0, 0]]}, basepoint=1)
rec = monodromy(log, circle_path(0, 1), label="around 0")
print("chi(1) =\n", np.round(rec.value_at(1.0), 10))
print("max deviation from identity:", rec.max_deviation)
frames = build_extended_frame(log, square_grid(1.5, 0.1, 5))
print("classification:", is_finite_uniton_type(frames, [rec]))

for a in ("1", "1/4"):
    eta = make_potential(spec, {-1: [[0, f"({a})/z"], [0, 0]], 1: [[0, 0], [f"({a})/z", 0]]}, basepoint=1)
    rec = monodromy(eta, circle_path(0, 1))
    fr = build_extended_frame(eta, square_grid(1.0, 0.2, 5))
    phi = extended_solution(fr)
    phit = extended_solution(transported_frames(fr, eta, circle_path(0, 1)))
    print(f"a = {a}: deviation {rec.max_deviation:.3f}, unitary to {rec.reality_residuals.max():.1e}, "
          f"transport relation residual {extended_solution_monodromy_relation(phi, phit, rec):.1e}")
