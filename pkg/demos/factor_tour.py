"""Birkhoff and Iwasawa splittings on a few loops, with the Toeplitz cross-check.

    python3 demos/factor_tour.py
"""
import numpy as np

from dpwloops import LaurentMatrix, SymmetricSpaceSpec, birkhoff, iwasawa, multiply, random_twisted_loop, try_iwasawa
from dpwloops.verify import pointwise_factorization_oracle, toeplitz_plus_factor

spec = SymmetricSpaceSpec(2, (1, -1))
su11 = SymmetricSpaceSpec(2, (1, -1), "indefinite", 1, 1)
E12 = np.array([[0, 1], [0, 0]])


def unipotent(z):
    return LaurentMatrix.from_dict({-1: z * E12, 0: np.eye(2)})


g = unipotent(1.0)
b = birkhoff(g)
print("Birkhoff of I + lam^-1 E12: plus part is", b.plus.to_dict())

r = iwasawa(g, spec)
print("Iwasawa unitary part at lam = 1:\n", np.round(r.unitary(1.0), 6))
print("Toeplitz Cholesky plus factor agrees to", toeplitz_plus_factor(g).distance(r.plus))

# the indefinite form has a genuine cell boundary at |z| = 1
for z in (0.5, 0.99, 1.0, 1.5):
    res = try_iwasawa(unipotent(z), su11)
    print(f"SU(1,1), z = {z}: {res.cell_flag} {res.reason}")

rng = np.random.default_rng(0)
worst = 0.0
for _ in range(50):
    g = random_twisted_loop(rng, spec, eps=0.1)
    r = iwasawa(g, spec)
    worst = max(worst, multiply(r.unitary, r.plus).distance(g),
                pointwise_factorization_oracle(g, spec, unitary=r.unitary).max_residual)
print("50 random loops, worst residual:", worst)
