import sys
import numpy as np
import pytest

from dpwloops import LaurentMatrix, SymmetricSpaceSpec, build_extended_frame, make_potential, square_grid

E12 = np.array([[0, 1], [0, 0]], dtype=complex)
E21 = np.array([[0, 0], [1, 0]], dtype=complex)


def cp1_frame(z, lam):
    """Closed-form unitary frame of the potential lam^-1 E12 dz."""
    z = complex(z)
    return np.array([[1, z / lam], [-lam * np.conj(z), 1]]) / np.sqrt(1 + abs(z) ** 2)


def su11_frame(z, lam):
    """Closed-form SU(1,1) frame of the same potential, |z| < 1."""
    z = complex(z)
    return np.array([[1, z / lam], [lam * np.conj(z), 1]]) / np.sqrt(1 - abs(z) ** 2)


def unipotent(z):
    """The loop I + z lam^-1 E12."""
    return LaurentMatrix.from_dict({-1: z * E12, 0: np.eye(2)})


@pytest.fixture(scope="session")
def spec2():
    return SymmetricSpaceSpec(2, (1, -1))


@pytest.fixture(scope="session")
def su11():
    return SymmetricSpaceSpec(2, (1, -1), "indefinite", 1, 1)


@pytest.fixture(scope="session")
def cp1(spec2):
    return make_potential(spec2, {-1: [[0, 1], [0, 0]]})


@pytest.fixture(scope="session")
def cp1_frames(cp1):
    return build_extended_frame(cp1, square_grid(0.3 + 0.2j, 0.1, 11))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(mod._line(n))
