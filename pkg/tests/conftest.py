import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
NUMBER = np.diag([0.0, 1.0])


def site_operator(op, site, n_sites):
    """Kronecker embedding with site 1 as the least significant factor."""
    mats = [np.eye(2)] * n_sites
    mats[n_sites - site] = op
    return functools.reduce(np.kron, mats)


def dense_hamiltonian(n_sites, omega, c6, pinned=()):
    """Reference Hamiltonian from explicit Kronecker products."""
    pinned_sites = {s for s, _ in pinned}
    dim = 2**n_sites
    h = np.zeros((dim, dim))
    for k in range(1, n_sites + 1):
        if k not in pinned_sites:
            h += omega * site_operator(SIGMA_X, k, n_sites)
        for m in range(k + 1, n_sites + 1):
            h += c6 / (m - k) ** 6 * site_operator(NUMBER, k, n_sites) @ site_operator(
                NUMBER, m, n_sites)
    return h


def dense_liouvillian(n_sites, omega, gamma, c6, pinned=()):
    """Superoperator acting on row-major vectorised density matrices."""
    pinned_sites = {s for s, _ in pinned}
    h = dense_hamiltonian(n_sites, omega, c6, pinned)
    eye = np.eye(2**n_sites)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for k in range(1, n_sites + 1):
        if k in pinned_sites:
            continue
        op = np.sqrt(gamma) * site_operator(NUMBER, k, n_sites)
        prod = op.T @ op
        sup += np.kron(op, op.conj()) - 0.5 * (np.kron(prod, eye) + np.kron(eye, prod.T))
    return sup


def random_density(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance report: one line per criterion, printed after the run
ACCEPTANCE_LINES = {}


def record_criterion(key: str, passed: bool, detail: str) -> None:
    line = f"{key}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
