import math

import pytest

from mixedplap import DomainSpec, EnergyContext, Kernel, SolverParams, build_domain
from mixedplap.eigen1 import solve_lambda1
from mixedplap.eigen2 import minimax_lambda2

# outcome per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = {}
CRITERIA = {
    1: "p=2 oracle equivalence (interval n=200, disk n=60)",
    2: "classical local limit and O(h^2) convergence",
    3: "lambda2 > lambda1 with margin > 10 tol, p in {2, 3}",
    4: "explicit path levels on the p=3 interval",
    5: "nodal domain margins and kernel weight sweep",
    6: "Faber-Krahn in 2-D at n=60 and n=80, p in {2, 3}",
    7: "Hong-Krahn-Szego on interval, disk and square with split sweep",
    8: "two drifting balls: monotone lambda2 and exact decoupling",
    9: "elementary inequality sweeps, 1e5 trials per p",
    10: "energy identities on 1000 random fields",
    11: "discrete Polya-Szego under refinement and brute force",
    12: "byte-identical results.csv across repeated runs",
}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, title in CRITERIA.items():
        if k in ACCEPTANCE:
            ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d} FAIL: {title}: not run")


@pytest.fixture
def record():
    def _record(k, ok, detail):
        prev = ACCEPTANCE.get(k)
        if prev is not None:
            ok = ok and prev[0]
            detail = f"{prev[1]}; {detail}"
        ACCEPTANCE[k] = (bool(ok), detail)
        print(f"criterion {k} {'PASS' if ok else 'FAIL'}: {detail}")
    return _record


TENT = 0.2
INTERVAL = DomainSpec.interval(0.0, 1.0)
DISK = DomainSpec.ball([0.0, 0.0], 1.0)
SQUARE = DomainSpec.box([0.0, 0.0], [1.0, 1.0])
DOMAINS = {"interval": (INTERVAL, 200), "disk": (DISK, 60), "square": (SQUARE, 40)}


def make_context(name, p, weight=1.0, resolution=None):
    spec, n = DOMAINS[name]
    kern = Kernel.make("tent", TENT, spec.dim, weight)
    grid, mask = build_domain(spec, resolution or n, kern.radius)
    return EnergyContext(grid, kern, p), mask


class Solves:
    """Session cache of eigenpairs shared across acceptance tests."""

    def __init__(self):
        self.params = SolverParams(tol=1e-10)
        self._cache = {}

    def pair(self, name, p):
        key = (name, float(p))
        if key not in self._cache:
            ctx, mask = make_context(name, p)
            first = solve_lambda1(ctx, mask, self.params)
            second = minimax_lambda2(ctx, self.params, phi1=first.eigenfunction, lam1=first.lam)
            self._cache[key] = (ctx, mask, first, second)
        return self._cache[key]


@pytest.fixture(scope="session")
def solves():
    return Solves()


@pytest.fixture
def unit_interval():
    kern = Kernel.make("tent", 0.25, 1)
    grid, mask = build_domain(INTERVAL, 40, kern.radius)
    return grid, mask, kern


def pi2():
    return math.pi ** 2
