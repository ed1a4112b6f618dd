import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    """Collect one pass/fail line per acceptance criterion for the summary."""
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    ACCEPTANCE_LINES.append(f"[criterion {number:>2}] {name}: {status}{suffix}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_diff(fn, x, h=1e-5):
    """Central finite differences of a scalar function over a flat array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        hi = fn(x)
        xf[i] = orig - h
        lo = fn(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * h)
    return grad


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.abs(a - b) / denom


def covering_radius(points, center_ids):
    d = np.linalg.norm(points[:, None] - points[center_ids][None], axis=2)
    return d.min(axis=1).max()


def brute_force_kcenter(points, seed_ids, n_new):
    """Optimal k-center over all candidate subsets, seeds forced as centers."""
    from itertools import combinations

    candidates = [i for i in range(len(points)) if i not in set(seed_ids)]
    best = np.inf
    for combo in combinations(candidates, n_new):
        r = covering_radius(points, list(seed_ids) + list(combo))
        best = min(best, r)
    return best
