import numpy as np
import pytest

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"

CONCENTRATIONS = (0.05, 0.3, 1.0, 5.0)


def dirichlet_corpus(seed, count, min_support=2, max_support=500, with_ties=False):
    """Random distributions spanning spiky to near-uniform shapes.

    Returns raw probability vectors (summing to 1 up to float error);
    callers canonicalize. With ``with_ties`` some vectors get an exact
    duplicate value to exercise tie handling.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(min_support, max_support + 1))
        alpha = float(rng.choice(CONCENTRATIONS))
        probs = rng.dirichlet(np.full(n, alpha))
        if with_ties and n >= 2 and rng.random() < 0.3:
            i, j = rng.choice(n, size=2, replace=False)
            probs[j] = probs[i]
            probs = probs / probs.sum()
        out.append(probs)
    return out


def pure_python_min_sum(probs, p):
    """Independent dual-sum oracle: sum of min(p_j, p) without numpy."""
    return sum(min(float(v), p) for v in probs)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def run_cli(argv):
    """Invoke the CLI in-process and return its exit code."""
    from oddball.cli import main

    return main([str(a) for a in argv])
