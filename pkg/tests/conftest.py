import pytest

from hypercone.acceptance import run_all


@pytest.fixture(scope="session")
def acceptance_results():
    """One full acceptance run (criteria 1-8 twice, plus the determinism check)."""
    return run_all()
