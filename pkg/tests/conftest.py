import warnings

import numpy as np
import pytest

from defocuskit import BlurOperator, DefocusModel, PsfStack, PsfTruncationWarning, build_masks

# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_truncation():
    # small rho with large depths truncates by design in many tests
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PsfTruncationWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_stack(rng, n_zones, rho, symmetric=False):
    k = rng.random((n_zones, rho, rho))
    if symmetric:
        k = k + k[:, ::-1, ::-1]
    k /= k.sum(axis=(1, 2), keepdims=True)
    return PsfStack(k, np.zeros(n_zones))


def random_operator(rng, n_zones, dof, rho, width, backend="fft", orientation="rows",
                    physical=True, blur=0.4):
    """Operator on an (n_zones*dof, width) object (transposed for column bands)."""
    model = DefocusModel(n_zones, dof, blur, (n_zones + 1) / 2, rho, orientation)
    shape = (n_zones * dof, width) if orientation == "rows" else (width, n_zones * dof)
    if physical:
        return BlurOperator.from_model(model, shape, backend=backend)
    masks = build_masks(model, *shape)
    return BlurOperator(masks, random_stack(rng, n_zones, rho), shape, orientation, backend)
