from __future__ import annotations

import numpy as np
import pytest

from varprop.spectral_core import HermitianOperator, gue_hamiltonian


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_hermitian(rng):
    def make(dim: int) -> HermitianOperator:
        return gue_hamiltonian(dim, rng)

    return make
