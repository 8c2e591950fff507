import numpy as np
import pytest

from fewbody.model import (
    CouplingConfig,
    MassSet,
    ModelSpec,
    PotentialSpec,
    Quadrature,
)
from fewbody import twobody as tb

# threshold of the unit Gaussian well, pinned by the radial shooting oracle
# (shooting and the integral-operator route agree to ~1e-12)
GAUSS_LAMBDA_STAR = 2.684004650924483
SW_LAMBDA_STAR = np.pi**2 / 4.0
# threshold of the unit exponential well: first zero of J0 fixes it analytically
EXP_LAMBDA_STAR = 1.4457964907366963


@pytest.fixture(scope="session")
def square_well():
    return PotentialSpec("square_well", depth=1.0, range=1.0)


@pytest.fixture(scope="session")
def gaussian_well():
    return PotentialSpec("gaussian", depth=1.0, range=1.0)


@pytest.fixture(scope="session")
def exponential_well():
    return PotentialSpec("exponential", depth=1.0, range=1.0)


@pytest.fixture(scope="session")
def sw_quad(square_well):
    return Quadrature.for_potential(square_well)


@pytest.fixture(scope="session")
def gauss_quad(gaussian_well):
    return Quadrature.for_potential(gaussian_well)


@pytest.fixture(scope="session")
def sw_resonance(square_well, sw_quad):
    return tb.resonance_data(square_well, sw_quad)


@pytest.fixture(scope="session")
def gauss_resonance(gaussian_well, gauss_quad):
    return tb.resonance_data(gaussian_well, gauss_quad)


@pytest.fixture(scope="session")
def equal_masses():
    return MassSet(1.0, 1.0, 1.0)


def make_model(masses, pot, couplings, eps=0.2):
    lam12, lam13, lam23 = couplings
    return ModelSpec(
        masses, pot, pot, pot,
        CouplingConfig(lam12, lam13, lam23, margin_epsilon=eps),
    )


@pytest.fixture(scope="session")
def gauss_model_factory(equal_masses, gaussian_well):
    def factory(scale: float, eps: float = 0.2) -> ModelSpec:
        lam = scale * GAUSS_LAMBDA_STAR
        return make_model(equal_masses, gaussian_well, (lam, lam, lam), eps)

    return factory
