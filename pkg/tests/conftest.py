import pytest

import goldenrate as gr


@pytest.fixture(scope="session")
def bath_n1():
    return gr.BathModel(n=1, lam=1.0, theta=1.0)


@pytest.fixture(scope="session")
def bath_n3():
    return gr.BathModel(n=3, lam=1.0, theta=1.0)


@pytest.fixture(scope="session")
def ls_n1(bath_n1):
    return gr.Lineshape(bath_n1)


@pytest.fixture(scope="session")
def ls_n3(bath_n3):
    return gr.Lineshape(bath_n3)


@pytest.fixture(scope="session")
def quad_ls_n1(bath_n1):
    # exact-coth lineshape with the interpolation table; built once, reused
    return gr.Lineshape(bath_n1, method="quadrature")
