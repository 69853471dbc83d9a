import numpy as np
import pytest

from ttlindblad.dm_compress import factor_to_dense_rho
from ttlindblad.integrator import MIDPOINT, RK4
from ttlindblad.models import heisenberg_model, product_state
from ttlindblad.oracle import (
    DenseLindbladian,
    OracleSizeExceeded,
    dense_jumps,
    dense_kraus_step,
    dense_lindbladian,
    dense_propagate,
    dense_solution,
)


def test_size_cap():
    model = heisenberg_model(10)
    with pytest.raises(OracleSizeExceeded):
        dense_lindbladian(model)


def test_dense_jumps():
    model = heisenberg_model(2, t_decay=4.0)
    ls = dense_jumps(model)
    assert len(ls) == 2 and ls[0].shape == (4, 4)
    # sigma-/sqrt(4) embedded alongside a 2x2 identity: norm 0.5 * sqrt(2)
    assert np.isclose(np.linalg.norm(ls[0]), 0.5 * np.sqrt(2))


def test_propagation_preserves_trace_hermiticity_positivity():
    model = heisenberg_model(3, t_decay=10.0)
    rho0 = factor_to_dense_rho(product_state("010", model.modes))
    lind = dense_lindbladian(model)
    for t in (0.1, 1.0, 5.0):
        rho = dense_propagate(rho0, lind, t)
        assert np.isclose(np.trace(rho), 1.0, atol=1e-10)
        assert np.allclose(rho, rho.conj().T, atol=1e-10)
        assert np.linalg.eigvalsh(rho).min() >= -1e-10


def test_amplitude_damping_analytic():
    t_decay = 2.0
    model = heisenberg_model(1, t_decay=t_decay)
    rho0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.complex128)  # |up>
    lind = dense_lindbladian(model)
    for t in (0.5, 1.0, 3.0):
        rho = dense_propagate(rho0, lind, t)
        p_up = np.exp(-t / t_decay)
        assert np.allclose(np.diag(rho).real, [p_up, 1.0 - p_up], atol=1e-12)


def test_dense_solution_stitches_intervals():
    model = heisenberg_model(2, t_decay=5.0)
    rho0 = factor_to_dense_rho(product_state("01", model.modes))
    a = dense_solution(rho0, model, 0.7)
    b = dense_propagate(rho0, dense_lindbladian(model), 0.7)
    assert np.allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("tab,order", [(MIDPOINT, 2), (RK4, 4)])
def test_dense_kraus_step_convergence(tab, order):
    model = heisenberg_model(3, t_decay=20.0)
    rho0 = factor_to_dense_rho(product_state("010", model.modes))
    t_final = 0.5
    ref = dense_solution(rho0, model, t_final)
    hs = [0.1, 0.05, 0.025]
    errs = []
    for h in hs:
        rho = rho0
        for _ in range(int(round(t_final / h))):
            rho = dense_kraus_step(rho, model, tab, h)
        errs.append(np.linalg.norm(rho - ref))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - order) < 0.5


def test_dense_kraus_step_cptp():
    model = heisenberg_model(3, t_decay=5.0)
    rho = factor_to_dense_rho(product_state("010", model.modes))
    for _ in range(20):
        rho = dense_kraus_step(rho, model, MIDPOINT, 0.05)
        assert np.isclose(np.trace(rho), 1.0, atol=1e-12)
        assert np.linalg.eigvalsh(rho).min() >= -1e-12
