import numpy as np
import pytest
import scipy.linalg

from ttlindblad.models import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    DeviceParams,
    HamiltonianInterval,
    _schmidt_products,
    dense_hamiltonian,
    draw_heavy_hex_params,
    draw_qudit_resonator_params,
    heavy_hex_model,
    heisenberg_model,
    load_control_table,
    lowering,
    number_op,
    product_state,
    qudit_resonator_model,
    swap_hamiltonian,
    synthetic_control_table,
)


def test_operators():
    a = lowering(3)
    assert np.allclose(a @ np.array([0, 1, 0]), [1, 0, 0])
    assert np.allclose(a @ np.array([0, 0, 1]), [0, np.sqrt(2), 0])
    assert np.allclose(number_op(3), np.diag([0.0, 1.0, 2.0]))
    assert np.allclose(SIGMA_MINUS, np.array([[0, 0], [1, 0]]))
    assert np.allclose(SIGMA_PLUS, SIGMA_MINUS.conj().T)


def test_heisenberg_hamiltonian_is_hermitian_xx():
    model = heisenberg_model(4, t_decay=20.0)
    h = dense_hamiltonian(model)
    assert np.allclose(h, h.conj().T)
    # two excitations conserved: H commutes with total number operator
    from ttlindblad.mpo import kron_embed

    ntot = sum(kron_embed(j, np.diag([1.0, 0.0]), model.modes) for j in range(4))
    assert np.allclose(h @ ntot, ntot @ h, atol=1e-12)
    assert len(model.jumps) == 4


def test_heisenberg_closed_system():
    model = heisenberg_model(3, t_decay=np.inf)
    assert len(model.jumps) == 0


def test_interval_lookup_and_validation():
    model = heisenberg_model(2)
    idx, iv = model.interval_at(100.0)
    assert idx == 0
    with pytest.raises(ValueError):
        HamiltonianInterval(1.0, 1.0)


def test_draw_heavy_hex_params_seeded():
    edges = [(0, 1), (1, 2), (2, 3)]
    a = draw_heavy_hex_params(edges, 4, seed=7)
    b = draw_heavy_hex_params(edges, 4, seed=7)
    assert a == b
    c = draw_heavy_hex_params(edges, 4, seed=8)
    assert a.couplings != c.couplings
    assert all(t > 0 for t in a.t_decay)
    # distribution sanity over many draws
    js = [draw_heavy_hex_params(edges, 4, seed=s).couplings[0][2] for s in range(300)]
    assert abs(np.mean(js) - 2 * np.pi * 2.3e-3) < 3 * (2 * np.pi * 5.4e-3) / np.sqrt(300)


def test_swap_hamiltonian_inverts_to_swap():
    t_gate = 100.0
    for j in (0.0, 0.015):
        h_swap = swap_hamiltonian(j, t_gate)
        a = lowering(2)
        h_jc = j * (np.kron(a, a.conj().T) + np.kron(a.conj().T, a))
        u = scipy.linalg.expm(-1j * t_gate * (h_swap + h_jc))
        u_swap = np.eye(4)[[0, 2, 1, 3]]
        assert np.linalg.norm(u - u_swap) <= 1e-10


def test_schmidt_products_reconstruct():
    g = np.random.Generator(np.random.Philox(1))
    m = g.standard_normal((4, 4)) + 1j * g.standard_normal((4, 4))
    terms = _schmidt_products(0, 1, m)
    total = sum(np.kron(left, right) for _, (left, right) in terms)
    assert np.allclose(total, m, atol=1e-12)


def test_heavy_hex_model_structure():
    edges = [(0, 1), (1, 2)]
    params = draw_heavy_hex_params(edges, 3, seed=1)
    model = heavy_hex_model(3, edges, params, [[(0, 1)], []], t_gate=100.0)
    assert model.flow_method == "taylor"
    assert len(model.intervals) == 2
    for idx in range(2):
        h = dense_hamiltonian(model, idx)
        assert np.allclose(h, h.conj().T, atol=1e-12)
    # decay + dephase jumps per qubit
    assert len(model.jumps) == 6
    # the gate interval realizes a SWAP on the active pair
    idx0, _ = model.interval_at(50.0)
    idx1, _ = model.interval_at(150.0)
    assert (idx0, idx1) == (0, 1)


def test_heavy_hex_overlapping_pairs_rejected():
    edges = [(0, 1), (1, 2)]
    params = draw_heavy_hex_params(edges, 3, seed=1)
    with pytest.raises(ValueError):
        heavy_hex_model(3, edges, params, [[(0, 1), (1, 2)]])


def test_draw_qudit_resonator_params():
    p = draw_qudit_resonator_params(3, seed=0)
    assert len(p.self_kerr) == 5
    # alternating structure: resonators at odd sites have no dephasing
    assert p.t_dephase[1] is None and p.t_dephase[3] is None
    assert p.t_dephase[0] is not None
    # resonator decay near 0.4 us = 400 ns
    assert abs(p.t_decay[1] - 400.0) < 40.0
    # qudit types alternate between the two self-Kerr values
    from ttlindblad.models import QUDIT_RESONATOR_KERR

    assert p.self_kerr[0] == QUDIT_RESONATOR_KERR["xi_1"]
    assert p.self_kerr[2] == QUDIT_RESONATOR_KERR["xi_2"]
    assert p.self_kerr[4] == QUDIT_RESONATOR_KERR["xi_1"]


def test_qudit_resonator_model_structure():
    p = draw_qudit_resonator_params(2, seed=0)
    table = synthetic_control_table(3, 4, 0.01, seed=1)
    model = qudit_resonator_model(2, p, table, n_qudit_levels=4, n_res_levels=10)
    assert model.modes == (4, 10, 4)
    assert len(model.intervals) == 4
    assert model.flow_method == "qudit_resonator"
    h = dense_hamiltonian(model, 0)
    assert np.allclose(h, h.conj().T, atol=1e-12)
    # 2 jumps per qudit + 1 per resonator
    assert len(model.jumps) == 5


def test_control_table_roundtrip(tmp_path):
    path = tmp_path / "controls.csv"
    rows = ["transmon_index,interval_index,re,im", "0,0,0.1,-0.2", "2,1,0.3,0.4"]
    path.write_text("\n".join(rows) + "\n")
    table = load_control_table(path, 3)
    assert table.shape == (2, 3)
    assert table[0, 0] == 0.1 - 0.2j
    assert table[1, 2] == 0.3 + 0.4j
    assert table[0, 1] == 0.0


def test_device_params_validation():
    with pytest.raises(ValueError):
        DeviceParams(t_decay=(0.0,))


def test_product_state():
    v = product_state("012", (2, 3, 4))
    assert v.rank == 1
    from ttlindblad.tt import tt_to_dense

    dense = tt_to_dense(v.columns[0])
    assert dense[0, 1, 2] == 1.0
    with pytest.raises(ValueError):
        product_state("03", (2, 3))
    with pytest.raises(ValueError):
        product_state("0", (2, 3))
