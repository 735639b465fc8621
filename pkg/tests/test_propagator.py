import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhhg.fock_basis import ModeSet, enumerate_sector
from qhhg.hamiltonian import explicit_couplings, interaction_matrix, plateau_couplings
from qhhg.propagator import PropagatorConfig, StreamingEvolution, evolve_full, evolve_sector, initial_state


def rabi_sector(chi):
    basis = enumerate_sector(ModeSet((2,)), 2)
    H = interaction_matrix(basis, explicit_couplings({2: chi}))
    v0 = np.zeros(2, dtype=complex)
    v0[basis.index((2, 0))] = 1.0
    return basis, H, v0


@given(st.floats(1e-3, 2.0), st.floats(0.0, 30.0))
@settings(max_examples=60, deadline=None)
def test_rabi_closed_form(chi, tau):
    # two-level sector |2;0>, |0;1> coupled by chi * sqrt(2)
    basis, H, v0 = rabi_sector(chi)
    for method in ("krylov", "eigen"):
        (v,) = evolve_sector(H, v0, [tau], PropagatorConfig(method=method))
        assert abs(abs(v[basis.index((0, 1))]) ** 2 - math.sin(math.sqrt(2) * chi * tau) ** 2) < 1e-10


def test_rabi_amplitude_phase():
    chi = 0.3
    basis, H, v0 = rabi_sector(chi)
    taus = np.linspace(0, 5, 11)
    for tau, v in zip(taus, evolve_sector(H, v0, taus)):
        w = math.sqrt(2) * chi * tau
        assert abs(v[basis.index((2, 0))] - math.cos(w)) < 1e-12
        assert abs(v[basis.index((0, 1))] + 1j * math.sin(w)) < 1e-12


def big_sector():
    modes = ModeSet((3, 5))
    basis = enumerate_sector(modes, 120)
    H = interaction_matrix(basis, plateau_couplings(0.5, math.sqrt(100), modes))
    v0 = np.zeros(basis.dimension, dtype=complex)
    v0[0] = 1.0
    return H, v0


def test_krylov_matches_eigen():
    H, v0 = big_sector()
    taus = np.linspace(0, 20, 41)
    a = evolve_sector(H, v0, taus, PropagatorConfig(method="krylov"))
    b = evolve_sector(H, v0, taus, PropagatorConfig(method="eigen"))
    assert max(np.max(np.abs(x - y)) for x, y in zip(a, b)) < 1e-8


def test_time_reversal_and_norm():
    H, v0 = big_sector()
    (v,) = evolve_sector(H, v0, [7.5])
    (back,) = evolve_sector(H, v, [-7.5])
    assert np.max(np.abs(back - v0)) < 1e-8
    assert abs(np.linalg.norm(v) - 1) < 1e-12


def test_negative_times_are_conjugate():
    # H real symmetric, v0 real: psi(-t) = conj(psi(t))
    H, v0 = big_sector()
    a, b = evolve_sector(H, v0, [-3.0, 3.0])
    assert np.max(np.abs(a - b.conj())) < 1e-9


def test_max_step_is_respected():
    H, v0 = big_sector()
    cfg = PropagatorConfig(max_step=0.05)
    from qhhg.propagator import _evolve_sector

    _, stats = _evolve_sector(H, v0, np.array([0.0, 1.0]), cfg)
    assert stats.steps >= 20


@pytest.mark.parametrize(
    "kwargs",
    [{"method": "rk4"}, {"krylov_dim": 1}, {"step_tol": 0.0}, {"max_step": -1.0}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        PropagatorConfig(**kwargs)


def test_zero_coupling_is_free_evolution():
    a0 = math.sqrt(20) * complex(math.cos(0.4), math.sin(0.4))
    modes = ModeSet((3,))
    res = evolve_full(a0, modes, explicit_couplings({3: 0.0}), [0.0, 1.3])
    init = initial_state(a0, modes)
    for M, (basis, v) in res.states[1].sectors.items():
        np.testing.assert_allclose(v, init.sectors[M][1] * np.exp(-1j * 1.3 * M), atol=1e-15)


def test_threads_do_not_change_results():
    a0 = math.sqrt(50)
    modes = ModeSet((3, 5))
    c = plateau_couplings(0.2, a0, modes)
    taus = np.linspace(0, 5, 6)
    one = evolve_full(a0, modes, c, taus, threads=1)
    many = evolve_full(a0, modes, c, taus, threads=3)
    for s, t in zip(one.states, many.states):
        assert list(s.sectors) == list(t.sectors)
        for M in s.sectors:
            np.testing.assert_array_equal(s.sectors[M][1], t.sectors[M][1])


def test_evolve_full_bookkeeping():
    a0 = math.sqrt(30)
    modes = ModeSet((2, 3))
    c = plateau_couplings(0.3, a0, modes)
    seen = []
    res = evolve_full(a0, modes, c, [0.0, 2.0], matrix_hook=lambda M, H: seen.append(M))
    assert sorted(seen) == sorted(res.dimensions)
    assert len(res) == 2 and res[1].tau == 2.0
    retained = sum(abs(w) ** 2 for w in res.weights.values())
    for s in res:
        assert abs(s.norm_squared() - retained) < 1e-12
    with pytest.raises(ValueError):
        evolve_full(a0, modes, c, [2.0, 1.0])


def test_streaming_blocks_match_single_block():
    a0 = math.sqrt(40)
    modes = ModeSet((3, 5))
    c = plateau_couplings(0.4, a0, modes)
    taus = np.linspace(-2, 6, 17)
    full = evolve_full(a0, modes, c, taus)
    total = sum(full.dimensions.values())
    stream = StreamingEvolution(a0, modes, c, taus, max_bytes=3 * 16 * total)
    assert stream.block == 3
    states = list(stream)
    assert [s.tau for s in states] == list(taus)
    for s, t in zip(states, full.states):
        for M in s.sectors:
            np.testing.assert_allclose(s.sectors[M][1], t.sectors[M][1], atol=1e-9)
    assert stream.stats.steps > full.stats.steps
