import numpy as np
import pytest

from conftest import crandn
from relaydof.eqspace import CoeffVec, Equation, MessageId
from relaydof.errors import CsitAccessError
from relaydof.network import (
    ChannelAccessor,
    ChannelRealization,
    CsiQuery,
    CsitLedger,
    FeedbackMode,
    NetworkConfig,
    NodeState,
    check_formable,
    csit_visible,
    draw_channels,
    draw_messages,
    propagate_equation_slot,
    propagate_slot,
)
from relaydof.schemes import OneHopSimulation
from relaydof.schemes.common import Label

G, O = FeedbackMode.GLOBAL_RANGE, FeedbackMode.ONE_HOP_RANGE


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(1, 3)
    with pytest.raises(ValueError):
        NetworkConfig(3, 1)
    with pytest.raises(ValueError):
        NetworkConfig(3, 3, power=0)
    assert NetworkConfig(2, 2).hops == 1


def test_draw_channels_deterministic():
    cfg = NetworkConfig(4, 3)
    a, b = draw_channels(cfg, 11, 5), draw_channels(cfg, 11, 5)
    for key in a.matrices:
        np.testing.assert_array_equal(a.matrices[key], b.matrices[key])
    assert len(a.matrices) == 5 * 3


def test_draw_channels_seed_sensitive():
    cfg = NetworkConfig(3, 3)
    a, b = draw_channels(cfg, 5, 2), draw_channels(cfg, 6, 2)
    assert any(not np.array_equal(a.matrices[k], b.matrices[k]) for k in a.matrices)


def test_lazy_draw_matches_predrawn():
    cfg = NetworkConfig(3, 2)
    lazy = ChannelRealization(cfg, 9)
    pre = draw_channels(cfg, 9, 4)
    np.testing.assert_array_equal(lazy.matrix(2, 3), pre.matrix(2, 3))


def test_channel_matrices_read_only():
    H = ChannelRealization(NetworkConfig(3, 2), 0).matrix(1, 1)
    with pytest.raises(ValueError):
        H[0, 0] = 0


def test_channel_bounds():
    ch = ChannelRealization(NetworkConfig(3, 2), 0)
    with pytest.raises(IndexError):
        ch.matrix(3, 1)
    with pytest.raises(IndexError):
        ch.matrix(1, 0)


def test_channel_moments():
    cfg = NetworkConfig(3, 10)
    ch = draw_channels(cfg, 3, 50)
    entries = np.concatenate([m.ravel() for m in ch.matrices.values()])
    assert entries.size == 10_000
    assert abs(np.mean(np.abs(entries) ** 2) - 1.0) < 0.05
    assert abs(np.mean(entries)) < 0.05
    # circular symmetry: real and imaginary parts carry equal power
    assert abs(np.mean(entries.real ** 2) - np.mean(entries.imag ** 2)) < 0.05


def test_propagate_zero_input():
    y = propagate_slot({1: np.zeros(3), 2: np.zeros(3)}, {1: np.eye(3), 2: np.ones((3, 3))})
    assert all(not v.any() for v in y.values())


def test_propagate_identity():
    y = propagate_slot({1: np.array([1, 2j, 0])}, {1: np.eye(3)})
    np.testing.assert_array_equal(y[2], [1, 2j, 0])


def test_propagate_matches_dense_oracle(rng):
    H, x = crandn(rng, 3, 3), crandn(rng, 3)
    y = propagate_slot({1: x}, {1: H})[2]
    oracle = [sum(H[k, i] * x[i] for i in range(3)) for k in range(3)]
    np.testing.assert_allclose(y, oracle, atol=1e-12)


def test_propagate_noise_uses_given_vector():
    z = np.array([0.1, -0.2j])
    y = propagate_slot({1: np.zeros(2)}, {1: np.eye(2)}, True, {2: z})
    np.testing.assert_array_equal(y[2], z)


def test_equation_propagation_unit_vector(rng):
    m = MessageId(1, 1, 1)
    H = crandn(rng, 3, 3)
    rx = propagate_equation_slot({1: [Equation.message(m, 2.0), None, None]}, {1: H})[2]
    for k in range(3):
        assert rx[k].coeffs.approx_eq(CoeffVec.unit(m, H[k, 0]), 1e-15)
        assert abs(rx[k].value - 2.0 * H[k, 0]) < 1e-14


def test_first_slot_relays_hold_rows_of_h1():
    # slot 1: relay 2_k holds row k of H[1](1) over (mu1, nu1, omega1)
    sim = OneHopSimulation(NetworkConfig(3, 3), 1, seed=4)
    sim.step(1)
    H = sim.channels.matrix(1, 1)
    ids = [MessageId(1, 1, s) for s in (1, 2, 3)]
    for k in (1, 2, 3):
        got = sim.node(2, k).labels[Label(2, 1, k)]
        assert got.coeffs.approx_eq(CoeffVec(dict(zip(ids, H[k - 1]))), 1e-15)


def test_equation_propagation_checks_truth(rng):
    m = MessageId(1, 1, 1)
    truth = {m: 1.0 + 0j}
    good = propagate_equation_slot({1: [Equation.message(m, 1.0)]}, {1: np.eye(1)}, truth)
    assert good[2][0].residual(truth) == 0
    with pytest.raises(ValueError):
        propagate_equation_slot({1: [Equation.message(m, 2.0)]}, {1: np.eye(1)}, truth)


def test_symbolic_and_numeric_agree(rng):
    cfg = NetworkConfig(3, 3)
    ids = [MessageId(1, d, s) for d in (1, 2, 3) for s in (1, 2, 3)]
    truth = draw_messages(cfg, ids, 1)
    plans = []
    for r in crandn(rng, 3, 9):
        c = CoeffVec(dict(zip(ids, r)))
        plans.append(Equation(c, c.dot(truth)))
    H = crandn(rng, 3, 3)
    sym = propagate_equation_slot({1: plans}, {1: H}, truth)[2]
    num = propagate_slot({1: np.array([e.value for e in plans])}, {1: H})[2]
    for eq, v in zip(sym, num):
        assert abs(eq.value - v) < 1e-10
        assert abs(eq.coeffs.dot(truth) - v) < 1e-10


@pytest.mark.parametrize("mode, layer, hop, slot, now, expected", [
    (O, 1, 2, 3, 5, False),   # one-hop: the source never sees hop 2
    (O, 2, 2, 4, 5, True),    # one-hop: transmit side, delayed
    (O, 2, 2, 5, 5, False),   # ... but not in the current slot
    (G, 1, 4, 4, 5, True),    # global: source sees the last hop one slot late
    (G, 1, 4, 5, 5, False),
    (G, 2, 2, 4, 5, False),   # global mode gives relays no transmit-side CSI
    (G, 3, 2, 5, 5, True),    # receivers know their incoming channel now
    (O, 3, 2, 5, 5, True),
    (O, 4, 2, 5, 5, False),   # further downstream: delayed
    (O, 4, 2, 4, 5, True),
])
def test_csit_visibility(mode, layer, hop, slot, now, expected):
    assert csit_visible(CsitLedger(mode, now), layer, hop, slot) is expected


def test_accessor_logs_and_rejects():
    cfg = NetworkConfig(4, 2)
    acc = ChannelAccessor(ChannelRealization(cfg, 0), CsitLedger(O, 3))
    with acc.recording() as rec:
        acc.matrix(2, 2, 1)
    assert rec == [CsiQuery(2, 2, 1, 3)] and acc.log == rec
    with pytest.raises(CsitAccessError) as info:
        acc.matrix(1, 3, 1)
    assert info.value.kind == "csit-access" and info.value.hop == 3


def test_check_formable_fresh_message():
    src = NodeState(1, 0)
    m = MessageId(1, 1, 1)
    src.learn(Equation.message(m, 1.0))
    assert check_formable(src, CoeffVec.unit(m), CsitLedger(O, 1))


def _run_to(slot, seed=3):
    sim = OneHopSimulation(NetworkConfig(3, 3), 1, seed)
    for t in range(1, slot + 1):
        sim.step(t)
    return sim


def test_relay_can_form_its_recovered_equation():
    sim = _run_to(6)
    sim.ledger.current_slot = 7
    node = sim.node(2, 1)
    with sim.csi.recording() as used:
        eq = sim._reconstruct(node, Label(3, 1, 2))
    assert check_formable(node, eq.coeffs, sim.ledger, csi_used=used)


def test_relay_cannot_form_others_equation():
    sim = _run_to(6)
    L5 = sim.node(2, 2).labels[Label(2, 1, 5)]
    assert not check_formable(sim.node(2, 1), L5.coeffs, sim.ledger)


def test_check_formable_rejects_foreign_or_future_csi():
    node = NodeState(2, 1)
    ledger = CsitLedger(O, 5)
    assert not check_formable(node, CoeffVec(), ledger, csi_used=[CsiQuery(1, 2, 4, 5)])
    assert not check_formable(node, CoeffVec(), ledger, csi_used=[CsiQuery(2, 2, 5, 5)])
    assert check_formable(node, CoeffVec(), ledger, csi_used=[CsiQuery(2, 2, 4, 5)])
