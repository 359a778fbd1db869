import numpy as np
import pytest

import mtscale


def small_net(kind):
    cfg = mtscale.NetworkConfig()
    cfg.n_io, cfg.n_cf, cfg.n_cs = 2, 10, 3
    cfg.tau_f, cfg.tau_s = 2.0, 5.0
    cfg.cell_kind = kind
    cfg.seed = 5
    return mtscale.build_network(cfg)


def test_case1_data():
    data = mtscale.gen_case1()
    assert data.ids() == ["X1", "X2"]
    x2 = data["X2"]
    assert x2.shape == (100, 2)
    assert x2[50, 0] == 0.0
    assert x2[50, 1] == pytest.approx(1.0, abs=1e-12)
    assert list(mtscale.encode_command("lift", "ball")) == pytest.approx([0.8, 0.2])


@pytest.mark.parametrize("kind", [mtscale.CellKind.MTRNN, mtscale.CellKind.MTGRU])
def test_rollout_and_gradients(kind):
    net = small_net(kind)
    seq = mtscale.gen_case1()["X1"][:20]
    r = mtscale.run_sequence(net, seq, 0.9)
    assert r["predictions"].shape == (20, 2)
    assert r["cf_activity"].shape == (20, 10)
    assert r["cs_activity"].shape == (20, 3)
    loss, grads = mtscale.gradients(net, seq, 0.9)
    assert loss == mtscale.sequence_loss(net, seq, 0.9)
    assert set(grads) == set(net.blocks())
    worst = max(mtscale.grad_check(net, seq, alpha=0.9).values())
    assert worst < 1e-5


def test_sgd_lowers_loss():
    net = small_net(mtscale.CellKind.MTRNN)
    seq = mtscale.gen_case1()["X2"][:20]
    cfg = mtscale.TrainConfig()
    cfg.eta, cfg.alpha = 1e-3, 0.0
    first = mtscale.sgd_iteration(net, seq, cfg)
    for _ in range(20):
        mtscale.sgd_iteration(net, seq, cfg)
    assert mtscale.sequence_loss(net, seq, 0.0) < first


def test_checkpoint_round_trip(tmp_path):
    net = small_net(mtscale.CellKind.MTGRU)
    path = tmp_path / "net.bin"
    mtscale.save_checkpoint(net, path)
    back = mtscale.load_checkpoint(path)
    assert back.config == net.config
    for name, w in net.blocks().items():
        np.testing.assert_array_equal(w, back.blocks()[name])


def test_set_block_checks_shape():
    net = small_net(mtscale.CellKind.MTRNN)
    with pytest.raises(ValueError, match="readout"):
        net.set_block("readout", np.zeros((3, 3)))
    net.set_block("readout", np.zeros((2, 10)))
    seq = mtscale.gen_case1()["X1"][:5]
    assert not mtscale.run_sequence(net, seq, 0.0)["predictions"].any()


def test_pca_fixture():
    d = np.array([[6**0.5, 0], [-(6**0.5), 0], [0, 1.5**0.5], [0, -(1.5**0.5)]])
    _, var, comps = mtscale.pca_2d(d)
    assert var == pytest.approx([4.0, 1.0], abs=1e-9)
    np.testing.assert_allclose(comps.T @ comps, np.eye(2), atol=1e-9)


def test_multimodal_and_set_io(tmp_path):
    spec = mtscale.MultimodalSpec()
    spec.n_sequences = 3
    data = mtscale.gen_multimodal(spec)
    assert len(data) == 3 and data.dims == 43
    mtscale.save_set(data, tmp_path / "set")
    back = mtscale.load_set(tmp_path / "set")
    for i in data.ids():
        np.testing.assert_array_equal(data[i], back[i])


def test_contract_errors_surface_as_value_error():
    with pytest.raises(ValueError):
        mtscale.encode_command("fly", "ball")
