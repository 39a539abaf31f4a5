import numpy as np
import pytest

import neuroflap as nf


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    data = root / "data"
    assert nf.gen_data(str(data), minutes=2, log_seconds=60, seed=3) == 2
    net, history = nf.train(str(data), estimator_ff=10, estimator_rec=10, controller_rec=10,
                            epochs=2, window=1000, stride=500)
    return root, data, net, history


def test_loss_helpers():
    assert nf.huber(0.5) == pytest.approx(0.125)
    assert nf.huber(3.0) == pytest.approx(2.5)
    assert nf.surrogate_grad(1.0, 1.0) == 1.0
    assert nf.surrogate_grad(2.0, 1.0) == pytest.approx(1.0 / 3.0)


def test_training_history(toy):
    _, _, _, history = toy
    assert len(history["estimator"]) == 3
    assert len(history["controller"]) == 3
    assert all(np.isfinite(history["estimator"]))


def test_run_matches_step_and_modes_agree(toy):
    _, _, net, _ = toy
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(50, net.imu_size + net.refs_size)).astype(np.float32)
    net.mode = "dense"
    states, controls = net.run(rows)
    assert states.shape == (50, net.state_size)
    assert controls.shape == (50, net.control_size)
    net.reset()
    for t in range(50):
        s, c = net.step(rows[t, :net.imu_size].tolist(), rows[t, net.imu_size:].tolist())
        np.testing.assert_array_equal(s, states[t])
        np.testing.assert_array_equal(c, controls[t])
    net.mode = "event_driven"
    ev_states, ev_controls = net.run(rows)
    np.testing.assert_array_equal(ev_states, states)
    np.testing.assert_array_equal(ev_controls, controls)


def test_save_load_and_macs(toy):
    root, _, net, _ = toy
    path = root / "model.net"
    net.save(str(path))
    loaded = nf.Network.load(str(path))
    assert loaded.hash == net.hash
    rows = np.zeros((20, net.imu_size + net.refs_size), dtype=np.float32)
    m = loaded.count_macs(rows)
    assert m["event_driven"] <= m["dense"]
    assert m["ticks"] == 20
    with pytest.raises(ValueError):
        loaded.run(np.zeros((3, 2), dtype=np.float32))


def test_export_and_evaluate(toy):
    root, data, net, _ = toy
    files = net.emit("dense", "toy")
    assert set(files) == {"toy_model.h", "toy_model.c", "manifest.txt"}
    assert files == net.emit("dense", "toy")
    net.export(str(root / "c"))
    assert (root / "c" / "manifest.txt").exists()
    report = net.evaluate(str(data))
    assert "pitch" in report["estimator"]
    assert 0.0 <= report["mean_spike_rate"] <= 1.0
    expert = nf.evaluate_expert(str(data))
    assert all(rmse == 0.0 for rmse, _ in expert["estimator"].values())
