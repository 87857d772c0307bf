import math

import numpy as np
import pytest

import sympflow as sf


def test_systems():
    assert set(sf.registered_systems()) >= {"harmonic", "henon-heiles"}
    h = sf.System("harmonic")
    assert h.dim == 1
    assert h.energy(np.array([1.0, 0.0])) == pytest.approx(0.5)
    np.testing.assert_allclose(h.vector_field(np.array([1.0, 0.0])), [0.0, -1.0])
    with pytest.raises(ValueError):
        sf.System("pendulum")


def test_flow_map_properties():
    f = sf.SympFlow.random(dim=2, pairs=2, widths=[8, 8], seed=3)
    x = np.array([0.1, -0.2, 0.3, 0.05])
    assert np.array_equal(f(0.0, x), x)
    y = f(0.7, x)
    np.testing.assert_allclose(f.inverse(0.7, y), x, atol=1e-12)
    assert sf.symplecticity_defect(f.jacobian(0.7, x)) <= 1e-10
    assert f(0.7, x).shape == (4,)
    with pytest.raises(ValueError):
        f(0.5, np.array([1.0, 2.0, 3.0]))


def test_sign_fault_breaks_symplecticity():
    f = sf.SympFlow.random(dim=1, pairs=1, widths=[4], seed=1)
    f.inject_sign_fault(0)
    assert sf.symplecticity_defect(f.jacobian(0.5, np.array([0.3, 0.2]))) > 0.5


def test_short_training_and_rollout(tmp_path):
    cfg = sf.TrainingConfig()
    cfg.epochs = 3
    cfg.n_collocation = 32
    cfg.n_matching = 32
    cfg.batch_size = 16
    f0 = sf.SympFlow.random(dim=1, pairs=1, widths=[4], seed=0)
    f, history = sf.train(f0, sf.System("harmonic"), cfg)
    assert history.shape == (3, 3)
    assert np.all(np.isfinite(history))
    traj = f.rollout(t_final=5.0, x0=np.array([1.0, 0.0]), samples=6)
    assert traj.shape == (6, 3)
    np.testing.assert_allclose(traj[:, 0], np.linspace(0.0, 5.0, 6))

    path = tmp_path / "model.json"
    sf.save_checkpoint(path, f, "harmonic")
    back = sf.load_checkpoint(path)
    assert np.array_equal(back.parameters(), f.parameters())

    net, _ = sf.train(sf.Baseline.random(dim=1, widths=[4]), sf.System("harmonic"), cfg)
    assert net(0.5, np.array([1.0, 0.0])).shape == (2,)


def test_integrators():
    h = sf.System("harmonic")
    r = sf.rk45(h, np.array([1.0, 0.0]), 2 * math.pi, rtol=1e-8, atol=1e-10)
    assert r[-1, 0] == pytest.approx(2 * math.pi)
    np.testing.assert_allclose(r[-1, 1:], [1.0, 0.0], atol=1e-6)
    v = sf.stormer_verlet(h, np.array([1.0, 0.0]), 0.1, 100)
    assert v.shape == (101, 3)
    energy = 0.5 * (v[:, 1] ** 2 + v[:, 2] ** 2)
    assert np.max(np.abs(energy - 0.5)) <= 0.01


def test_check_report():
    ok, text = sf.check(0)
    assert ok
    assert "PASS  symplecticity" in text
    bad, text = sf.check(0, inject_fault=True)
    assert not bad
