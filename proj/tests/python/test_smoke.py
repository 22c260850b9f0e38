import json

import numpy as np
import pytest

import adjd


@pytest.fixture
def schedule():
    return adjd.NoiseSchedule()


def test_schedule_identities(schedule):
    for t in (1e-3, 0.2, 0.7, 1.0):
        a, s = schedule.alpha_sigma(t)
        assert a * a + s * s == pytest.approx(1.0, abs=1e-12)
        assert schedule.gamma_inv(schedule.gamma(t)) == pytest.approx(t, rel=1e-9)


def test_zero_field_is_an_alpha_rescaling(schedule):
    m = adjd.Denoiser(hidden=[8], seed=1)
    m.set_params(np.zeros(m.num_params))
    x_T = adjd.initial_noise(schedule, 2, 5, seed=3)
    ratio = schedule.alpha_sigma(schedule.t_start)[0] / schedule.alpha_sigma(schedule.t_end)[0]
    # exact in the reparameterized solve; the original clock integrates the drift numerically
    x0, nfe = adjd.sample(m, schedule, x_T, steps=10, solver="rk4", mode="reparam")
    np.testing.assert_allclose(x0, ratio * x_T, rtol=1e-9)
    assert nfe == 40
    x0, _ = adjd.sample(m, schedule, x_T, steps=400, solver="rk4", mode="original")
    np.testing.assert_allclose(x0, ratio * x_T, rtol=1e-6)
    v = np.ones((2, 5))
    g = adjd.adjoint_gradients(m, schedule, x_T, v, steps=10)
    np.testing.assert_allclose(g["x_T"], ratio * v, rtol=1e-8)


def test_adjoint_matches_finite_differences(schedule):
    m = adjd.Denoiser(hidden=[16, 16], seed=4)
    x_T = adjd.initial_noise(schedule, 2, 1, seed=9)
    v = np.array([[0.7], [-1.2]])
    g = adjd.adjoint_gradients(m, schedule, x_T, v, label=2, steps=100)
    h = 1e-5
    for i in range(2):
        xp, xm = x_T.copy(), x_T.copy()
        xp[i, 0] += h
        xm[i, 0] -= h
        fp = float(np.sum(v * adjd.sample(m, schedule, xp, label=2, steps=100)[0]))
        fm = float(np.sum(v * adjd.sample(m, schedule, xm, label=2, steps=100)[0]))
        assert g["x_T"][i, 0] == pytest.approx((fp - fm) / (2 * h), rel=1e-4)
    assert g["theta"].shape == (m.num_params,)


def test_config_round_trip_and_errors():
    text = adjd.normalize_config('{"seed": 5, "solver": {"kind": "heun"}}')
    assert adjd.normalize_config(text) == text
    assert json.loads(text)["solver"]["kind"] == "heun"
    assert adjd.default_config()["task"]["steps"] == 31
    with pytest.raises(adjd.AdjdError, match="solver.knd"):
        adjd.normalize_config('{"solver": {"knd": "rk4"}}')
    with pytest.raises(adjd.AdjdError):
        adjd.normalize_config('{"seed": 1,, }')


def test_run_writes_the_output_tree(tmp_path):
    cfg = json.dumps({"data": {"n_train": 512, "n_holdout": 128},
                      "model": {"train": {"steps": 50}},
                      "task": {"sample": {"count": 16}}})
    assert "sample" in adjd.commands()
    report = adjd.run("sample", cfg, str(tmp_path / "a"), seed=2)
    adjd.run("sample", cfg, str(tmp_path / "b"), seed=2)
    for name in ("config.json", "metrics.csv", "report.json", "checkpoints", "samples"):
        assert (tmp_path / "a" / name).exists()
    assert report["seed"] == 2
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_checkpoint_round_trip(tmp_path, schedule):
    m = adjd.Denoiser(hidden=[8, 8], seed=6)
    path = str(tmp_path / "m.ckpt")
    m.save(path, schedule)
    back = adjd.Denoiser.load(path)
    np.testing.assert_array_equal(back.params(), m.params())
    with pytest.raises(adjd.AdjdError):
        adjd.Denoiser.load(str(tmp_path / "missing.ckpt"))
