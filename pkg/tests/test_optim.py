import numpy as np
import pytest

from kgextrap.checkpoint import load_tensors, save_tensors
from kgextrap.errors import DivergenceError
from kgextrap.optim import AdamState, adam_step, clip_global_norm


def test_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    st = AdamState()
    adam_step(p, {"w": np.zeros(2)}, st)
    assert p["w"].tolist() == [1.0, -2.0] and st.step == 1


def test_first_step_magnitude():
    p = {"w": np.array([0.0, 0.0])}
    adam_step(p, {"w": np.array([100.0, -0.5])}, AdamState(lr=1e-3))
    assert p["w"] == pytest.approx([-1e-3, 1e-3], rel=1e-6)


def test_quadratic_descent():
    # f(x) = (x - 3)^2, gradient 2(x - 3)
    x = {"x": np.array([0.0])}
    st = AdamState(lr=0.1)
    f0 = (x["x"][0] - 3) ** 2
    for _ in range(2):
        adam_step(x, {"x": 2 * (x["x"] - 3)}, st)
    assert (x["x"][0] - 3) ** 2 < f0


def test_non_finite_gradient_named():
    with pytest.raises(DivergenceError, match="bank"):
        adam_step({"bank": np.zeros(2)}, {"bank": np.array([np.nan, 0.0])}, AdamState())


def test_sparse_rows_untouched():
    p = {"bank": np.arange(6.0).reshape(3, 2)}
    before = p["bank"].copy()
    st = AdamState(sparse=frozenset({"bank"}))
    g = np.zeros((3, 2))
    g[1] = [0.3, -0.1]
    adam_step(p, {"bank": g}, st)
    assert p["bank"][0].tobytes() == before[0].tobytes()
    assert p["bank"][2].tobytes() == before[2].tobytes()
    assert not np.array_equal(p["bank"][1], before[1])


def test_clip():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(g, 1.0) == 5.0
    assert np.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)


def test_state_roundtrip(tmp_path):
    p = {"w": np.ones(3)}
    st = AdamState(sparse=frozenset({"w"}))
    adam_step(p, {"w": np.array([1.0, 0.0, -1.0])}, st)
    save_tensors(tmp_path / "s.bin", st.to_arrays(), {"adam": st.hyper()})
    arrays, meta = load_tensors(tmp_path / "s.bin")
    st2 = AdamState.from_arrays(meta["adam"], arrays)
    p2 = {"w": p["w"].copy()}
    g = {"w": np.array([0.5, 0.5, 0.5])}
    adam_step(p, g, st)
    adam_step(p2, {"w": g["w"].copy()}, st2)
    assert p["w"].tobytes() == p2["w"].tobytes()


def test_tensor_file_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    t = {"a": rng.normal(size=(4, 5)), "b": np.array([np.pi, -0.0, 1e-300])}
    save_tensors(tmp_path / "t.bin", t, {"x": 1})
    back, meta = load_tensors(tmp_path / "t.bin")
    assert meta["x"] == 1
    for k in t:
        assert back[k].tobytes() == t[k].tobytes() and back[k].shape == t[k].shape
    save_tensors(tmp_path / "t2.bin", t, {"x": 1})
    assert (tmp_path / "t.bin").read_bytes() == (tmp_path / "t2.bin").read_bytes()
