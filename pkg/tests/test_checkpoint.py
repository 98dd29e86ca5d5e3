import numpy as np
import pytest

from kgchains.chains import Instance
from kgchains.checkpoint import load_checkpoint, save_checkpoint
from kgchains.errors import DataError
from kgchains.game import build_model, predict


def probes(d_input, n=100, seed=0):
    rng = np.random.default_rng(seed)
    return [
        Instance(head=i, tail=i, label=int(rng.integers(2)),
                 availability=(rng.random(d_input) < 0.5).astype(float))
        for i in range(n)
    ]


def test_round_trip_bit_identical_predictions(tmp_path):
    model = build_model(9, 3, 1.0, "mlp", seed=7)
    path = tmp_path / "ck.txt"
    save_checkpoint(str(path), model, {"relation": "demo"})
    loaded, meta = load_checkpoint(str(path))
    assert meta["relation"] == "demo"
    assert loaded.d == 3
    for inst in probes(9):
        assert predict(loaded, inst) == predict(model, inst)


def test_round_trip_linear_and_d_all(tmp_path):
    for arch, mode in (("linear", "game"), ("mlp", "d_all")):
        model = build_model(6, 2, 0.5, arch, seed=1, mode=mode)
        path = tmp_path / f"ck_{arch}_{mode}.txt"
        save_checkpoint(str(path), model)
        loaded, _ = load_checkpoint(str(path))
        assert loaded.mode == mode
        assert (loaded.generator is None) == (model.generator is None)
        for inst in probes(6, n=20):
            assert predict(loaded, inst) == predict(model, inst)


def test_save_is_deterministic(tmp_path):
    model = build_model(5, 2, 1.0, "mlp", seed=3)
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    save_checkpoint(str(a), model, {"x": 1})
    save_checkpoint(str(b), model, {"x": 1})
    assert a.read_bytes() == b.read_bytes()


def test_tampered_input_dim_rejected(tmp_path):
    model = build_model(5, 2, 1.0, "mlp", seed=3)
    path = tmp_path / "ck.txt"
    save_checkpoint(str(path), model)
    text = path.read_text().replace("input_dim = 5", "input_dim = 7")
    path.write_text(text)
    with pytest.raises(DataError, match="input_dim"):
        load_checkpoint(str(path))


def test_missing_file_and_bad_header(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_checkpoint(str(tmp_path / "nope.txt"))
    bad = tmp_path / "bad.txt"
    bad.write_text("something else\n")
    with pytest.raises(DataError, match="not a kgchains checkpoint"):
        load_checkpoint(str(bad))
