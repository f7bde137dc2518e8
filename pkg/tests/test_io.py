import numpy as np
import pytest

from ttlora.errors import ContractViolation
from ttlora.io import load_dense, load_ttlf, save_dense, save_ttlf
from ttlora.tt_core import TTRanks, TensorizationMap, tt_random_init


@pytest.fixture
def sample():
    tmap = TensorizationMap(6, 4, (2, 3), (2, 2))
    cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, 2),
                           seed=1, scheme="gaussian", sigma=1.0)
    return cores, tmap


def test_ttlf_round_trip_byte_exact(tmp_path, sample):
    cores, tmap = sample
    p1, p2 = tmp_path / "a.ttlf", tmp_path / "b.ttlf"
    save_ttlf(p1, cores, tmap, alpha=2.0, seed=1, scheme="gaussian", layer_label="W_q")
    loaded, tmap2, manifest = load_ttlf(p1)
    save_ttlf(p2, loaded, tmap2, alpha=manifest["alpha"], dtype=manifest["dtype"],
              seed=manifest["seed"], scheme=manifest["scheme"],
              layer_label=manifest["layer_label"])
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmap2.row_modes, tmap2.col_modes) == (tmap.row_modes, tmap.col_modes)
    for a, b in zip(cores.cores, loaded.cores):
        assert np.array_equal(a, b)


def test_ttlf_manifest_fields(tmp_path, sample):
    cores, tmap = sample
    path = tmp_path / "x.ttlf"
    save_ttlf(path, cores, tmap, alpha=0.5, dtype="f32", layer_label="W_v")
    _, _, manifest = load_ttlf(path)
    assert manifest["format_version"] == 1
    assert (manifest["m"], manifest["n"]) == (6, 4)
    assert manifest["dims"] == [2, 3, 2, 2]
    assert manifest["dtype"] == "f32"
    assert manifest["layer_label"] == "W_v"


def test_ttlf_f16_payload_size(tmp_path, sample):
    cores, tmap = sample
    path = tmp_path / "h.ttlf"
    save_ttlf(path, cores, tmap, dtype="f16")
    loaded, _, manifest = load_ttlf(path)
    # half precision round-trips through the archive with f16 quantization
    for a, b in zip(cores.cores, loaded.cores):
        assert np.array_equal(a.astype("<f2").astype(np.float64), b)


def test_ttlf_rejects_unknown_dtype(tmp_path, sample):
    cores, tmap = sample
    with pytest.raises(ContractViolation):
        save_ttlf(tmp_path / "x.ttlf", cores, tmap, dtype="bf16")


def test_dense_round_trip(tmp_path):
    w = np.random.default_rng(0).normal(size=(5, 7))
    save_dense(tmp_path / "w.bin", w)
    assert np.array_equal(load_dense(tmp_path / "w.bin"), w)
    sidecar = (tmp_path / "w.bin.json").read_text()
    assert '"m": 5' in sidecar and '"n": 7' in sidecar


def test_dense_rejects_vector(tmp_path):
    with pytest.raises(ContractViolation):
        save_dense(tmp_path / "v.bin", np.ones(4))
