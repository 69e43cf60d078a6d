import zipfile

import numpy as np
import pytest

from qgaids import store
from qgaids.errors import FormatVersionError
from qgaids.seeding import derive_seed, rng_for


def test_derive_seed_stable_and_distinct():
    assert derive_seed(5, "ssl") == derive_seed(5, "ssl")
    assert len({derive_seed(5, t) for t in ("ssl", "qga", "split")}) == 3
    assert derive_seed(5, "ssl") != derive_seed(6, "ssl")


def test_rng_for_independent_streams():
    a = rng_for(1, 2, 3).random(4)
    assert np.array_equal(a, rng_for(1, 2, 3).random(4))
    assert not np.array_equal(a, rng_for(1, 3, 2).random(4))


def test_artifact_roundtrip_deterministic(tmp_path):
    arrays = {"x": np.arange(6.0).reshape(2, 3), "y": np.array([1, 0])}
    p1 = store.write_artifact(tmp_path / "a.qgz", "thing", {"k": 1}, arrays)
    p2 = store.write_artifact(tmp_path / "b.qgz", "thing", {"k": 1}, arrays)
    assert p1.read_bytes() == p2.read_bytes()
    meta, got = store.read_artifact(p1, "thing")
    assert meta["k"] == 1 and np.array_equal(got["x"], arrays["x"])
    with pytest.raises(FormatVersionError):
        store.read_artifact(p1, "other")


def test_format_version_checked(tmp_path):
    p = store.write_artifact(tmp_path / "a.qgz", "thing", {}, {})
    with zipfile.ZipFile(p) as z:
        members = {n: z.read(n) for n in z.namelist()}
    members["meta.json"] = members["meta.json"].replace(
        f'"format_version":{store.FORMAT_VERSION}'.encode(), b'"format_version":99')
    with zipfile.ZipFile(p, "w") as z:
        for n, data in members.items():
            z.writestr(n, data)
    with pytest.raises(FormatVersionError):
        store.read_artifact(p, "thing")
