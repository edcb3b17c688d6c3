import numpy as np
import pytest
from hypothesis import given, strategies as st

from meshqoe.dataset import (
    ALLOCATABLE_LODS, FRACTIONS_REMOVED, LOD_LEVELS, DISTANCE_POOL, Dataset, DatasetParseError,
    MeshDescriptor, StimulusRecord, ValidationError, builtin_lod_table, builtin_meshes_with_synthetic_si,
    generate_synthetic, load_dataset, lod, save_dataset,
)

HEADER = "mesh_id,lod_index,fraction_removed,faces,distance_m,si_geo,si_col,mos\n"


def _table():
    return {m.id: m for m in builtin_lod_table()}


def test_lod_fractions():
    assert [lv.fraction_removed for lv in LOD_LEVELS] == [0, 0.20, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95]
    assert list(LOD_LEVELS) == sorted(LOD_LEVELS, key=lambda lv: lv.fraction_removed)
    assert len(ALLOCATABLE_LODS) == 8 and ALLOCATABLE_LODS[0].index == 1


@pytest.mark.parametrize("mesh,level,faces", [
    ("M1", 3, 2030),
    ("M8", 0, 221874),
    ("M5", 8, 11360),
    ("M4", 0, 6832),
])
def test_builtin_table_values(mesh, level, faces):
    assert _table()[mesh].faces(level) == faces


def test_builtin_table_shape():
    meshes = builtin_lod_table()
    assert [m.id for m in meshes] == [f"M{i}" for i in range(1, 9)]
    for m in meshes:
        counts = [m.faces(lv) for lv in LOD_LEVELS]
        assert all(a > b for a, b in zip(counts, counts[1:]))
        assert not m.has_si
    assert sum(m.faces(8) for m in meshes) == 33111


def test_descriptor_rejects_non_decreasing_counts():
    counts = dict(zip(LOD_LEVELS, [10, 9, 8, 8, 6, 5, 4, 3, 2]))
    with pytest.raises(ValidationError):
        MeshDescriptor("bad", counts)


def test_unknown_lod():
    with pytest.raises(ValidationError):
        lod(9)


def _write(tmp_path, body):
    p = tmp_path / "d.csv"
    p.write_text(HEADER + body, encoding="utf-8")
    return p


def test_load_three_rows(tmp_path):
    p = _write(tmp_path, "M1,1,0.2,3250,4,10,20,4.5\nM1,2,0.4,2436,4,10,20,4.1\nM1,3,0.5,2030,8,10,20,3.9\n")
    ds = load_dataset(p)
    assert len(ds) == 3
    assert [r.lod.index for r in ds.records] == [1, 2, 3]
    assert ds.provenance == "ingested"


def test_load_header_only(tmp_path):
    assert len(load_dataset(_write(tmp_path, ""))) == 0


def test_mos_out_of_range(tmp_path):
    with pytest.raises(ValidationError, match="line 2"):
        load_dataset(_write(tmp_path, "M1,1,0.2,3250,4,10,20,6.0\n"))


def test_malformed_row_names_line(tmp_path):
    with pytest.raises(DatasetParseError) as exc:
        load_dataset(_write(tmp_path, "M1,1,0.2,3250,4,10,20,4.0\nM1,2,0.4,abc,4,10,20,4.0\n"))
    assert exc.value.line == 3


def test_duplicate_key(tmp_path):
    with pytest.raises(ValidationError, match="duplicate"):
        load_dataset(_write(tmp_path, "M1,1,0.2,3250,4,10,20,4.0\nM1,1,0.2,3250,4,10,20,3.0\n"))


def test_extra_column_rejected(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(HEADER.strip() + ",extra\nM1,1,0.2,3250,4,10,20,4.0,1\n", encoding="utf-8")
    with pytest.raises(DatasetParseError):
        load_dataset(p)


def test_fraction_mismatch(tmp_path):
    with pytest.raises(DatasetParseError):
        load_dataset(_write(tmp_path, "M1,1,0.3,3250,4,10,20,4.0\n"))


six_dec = st.integers(0, 10**8).map(lambda k: k / 10**6)


@st.composite
def datasets(draw):
    n = draw(st.integers(0, 12))
    keys = draw(st.lists(st.tuples(st.sampled_from(["A", "B", "M3"]), st.integers(0, 8),
                                   st.integers(1, 40_000_000).map(lambda k: k / 10**6)),
                         min_size=n, max_size=n, unique=True))
    recs = [
        StimulusRecord(mid, lod(li), draw(st.integers(1, 10**6)), d, draw(six_dec), draw(six_dec),
                       draw(st.integers(10**6, 5 * 10**6).map(lambda k: k / 10**6)))
        for mid, li, d in keys
    ]
    return Dataset(tuple(recs), "ingested")


@given(datasets())
def test_csv_round_trip(tmp_path_factory, ds):
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    save_dataset(ds, p)
    assert load_dataset(p) == ds


def test_synthetic_shape_and_determinism():
    a = generate_synthetic(builtin_meshes_with_synthetic_si(), DISTANCE_POOL, seed=3, noise_sigma=0.2)
    b = generate_synthetic(builtin_meshes_with_synthetic_si(), DISTANCE_POOL, seed=3, noise_sigma=0.2)
    assert len(a) == 320 and a == b and a.provenance == "synthetic"
    c = generate_synthetic(builtin_meshes_with_synthetic_si(), DISTANCE_POOL, seed=4, noise_sigma=0.2)
    assert a != c


def test_synthetic_requires_si():
    with pytest.raises(ValidationError):
        generate_synthetic(builtin_lod_table(), DISTANCE_POOL, 0, 0.0)


def _mos_lookup(ds):
    return {(r.mesh_id, r.lod.index, r.distance_m): r.mos for r in ds.records}


def test_noise_free_monotone_in_lod_and_distance():
    ds = generate_synthetic(builtin_meshes_with_synthetic_si(), DISTANCE_POOL, 0, 0.0)
    mos = _mos_lookup(ds)
    for m in builtin_lod_table():
        for d in DISTANCE_POOL:
            assert mos[(m.id, 1, d)] >= mos[(m.id, 8, d)]
            for a, b in zip(range(1, 8), range(2, 9)):
                assert mos[(m.id, a, d)] >= mos[(m.id, b, d)]
        for li in range(1, 9):
            assert mos[(m.id, li, 20.0)] >= mos[(m.id, li, 4.0)]


def test_noise_free_calibration():
    """LoD1-3 stay above 3.5 everywhere; LoD8 at 4 m sits well below."""
    mos = _mos_lookup(generate_synthetic(builtin_meshes_with_synthetic_si(), DISTANCE_POOL, 0, 0.0))
    for m in builtin_lod_table():
        assert all(mos[(m.id, li, d)] > 3.5 for li in (1, 2, 3) for d in DISTANCE_POOL)
        assert mos[(m.id, 8, 4.0)] < 3.2


@given(st.floats(0, 50), st.integers(0, 2**32 - 1))
def test_synthetic_always_in_range(sigma, seed):
    ds = generate_synthetic(builtin_meshes_with_synthetic_si()[:2], (4.0, 20.0), seed, sigma)
    _, y = ds.arrays()
    assert np.all((y >= 1) & (y <= 5))
