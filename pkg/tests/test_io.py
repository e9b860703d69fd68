import numpy as np
import pytest

from sympmono.fields import load_configuration, random_configuration, save_configuration
from sympmono.lattice import FieldFormatError, TorusGeometry, read_field, write_field


def test_field_roundtrip_double(tmp_path, rng):
    g = TorusGeometry(2, 6, ((1.0, 2.0), (0.5, 1.0)))
    f = rng.normal(size=g.form_shape(1)) + 1j * rng.normal(size=g.form_shape(1))
    write_field(tmp_path / "f.smf", f, g, 1, (1, -2), double=True, meta={"note": "x"})
    back, g2, side = read_field(tmp_path / "f.smf")
    assert g2 == g
    assert np.array_equal(back, f)
    assert side["form_degree"] == 1 and side["twists"] == [1, -2] and side["meta"] == {"note": "x"}


def test_field_single_precision_and_no_sidecar(tmp_path, rng):
    g = TorusGeometry(1, 8)
    f = rng.normal(size=g.shape).astype(complex)
    p = write_field(tmp_path / "s.smf", f, g)
    (tmp_path / "s.smf.json").unlink()
    back, g2, side = read_field(p)
    assert g2 == g and side["form_degree"] is None
    assert np.allclose(back, f, atol=1e-6)


def test_bad_files(tmp_path):
    (tmp_path / "short.smf").write_bytes(b"SMF")
    with pytest.raises(FieldFormatError):
        read_field(tmp_path / "short.smf")
    g = TorusGeometry(1, 4)
    p = write_field(tmp_path / "a.smf", np.zeros(g.shape), g)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError):
        read_field(p)
    p = write_field(tmp_path / "b.smf", np.zeros(g.shape), g)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(FieldFormatError):
        read_field(p)


def test_configuration_roundtrip(tmp_path, rng):
    g = TorusGeometry(3, 4)
    cfg = random_configuration(g, rng, (1, 0, -1), amplitude=0.5)
    save_configuration(cfg, tmp_path / "c", s=2.0)
    back, manifest = load_configuration(tmp_path / "c")
    assert back.allclose(cfg, atol=0.0)
    assert back.twists == cfg.twists and manifest["s"] == 2.0
    assert manifest["xi_twists"] == [2, 0, -2]
