import numpy as np
import pytest

from tvlora import io
from tvlora.admm import AdmmConfig, admm_iterate, init_state, reconstruct
from tvlora.exceptions import FormatError
from tvlora.geometry import ProjectionOperator, forward_project
from tvlora.phantoms import gen_phantom
from tvlora.priors import GaussianAnalyticPrior, GridScorePrior


def test_sinogram_roundtrip_f64(tmp_path, rng):
    op = ProjectionOperator.for_views(16, 5)
    sino = forward_project(op, rng.random((16, 16)))
    io.write_sinogram(tmp_path / "a.sino", sino, (16, 16), dtype="f64le")
    back, shape = io.read_sinogram(tmp_path / "a.sino")
    assert shape == (16, 16)
    assert back.angles.tobytes() == sino.angles.tobytes()
    assert back.data.tobytes() == sino.data.tobytes()


def test_sinogram_f32_layout(tmp_path):
    op = ProjectionOperator.for_views(64, 8)
    sino = forward_project(op, gen_phantom("uniform-disk", 64))
    path = tmp_path / "s.sino"
    io.write_sinogram(path, sino, (64, 64))
    raw = path.read_bytes()
    header, _, payload = raw.partition(b"end\n")
    lines = header.decode("ascii").splitlines()
    assert lines[0] == "TVLORA-SINO 1"
    assert "n_view 8" in lines and "n_det 91" in lines and "dtype f32le" in lines
    assert len(payload) == 8 * 91 * 4
    np.testing.assert_array_equal(np.frombuffer(payload, "<f4").reshape(8, 91), sino.data.astype("<f4"))


def test_image_roundtrip(tmp_path, rng):
    vol = rng.random((3, 5, 7))
    io.write_image(tmp_path / "v.img", vol, dtype="f64le")
    assert io.read_image(tmp_path / "v.img").tobytes() == vol.tobytes()
    io.write_image(tmp_path / "i.img", vol[0])
    back = io.read_image(tmp_path / "i.img")
    assert back.shape == (1, 5, 7)
    np.testing.assert_allclose(back[0], vol[0], rtol=1e-7)


def test_prior_roundtrip(tmp_path, rng):
    prior = GridScorePrior([0.01, 0.5, 50.0], rng.standard_normal((3, 4, 6)))
    io.write_prior(tmp_path / "p.prior", prior, dtype="f64le")
    back = io.read_prior(tmp_path / "p.prior")
    assert back.sigmas.tolist() == prior.sigmas.tolist()
    assert back.fields.tobytes() == prior.fields.tobytes()


def test_checkpoint_resume_is_exact(tmp_path):
    truth = gen_phantom("shepp-logan", 16)
    op = ProjectionOperator.for_views(16, 4)
    sino = forward_project(op, truth)
    cfg = AdmmConfig(n_outer=10, n_steps=20, patch_size=4, patch_stride=4)
    prior = GaussianAnalyticPrior(truth, 0.1)
    full = reconstruct(sino, op, cfg, prior=prior, reference=truth)
    st = init_state(full.init_image, cfg.layout(op.shape))
    for _ in range(4):
        st = admm_iterate(st, sino, op, cfg, prior, reference=truth)
    io.write_checkpoint(tmp_path / "c.ckpt", st, cfg.layout(op.shape))
    st2, layout = io.read_checkpoint(tmp_path / "c.ckpt")
    assert layout == cfg.layout(op.shape)
    assert st2.k == 4 and st2.history == st.history
    resumed = reconstruct(sino, op, cfg, prior=prior, reference=truth, state=st2)
    assert resumed.image.tobytes() == full.image.tobytes()


def test_wrong_tag_and_truncation(tmp_path, rng):
    io.write_image(tmp_path / "i.img", rng.random((4, 4)))
    with pytest.raises(FormatError, match="TVLORA-SINO"):
        io.read_sinogram(tmp_path / "i.img")
    raw = (tmp_path / "i.img").read_bytes()
    (tmp_path / "t.img").write_bytes(raw[:-3])
    with pytest.raises(FormatError, match="truncated"):
        io.read_image(tmp_path / "t.img")
    (tmp_path / "x.img").write_bytes(raw + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        io.read_image(tmp_path / "x.img")
    (tmp_path / "n.img").write_bytes(b"TVLORA-IMG 1\nwidth 4\n")
    with pytest.raises(FormatError, match="end"):
        io.read_image(tmp_path / "n.img")
    (tmp_path / "v.img").write_bytes(raw.replace(b"TVLORA-IMG 1", b"TVLORA-IMG 9"))
    with pytest.raises(FormatError, match="version"):
        io.read_image(tmp_path / "v.img")
    (tmp_path / "b.img").write_bytes(b"\xff\xfe\n")
    with pytest.raises(FormatError):
        io.read_image(tmp_path / "b.img")
    assert issubclass(FormatError, OSError)


def test_history_csv(tmp_path):
    hist = [{"iteration": 1, "objective": 2.5, "r_vx": 0.1, "r_vy": 0.2, "r_z": 0.3, "pcg_iters": 1,
             "t_denoise": 0, "t_x": 0, "t_v": 0, "t_z": 0, "t_u": 0}]
    io.write_history_csv(tmp_path / "h.csv", hist)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0].split(",") == list(io.HISTORY_COLUMNS)
    assert lines[1].startswith("1,2.500000000,0.100000000,0.200000000,0.300000000,1,,")


def test_pgm(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, 2.0]])
    io.write_pgm(tmp_path / "p.pgm", img)
    raw = (tmp_path / "p.pgm").read_bytes()
    assert raw.startswith(b"P5\n2 2\n65535\n")
    pix = np.frombuffer(raw[len(b"P5\n2 2\n65535\n"):], ">u2")
    assert pix.tolist() == [0, 32768, 65535, 65535]


def test_ingest_examples(tmp_path):
    (tmp_path / "z.raw").write_bytes(bytes(2 * 4 * 3 * 2))
    vol = io.ingest_volume(tmp_path / "z.raw", (4, 3, 2), "u16le")
    assert vol.shape == (2, 3, 4) and not vol.any()
    (tmp_path / "m.raw").write_bytes(np.full(24, 65535, "<u2").tobytes())
    np.testing.assert_array_equal(io.ingest_volume(tmp_path / "m.raw", (4, 3, 2), "u16le", 65535), 1.0)


@pytest.mark.parametrize("etype", ["u8", "u16le", "i16le", "f32le", "f64le"])
def test_ingest_export_roundtrip(tmp_path, rng, etype):
    dtype = io.ELEMENT_TYPES[etype]
    if dtype.kind in "ui":
        info = np.iinfo(dtype)
        raw = rng.integers(max(info.min, 0), info.max, size=60, endpoint=True).astype(dtype)
    else:
        raw = rng.random(60).astype(dtype)
    (tmp_path / "a.raw").write_bytes(raw.tobytes())
    vol = io.ingest_volume(tmp_path / "a.raw", (5, 4, 3), etype)
    io.export_raw_volume(tmp_path / "b.raw", vol, etype)
    assert (tmp_path / "b.raw").read_bytes() == raw.tobytes()
    again = io.ingest_volume(tmp_path / "b.raw", (5, 4, 3), etype)
    assert again.tobytes() == vol.tobytes()


def test_ingest_errors(tmp_path):
    (tmp_path / "a.raw").write_bytes(bytes(10))
    with pytest.raises(FormatError, match="does not match"):
        io.ingest_volume(tmp_path / "a.raw", (2, 2, 2), "u16le")
    (tmp_path / "n.raw").write_bytes(np.array([1.0, np.nan], "<f4").tobytes())
    with pytest.raises(FormatError, match="NaN"):
        io.ingest_volume(tmp_path / "n.raw", (2, 1, 1), "f32le")
    with pytest.raises(ValueError):
        io.ingest_volume(tmp_path / "a.raw", (5, 1, 1), "u12")
    with pytest.raises(ValueError):
        io.ingest_volume(tmp_path / "a.raw", (5, 1, 1), "u16le", peak=0)
