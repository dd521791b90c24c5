import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from voxstream import (CombineOp, VoxelGrid, rasterize_nested_sweeps, read_raw_volume,
                       write_constant_volume)
from voxstream.sinks import (ChecksumSink, MemSink, NullSink, RawFileSink, RawVolumeHeader,
                             SinkOrderError, TeeSink, raw_paths, volume_checksum)


def feed(sink, volume):
    dz, dy, _ = volume.shape
    for z in range(dz):
        for y in range(dy):
            sink.accept_line(z, y, volume[z, y])
    return sink.finish()


def test_raw_layout_u8(tmp_path):
    g = VoxelGrid(2, 2, 2)
    vol = np.arange(8, dtype=np.uint8).reshape(g.shape)
    summary = feed(RawFileSink(tmp_path / "v", g), vol)
    assert (tmp_path / "v.raw").read_bytes() == bytes([0, 1, 2, 3, 4, 5, 6, 7])
    assert summary.bytes_written == 8
    assert summary.checksum == volume_checksum(vol)


def test_raw_layout_f32(tmp_path):
    g = VoxelGrid(1, 1, 1, scalar="f32")
    feed(RawFileSink(tmp_path / "f", g), np.ones((1, 1, 1), dtype=np.float32))
    assert (tmp_path / "f.raw").read_bytes() == bytes([0x00, 0x00, 0x80, 0x3F])


def test_raw_roundtrip_and_header(tmp_path):
    g = VoxelGrid(5, 3, 4, scalar="u32")
    vol = np.arange(g.size, dtype=np.uint32).reshape(g.shape) * 1000003
    feed(RawFileSink(tmp_path / "vol.raw", g, seed=12, generator="test"), vol)
    header, back = read_raw_volume(tmp_path / "vol")
    assert header.dims == (5, 3, 4)
    assert header.seed == 12 and header.generator == "test"
    assert np.array_equal(back, vol)
    text = (tmp_path / "vol.rvh").read_text()
    assert "dims: 5 3 4" in text and "scalar: uint32" in text and "endianness: little" in text
    assert RawVolumeHeader.parse(text) == header


def test_header_written_only_on_finish(tmp_path):
    g = VoxelGrid(2, 2, 1)
    sink = RawFileSink(tmp_path / "p", g)
    sink.accept_line(0, 0, np.zeros(2, np.uint8))
    assert not (tmp_path / "p.rvh").exists()
    sink.abort()
    assert not (tmp_path / "p.rvh").exists()
    with pytest.raises(FileNotFoundError):
        read_raw_volume(tmp_path / "p")


def test_raw_paths():
    assert [p.name for p in raw_paths("a/b.raw")] == ["b.raw", "b.rvh"]
    assert [p.name for p in raw_paths("a/b")] == ["b.raw", "b.rvh"]


def test_constant_volume_file_size(tmp_path):
    g = VoxelGrid(256, 256, 256)
    summary = write_constant_volume(g, 0, RawFileSink(tmp_path / "c", g, sync=False))
    assert (tmp_path / "c.raw").stat().st_size == 16_777_216
    assert summary.voxels == g.size


def test_constant_zero_equals_empty_rasterization():
    g = VoxelGrid(17, 9, 6)
    a = write_constant_volume(g, 0, ChecksumSink())
    b = rasterize_nested_sweeps([], g, CombineOp.sum(), ChecksumSink()).sink_summary
    assert a.checksum == b.checksum


def test_null_sink_counts():
    g = VoxelGrid(3, 4, 5)
    s = write_constant_volume(g, 1, NullSink())
    assert (s.voxels, s.lines, s.checksum) == (60, 20, None)


class TestOrderContract:
    def make(self):
        return ChecksumSink(VoxelGrid(3, 2, 2))

    def test_out_of_order_line(self):
        s = self.make()
        with pytest.raises(SinkOrderError):
            s.accept_line(0, 1, np.zeros(3, np.uint8))

    def test_duplicate_line(self):
        s = self.make()
        s.accept_line(0, 0, np.zeros(3, np.uint8))
        with pytest.raises(SinkOrderError):
            s.accept_line(0, 0, np.zeros(3, np.uint8))

    def test_wrong_length(self):
        with pytest.raises(SinkOrderError):
            self.make().accept_line(0, 0, np.zeros(4, np.uint8))

    def test_early_finish(self):
        s = self.make()
        s.accept_line(0, 0, np.zeros(3, np.uint8))
        with pytest.raises(SinkOrderError):
            s.finish()

    def test_finish_twice_and_line_after_finish(self):
        g = VoxelGrid(1, 1, 1)
        s = NullSink(g)
        s.accept_line(0, 0, np.zeros(1, np.uint8))
        s.finish()
        with pytest.raises(SinkOrderError):
            s.finish()
        with pytest.raises(SinkOrderError):
            s.accept_line(0, 0, np.zeros(1, np.uint8))

    def test_unbound(self):
        with pytest.raises(SinkOrderError):
            NullSink().accept_line(0, 0, np.zeros(1, np.uint8))

    def test_rebinding_other_grid(self):
        s = NullSink(VoxelGrid(2, 2, 2))
        with pytest.raises(SinkOrderError):
            s.begin(VoxelGrid(3, 2, 2))


def test_mem_budget():
    with pytest.raises(MemoryError):
        MemSink(VoxelGrid(100, 100, 100), budget=1000)


def test_checksum_detects_single_flips(rng):
    g = VoxelGrid(16, 16, 16)
    base = rng.integers(0, 256, g.shape, dtype=np.uint8)
    digests = {volume_checksum(base)}
    flat = base.reshape(-1)
    for k in range(1000):
        i = int(rng.integers(g.size))
        old = flat[i]
        flat[i] = (int(old) + 1 + k % 255) % 256
        digests.add(volume_checksum(base))
        flat[i] = old
    assert len(digests) == 1001


@given(st.lists(st.integers(0, 255), min_size=1, max_size=64))
def test_streaming_checksum_equals_whole_volume(values):
    g = VoxelGrid(len(values), 1, 1)
    vol = np.array(values, dtype=np.uint8).reshape(g.shape)
    s = ChecksumSink(g)
    assert feed(s, vol).checksum == volume_checksum(vol)


def test_tee_forwards(tmp_path):
    g = VoxelGrid(4, 3, 2)
    vol = np.arange(24, dtype=np.uint8).reshape(g.shape)
    mem = MemSink()
    summary = feed(TeeSink(mem, ChecksumSink(), RawFileSink(tmp_path / "t"), grid=g), vol)
    assert np.array_equal(mem.volume, vol)
    assert summary.checksum == volume_checksum(vol)
    assert (tmp_path / "t.raw").read_bytes() == vol.tobytes()


def test_checksum_is_little_endian_and_frozen():
    # XXH64, seed 0, over the bytes 00 00 80 3F
    vol = np.ones((1, 1, 1), dtype=np.float32)
    assert volume_checksum(vol) == volume_checksum(np.frombuffer(b"\x00\x00\x80\x3f", "<f4"))
    assert volume_checksum(np.zeros(0, np.uint8)) == "ef46db3751d8e999"


@pytest.mark.parametrize("make", [NullSink, ChecksumSink, MemSink])
def test_plane_equals_lines(make):
    g = VoxelGrid(6, 5, 4, scalar="u32")
    vol = np.arange(g.size, dtype=np.uint32).reshape(g.shape)
    a, b = make(g), make(g)
    for z in range(g.dz):
        a.accept_plane(z, vol[z])
    assert a.finish() == feed(b, vol)


def test_plane_raw_and_tee(tmp_path):
    g = VoxelGrid(6, 5, 4, scalar="f32")
    vol = np.linspace(-1, 1, g.size, dtype=np.float32).reshape(g.shape)
    mem = MemSink()
    tee = TeeSink(mem, RawFileSink(tmp_path / "p", sync=False), grid=g)
    for z in range(g.dz):
        tee.accept_plane(z, vol[z])
    assert tee.finish().checksum == volume_checksum(vol)
    assert np.array_equal(read_raw_volume(tmp_path / "p")[1], vol)
    assert np.array_equal(mem.volume, vol)


def test_plane_order_contract():
    g = VoxelGrid(3, 2, 2)
    s = ChecksumSink(g)
    with pytest.raises(SinkOrderError):
        s.accept_plane(1, np.zeros((2, 3), np.uint8))
    s.accept_line(0, 0, np.zeros(3, np.uint8))
    with pytest.raises(SinkOrderError):  # plane would restart a partly written slice
        s.accept_plane(0, np.zeros((2, 3), np.uint8))
    with pytest.raises(SinkOrderError):
        ChecksumSink(g).accept_plane(0, np.zeros((3, 3), np.uint8))


def test_plane_reaches_line_overrides():
    calls = []

    class Recorder(NullSink):
        def accept_line(self, z, y, values):
            calls.append((z, y))
            super().accept_line(z, y, values)

    s = Recorder(VoxelGrid(2, 3, 1))
    s.accept_plane(0, np.zeros((3, 2), np.uint8))
    assert calls == [(0, 0), (0, 1), (0, 2)]
    assert s.finish().lines == 3
