import math
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from volterra_rff.errors import ConfigError, DegenerateInputError, FormatError, PersistenceError
from volterra_rff.iq import (
    ComplexSignal,
    DatasetManifest,
    ManifestEntry,
    add_awgn,
    derive_rng,
    load_iq,
    normalize_power,
    parse_iq,
    parse_snr,
    format_snr,
    read_manifest,
    save_iq,
    write_manifest,
)

finite_f32 = st.floats(allow_nan=False, allow_infinity=False, width=32)


class TestComplexSignal:
    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            ComplexSignal([], 1e6)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, complex(0, np.nan)])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ConfigError):
            ComplexSignal([1, bad], 1e6)

    @pytest.mark.parametrize("fs", [0.0, -1.0, math.inf])
    def test_rejects_bad_rate(self, fs):
        with pytest.raises(ConfigError):
            ComplexSignal([1], fs)

    def test_samples_are_read_only_copies(self):
        src = np.array([1 + 1j, 2])
        s = ComplexSignal(src, 1.0)
        src[0] = 0
        assert s.samples[0] == 1 + 1j
        with pytest.raises(ValueError):
            s.samples[0] = 5


class TestRfiq:
    def test_one_sample_file_layout(self, tmp_path):
        path = tmp_path / "one.rfiq"
        save_iq(ComplexSignal([1 + 0j], 1e6), path)
        raw = path.read_bytes()
        # magic 4 + version 4 + fs 8 + count 8 + one (f32, f32) pair 8
        assert len(raw) == 32
        magic, version, fs, count = struct.unpack_from("<4sIdQ", raw)
        assert (magic, version, fs, count) == (b"RFIQ", 1, 1e6, 1)
        assert struct.unpack_from("<ff", raw, 24) == (1.0, 0.0)

    def test_8192_roundtrip_bitwise(self, tmp_path, rng):
        z = (rng.standard_normal(8192) + 1j * rng.standard_normal(8192)).astype(np.complex64)
        s = ComplexSignal(z, 1e6)
        save_iq(s, tmp_path / "x.rfiq")
        back = load_iq(tmp_path / "x.rfiq")
        assert back.samples.astype(np.complex64).tobytes() == z.tobytes()
        assert back.sample_rate_hz == 1e6

    @given(arrays(np.float32, st.integers(1, 64).map(lambda n: 2 * n), elements=finite_f32))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_property(self, pairs):
        s = ComplexSignal(pairs[0::2].astype(np.float64) + 1j * pairs[1::2].astype(np.float64), 2.5e5)
        with tempfile.TemporaryDirectory() as d:
            save_iq(s, Path(d) / "p.rfiq")
            back = load_iq(Path(d) / "p.rfiq")
        assert np.array_equal(back.samples, s.samples)

    @pytest.mark.parametrize("cut", [0, 3, 23, 24 + 4])
    def test_truncated_file_is_format_error(self, tmp_path, cut):
        path = tmp_path / "t.rfiq"
        save_iq(ComplexSignal([1 + 2j, 3 - 4j], 1e6), path)
        with pytest.raises(FormatError):
            parse_iq(path.read_bytes()[:cut])

    def test_bad_magic(self):
        raw = struct.pack("<4sIdQ", b"NOPE", 1, 1e6, 0)
        with pytest.raises(FormatError, match="magic"):
            parse_iq(raw)

    def test_missing_file_is_persistence_error(self, tmp_path):
        with pytest.raises(PersistenceError, match="nothing.rfiq"):
            load_iq(tmp_path / "nothing.rfiq")

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(PersistenceError):
            save_iq(ComplexSignal([1], 1.0), tmp_path / "no" / "such" / "dir.rfiq")


class TestNormalizePower:
    def test_constant_two(self):
        out = normalize_power(ComplexSignal(np.full(17, 2 + 0j), 1.0))
        assert np.allclose(out.samples, 1 + 0j, atol=1e-15, rtol=0)

    def test_impulse(self):
        out = normalize_power(ComplexSignal([1, 0, 0, 0], 1.0))
        assert np.allclose(out.samples, [2, 0, 0, 0], atol=1e-15, rtol=0)

    def test_zero_signal(self):
        with pytest.raises(DegenerateInputError):
            normalize_power(ComplexSignal(np.zeros(5), 1.0))

    @given(arrays(np.complex128, st.integers(1, 200),
                  elements=st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False)))
    @settings(max_examples=100, deadline=None)
    def test_unit_power_idempotent_phase_preserving(self, z):
        if not np.any(np.abs(z) > 1e-100):
            return
        s = ComplexSignal(z, 1.0)
        once = normalize_power(s)
        twice = normalize_power(once)
        assert abs(once.power() - 1.0) < 1e-12
        assert np.allclose(twice.samples, once.samples, rtol=1e-12, atol=1e-12)
        nz = np.abs(z) > 0
        assert np.allclose(np.angle(once.samples[nz]), np.angle(z[nz]), atol=1e-12)


class TestAwgn:
    def test_noiseless_flag(self, preamble):
        assert add_awgn(preamble, None, 1) is preamble
        assert add_awgn(preamble, math.inf, 1) is preamble

    def test_deterministic(self, preamble):
        a = add_awgn(preamble, 10.0, 42)
        b = add_awgn(preamble, 10.0, 42)
        c = add_awgn(preamble, 10.0, 43)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert a.samples.tobytes() != c.samples.tobytes()

    @pytest.mark.parametrize("seed", range(5))
    def test_empirical_snr_within_half_db(self, preamble, seed):
        out = add_awgn(preamble, 20.0, seed)
        noise = out.samples - preamble.samples
        snr = 10 * math.log10(preamble.power() / np.mean(np.abs(noise) ** 2))
        assert abs(snr - 20.0) < 0.5

    def test_noise_is_circular(self, preamble):
        noise = add_awgn(preamble, 0.0, 7).samples - preamble.samples
        assert abs(np.var(noise.real) - np.var(noise.imag)) < 0.05
        assert abs(np.mean(noise)) < 0.05

    def test_snr_text_roundtrip(self):
        assert parse_snr(format_snr(None)) is None
        assert parse_snr(format_snr(12.5)) == 12.5


class TestDeriveRng:
    def test_tags_and_indices_separate_streams(self):
        a = derive_rng(1, "awgn").random(4)
        assert np.array_equal(a, derive_rng(1, "awgn").random(4))
        assert not np.array_equal(a, derive_rng(1, "channel").random(4))
        assert not np.array_equal(derive_rng(1, "x", 0).random(4), derive_rng(1, "x", 1).random(4))


class TestManifest:
    def test_roundtrip(self, tmp_path):
        save_iq(ComplexSignal([1], 1.0), tmp_path / "a.rfiq")
        save_iq(ComplexSignal([2], 1.0), tmp_path / "b.rfiq")
        m = DatasetManifest([ManifestEntry("a.rfiq", 0, "none", "static", 3),
                             ManifestEntry("b.rfiq", 1, "20.0", "multipath", 4)], 2, tmp_path)
        write_manifest(m, tmp_path / "manifest.csv")
        assert (tmp_path / "manifest.csv").read_text().splitlines()[0] == "path,label,snr_db,channel,seed"
        back = read_manifest(tmp_path / "manifest.csv")
        assert back.entries == m.entries
        assert back.n_classes == 2
        assert back.labels().tolist() == [0, 1]

    def test_label_out_of_range(self):
        with pytest.raises(ConfigError):
            DatasetManifest([ManifestEntry("a", 3)], 2)

    def test_missing_file_detected(self, tmp_path):
        m = DatasetManifest([ManifestEntry("gone.rfiq", 0)], 1, tmp_path)
        write_manifest(m, tmp_path / "m.csv")
        with pytest.raises(PersistenceError, match="gone.rfiq"):
            read_manifest(tmp_path / "m.csv")

    def test_bad_header(self, tmp_path):
        (tmp_path / "m.csv").write_text("file,label\nx,0\n")
        with pytest.raises(FormatError):
            read_manifest(tmp_path / "m.csv")
