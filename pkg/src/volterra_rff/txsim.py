"""Synthetic transmitter impairments and propagation channels.

Generates labelled corpora whose ground truth is known, which the public
dataset cannot provide. Impairments are applied in a fixed order so a corpus
is a pure function of its seeds.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PersistenceError, PreconditionError
from .iq import (
    ComplexSignal,
    DatasetManifest,
    ManifestEntry,
    add_awgn,
    complex_gaussian,
    derive_rng,
    format_snr,
    normalize_power,
    save_iq,
    write_manifest,
)
from .lora import LoraParams, synthesize_preamble

log = logging.getLogger(__name__)

CHANNEL_KINDS = ("static", "multipath", "multipath-doppler")


@dataclass(frozen=True)
class DeviceProfile:
    device_id: int
    dc_offset: complex = 0j
    iq_gain_imbalance: float = 1.0
    iq_phase_imbalance_rad: float = 0.0
    cfo_hz: float = 0.0
    fir_taps: tuple = (1 + 0j,)
    pa_a1: complex = 1 + 0j
    pa_a2: complex = 0j
    phase_noise_std_rad: float = 0.0

    def __post_init__(self):
        taps = tuple(complex(t) for t in self.fir_taps)
        object.__setattr__(self, "fir_taps", taps)
        if not 1 <= len(taps) <= 8:
            raise ConfigError("fir_taps must have between 1 and 8 entries")
        if taps[0] == 0:
            raise ConfigError("first FIR tap must be nonzero")
        if abs(self.pa_a1) == 0:
            raise ConfigError("pa_a1 must be nonzero")
        if self.phase_noise_std_rad < 0:
            raise ConfigError("phase_noise_std_rad must be nonnegative")

    def param_tuple(self) -> tuple:
        return (self.dc_offset, self.iq_gain_imbalance, self.iq_phase_imbalance_rad, self.cfo_hz,
                self.fir_taps, self.pa_a1, self.pa_a2, self.phase_noise_std_rad)

    def to_json(self) -> dict:
        def c(z):
            return [z.real, z.imag]

        d = asdict(self)
        d["dc_offset"] = c(self.dc_offset)
        d["pa_a1"] = c(self.pa_a1)
        d["pa_a2"] = c(self.pa_a2)
        d["fir_taps"] = [c(t) for t in self.fir_taps]
        return d


@dataclass(frozen=True)
class ChannelProfile:
    """One channel realization: tapped delay line, Doppler rotation, AWGN."""

    multipath_taps: tuple = ((0, 1 + 0j),)
    doppler_hz: float = 0.0
    snr_db: float | None = None

    def __post_init__(self):
        taps = tuple((int(d), complex(g)) for d, g in self.multipath_taps)
        object.__setattr__(self, "multipath_taps", taps)
        if not taps:
            raise ConfigError("channel needs at least one tap")
        delays = [d for d, _ in taps]
        if delays[0] != 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise ConfigError(f"tap delays must start at 0 and strictly increase, got {delays}")
        energy = sum(abs(g) ** 2 for _, g in taps)
        if abs(energy - 1.0) > 1e-9:
            raise ConfigError(f"tap powers must sum to 1, got {energy}")


@dataclass(frozen=True)
class ChannelModel:
    """Distribution over channel realizations, drawn once per record.

    ``static`` is the identity channel plus noise. ``multipath`` draws 2 to
    ``max_taps`` taps with delays up to ``max_delay`` and echo powers
    ``echo_power_db`` below the direct path. ``multipath-doppler`` adds a
    uniform Doppler shift in ``[-doppler_max_hz, doppler_max_hz]``.
    """

    kind: str = "static"
    snr_db: float | None = None
    min_taps: int = 2
    max_taps: int = 3
    max_delay: int = 8
    echo_power_db: tuple = (-20.0, -10.0)
    doppler_max_hz: float = 50.0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ConfigError(f"channel kind must be one of {CHANNEL_KINDS}, got {self.kind!r}")
        if not 2 <= self.min_taps <= self.max_taps or self.max_taps - 1 > self.max_delay:
            raise ConfigError("need 2 <= min_taps <= max_taps <= max_delay + 1")
        object.__setattr__(self, "echo_power_db", tuple(float(v) for v in self.echo_power_db))

    def draw(self, rng: np.random.Generator) -> ChannelProfile:
        if self.kind == "static":
            return ChannelProfile(snr_db=self.snr_db)
        n_taps = int(rng.integers(self.min_taps, self.max_taps + 1))
        delays = np.sort(rng.choice(np.arange(1, self.max_delay + 1), size=n_taps - 1, replace=False))
        lo, hi = self.echo_power_db
        powers = np.concatenate([[1.0], 10.0 ** (rng.uniform(lo, hi, n_taps - 1) / 10.0)])
        powers /= powers.sum()
        phases = np.concatenate([[0.0], rng.uniform(-np.pi, np.pi, n_taps - 1)])
        gains = np.sqrt(powers) * np.exp(1j * phases)
        taps = [(0, complex(gains[0]))] + [(int(d), complex(g)) for d, g in zip(delays, gains[1:])]
        doppler = 0.0
        if self.kind == "multipath-doppler":
            doppler = float(rng.uniform(-self.doppler_max_hz, self.doppler_max_hz))
        return ChannelProfile(tuple(taps), doppler, self.snr_db)


@dataclass(frozen=True)
class SamplerRanges:
    """Ranges the device sampler draws from (uniform unless noted)."""

    dc_max: float = 0.01
    gain: tuple = (0.95, 1.05)
    phase_rad: tuple = (-0.05, 0.05)
    cfo_hz: tuple = (-200.0, 200.0)
    n_fir_taps: int = 3
    fir_tap_max: float = 0.1
    pa_a2_max: float = 0.05
    phase_noise_max: float = 1e-3

    @classmethod
    def in_model(cls, **overrides) -> "SamplerRanges":
        """Ranges whose devices lie exactly in the second-order model class."""
        base = dict(gain=(1.0, 1.0), phase_rad=(0.0, 0.0), cfo_hz=(0.0, 0.0), phase_noise_max=0.0)
        base.update(overrides)
        return cls(**base)


def _check_normalized(u: ComplexSignal) -> None:
    p = u.power()
    if abs(p - 1.0) > 1e-6:
        raise PreconditionError(f"input must be power-normalized (mean power {p:.6g})")


def apply_device(u: ComplexSignal, p: DeviceProfile, seed: int) -> ComplexSignal:
    """Distort ``u`` as transmitter ``p`` would.

    Order: IQ imbalance, FIR memory, PA ``a1*v + a2*v**2``, CFO with
    phase-noise random walk, DC offset. Stages at their identity setting are
    skipped, so the identity profile returns ``u`` bit for bit.
    """
    _check_normalized(u)
    x = u.samples.copy()
    n = x.size

    g, phi = p.iq_gain_imbalance, p.iq_phase_imbalance_rad
    if g != 1.0 or phi != 0.0:
        re, im = x.real, x.imag
        x = g * re + 1j * (im * math.cos(phi) + re * math.sin(phi))

    if p.fir_taps != (1 + 0j,):
        x = np.convolve(x, np.asarray(p.fir_taps))[:n]

    if p.pa_a1 != 1 or p.pa_a2 != 0:
        x = p.pa_a1 * x + p.pa_a2 * x * x

    if p.cfo_hz != 0.0 or p.phase_noise_std_rad > 0.0:
        phase = 2.0 * np.pi * p.cfo_hz * np.arange(n) / u.sample_rate_hz
        if p.phase_noise_std_rad > 0.0:
            steps = complex_gaussian(derive_rng(seed, "phase_noise"), n, 2.0 * p.phase_noise_std_rad**2).real
            phase = phase + np.cumsum(steps)
        x = x * np.exp(1j * phase)

    if p.dc_offset != 0:
        x = x + p.dc_offset
    return u.with_samples(x)


def apply_channel(y: ComplexSignal, c: ChannelProfile, seed: int) -> ComplexSignal:
    """Sparse-tap convolution, then Doppler rotation, then AWGN at ``c.snr_db``."""
    x = y.samples
    n = x.size
    if c.multipath_taps != ((0, 1 + 0j),):
        out = np.zeros(n, dtype=np.complex128)
        for d, g in c.multipath_taps:
            if d < n:
                out[d:] += g * x[: n - d]
        x = out
    if c.doppler_hz != 0.0:
        x = x * np.exp(2j * np.pi * c.doppler_hz * np.arange(n) / y.sample_rate_hz)
    return add_awgn(y.with_samples(x), c.snr_db, seed)


def sample_device(device_id: int, seed: int, ranges: SamplerRanges = SamplerRanges()) -> DeviceProfile:
    rng = derive_rng(seed, "device", device_id)

    def polar(mag_max):
        return complex(rng.uniform(0, mag_max) * np.exp(1j * rng.uniform(-np.pi, np.pi)))

    dc = polar(ranges.dc_max)
    gain = float(rng.uniform(*ranges.gain))
    phase = float(rng.uniform(*ranges.phase_rad))
    cfo = float(rng.uniform(*ranges.cfo_hz))
    taps = (1 + 0j,) + tuple(polar(ranges.fir_tap_max) for _ in range(ranges.n_fir_taps - 1))
    a2 = polar(ranges.pa_a2_max)
    pn = float(rng.uniform(0, ranges.phase_noise_max))
    return DeviceProfile(device_id, dc, gain, phase, cfo, taps, 1 + 0j, a2, pn)


def sample_devices(n_devices: int, seed: int, ranges: SamplerRanges = SamplerRanges()) -> list[DeviceProfile]:
    profiles = [sample_device(d, seed, ranges) for d in range(n_devices)]
    if len({p.param_tuple() for p in profiles}) != n_devices:
        raise ConfigError("sampler ranges produce duplicate devices; widen at least one range")
    return profiles


def record_seed(device_sampler_seed: int, device_id: int, signal_index: int) -> int:
    return int(derive_rng(device_sampler_seed, "record", device_id, signal_index).integers(2**62))


def synthesize_record(u: ComplexSignal, profile: DeviceProfile, channel: ChannelModel | ChannelProfile,
                      seed: int) -> ComplexSignal:
    """Device, then power normalization, then one channel realization."""
    y = normalize_power(apply_device(u, profile, seed))
    if isinstance(channel, ChannelModel):
        channel = channel.draw(derive_rng(seed, "channel"))
    return apply_channel(y, channel, seed)


def _channel_tag(channel: ChannelModel | ChannelProfile) -> str:
    return channel.kind if isinstance(channel, ChannelModel) else "fixed"


def generate_corpus(
    n_devices: int,
    n_signals: int,
    device_sampler_seed: int,
    channel: ChannelModel | ChannelProfile,
    lora: LoraParams,
    out_dir: str | Path,
    ranges: SamplerRanges = SamplerRanges(),
    workers: int = 1,
) -> DatasetManifest:
    """Write ``n_devices * n_signals`` RFIQ files, ``manifest.csv`` and ``devices.json``.

    Per-record seeds derive from ``(device_sampler_seed, device_id, signal_index)``
    so serial and threaded runs produce identical files.
    """
    if n_devices < 2:
        raise ConfigError("a corpus needs at least 2 devices")
    if n_signals < 1:
        raise ConfigError("n_signals must be positive")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistenceError(f"cannot create {out_dir}: {exc}") from exc

    u = synthesize_preamble(lora)
    devices = sample_devices(n_devices, device_sampler_seed, ranges)
    snr = channel.snr_db
    tag = _channel_tag(channel)

    jobs = [(d, i) for d in range(n_devices) for i in range(n_signals)]

    def work(job):
        d, i = job
        seed = record_seed(device_sampler_seed, d, i)
        rel = f"dev{d:03d}/sig{i:05d}.rfiq"
        path = out_dir / rel
        path.parent.mkdir(exist_ok=True)
        save_iq(synthesize_record(u, devices[d], channel, seed), path)
        return ManifestEntry(rel, d, format_snr(snr), tag, seed)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            entries = list(pool.map(work, jobs))
    else:
        entries = [work(j) for j in jobs]

    manifest = DatasetManifest(entries, n_devices, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    try:
        (out_dir / "devices.json").write_text(json.dumps([p.to_json() for p in devices], indent=1))
    except OSError as exc:
        raise PersistenceError(f"cannot write device table: {exc}") from exc
    log.info("wrote %d records for %d devices to %s", len(entries), n_devices, out_dir)
    return manifest
