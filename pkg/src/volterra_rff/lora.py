"""Ideal LoRa preamble synthesis (the reference waveform fed to the fit)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .iq import ComplexSignal


@dataclass(frozen=True)
class LoraParams:
    spreading_factor: int = 7
    bandwidth_hz: float = 125e3
    sample_rate_hz: float = 1e6
    n_preamble_symbols: int = 8

    def __post_init__(self):
        if not 6 <= self.spreading_factor <= 12:
            raise ConfigError(f"spreading_factor must be in [6, 12], got {self.spreading_factor}")
        if self.bandwidth_hz <= 0 or self.sample_rate_hz <= 0:
            raise ConfigError("bandwidth_hz and sample_rate_hz must be positive")
        if self.sample_rate_hz < self.bandwidth_hz:
            raise ConfigError("sample_rate_hz must be >= bandwidth_hz")
        if self.n_preamble_symbols < 1:
            raise ConfigError("n_preamble_symbols must be positive")
        sps = self.sample_rate_hz * 2**self.spreading_factor / self.bandwidth_hz
        if abs(sps - round(sps)) > 1e-9 * sps:
            raise ConfigError(f"samples per symbol {sps} is not an integer")

    @property
    def samples_per_symbol(self) -> int:
        return int(round(self.sample_rate_hz * 2**self.spreading_factor / self.bandwidth_hz))

    @property
    def symbol_duration_s(self) -> float:
        return 2**self.spreading_factor / self.bandwidth_hz


def upchirp(params: LoraParams) -> np.ndarray:
    """One unmodulated up-chirp sweeping -B/2 to +B/2, phase 0 at t=0."""
    t = np.arange(params.samples_per_symbol) / params.sample_rate_hz
    T = params.symbol_duration_s
    B = params.bandwidth_hz
    return np.exp(1j * np.pi * B * (t * t / T - t))


def synthesize_preamble(params: LoraParams = LoraParams()) -> ComplexSignal:
    """``n_preamble_symbols`` identical up-chirps; phase restarts every symbol."""
    return ComplexSignal(np.tile(upchirp(params), params.n_preamble_symbols), params.sample_rate_hz)
