"""JSON pipeline configuration with strict key checking.

Every section is optional and falls back to the library defaults; unknown
keys anywhere are rejected.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .cvnn.network import NetworkConfig
from .cvnn.training import TrainConfig
from .errors import ConfigError, PersistenceError
from .lora import LoraParams
from .txsim import CHANNEL_KINDS, ChannelModel, SamplerRanges
from .volterra.basis import WaveletBasisSpec

RESOLVED_NAME = "resolved_config.json"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LoraSection(_Section):
    sf: int = 7
    bw_hz: float = 125e3
    fs_hz: float = 1e6
    n_symbols: int = 8

    def params(self) -> LoraParams:
        return LoraParams(self.sf, self.bw_hz, self.fs_hz, self.n_symbols)


class BasisSection(_Section):
    family: str = "haar"
    scales: list[int] = [0, 1, 2]
    memory_len: int = 4
    exclude_warmup: bool = False
    boundary: Literal["zero", "circular"] = "zero"

    def spec(self) -> WaveletBasisSpec:
        return WaveletBasisSpec(self.family, tuple(self.scales), self.memory_len)


class RidgeSection(_Section):
    lambda_rel: float = Field(1e-3, ge=0)
    # absolute lambda; overrides lambda_rel when set
    lam: Optional[float] = Field(None, ge=0)


class SamplerSection(_Section):
    dc_max: float = 0.01
    gain: tuple[float, float] = (0.95, 1.05)
    phase_rad: tuple[float, float] = (-0.05, 0.05)
    cfo_hz: tuple[float, float] = (-200.0, 200.0)
    n_fir_taps: int = 3
    fir_tap_max: float = 0.1
    pa_a2_max: float = 0.05
    phase_noise_max: float = 1e-3

    def ranges(self) -> SamplerRanges:
        return SamplerRanges(**self.model_dump())


class ChannelSection(_Section):
    min_taps: int = 2
    max_taps: int = 3
    max_delay: int = 8
    echo_power_db: tuple[float, float] = (-20.0, -10.0)
    doppler_max_hz: float = 50.0


class SimSection(_Section):
    n_devices: int = Field(10, ge=2)
    n_signals: int = Field(200, ge=1)
    channel: Literal[CHANNEL_KINDS] = "static"
    # null means no noise
    snr_db: Optional[float] = 30.0
    seed: int = 0
    workers: int = Field(1, ge=1)
    sampler: SamplerSection = SamplerSection()
    channel_params: ChannelSection = ChannelSection()

    def channel_model(self, kind: str | None = None) -> ChannelModel:
        return ChannelModel(kind or self.channel, self.snr_db, **self.channel_params.model_dump())


class NetSection(_Section):
    n_cbs_blocks: int = Field(5, ge=1)
    widths: list[int] = [8, 16, 32, 64, 64]
    fc_hidden: int = Field(128, ge=1)
    # null means one class per label found in the data
    n_classes: Optional[int] = Field(None, ge=2)

    def network(self, input_len: int, n_classes: int) -> NetworkConfig:
        return NetworkConfig(input_len=input_len, n_cbs_blocks=self.n_cbs_blocks, widths=tuple(self.widths),
                             fc_hidden=self.fc_hidden, n_classes=self.n_classes or n_classes)


class TrainSection(_Section):
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    train_fraction: float = 0.8
    optimizer: Literal["adam", "sgd"] = "adam"
    k_folds: int = Field(5, ge=2)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.seed,
                           self.train_fraction, self.optimizer)


class ExtractSection(_Section):
    workers: int = Field(1, ge=1)
    max_failure_fraction: float = Field(0.01, ge=0, le=1)
    # scale each received record to unit mean power before fitting
    normalize: bool = True


class PcaSection(_Section):
    k: int = Field(2, ge=1)


class PipelineConfig(_Section):
    lora: LoraSection = LoraSection()
    basis: BasisSection = BasisSection()
    ridge: RidgeSection = RidgeSection()
    sim: SimSection = SimSection()
    net: NetSection = NetSection()
    train: TrainSection = TrainSection()
    extract: ExtractSection = ExtractSection()
    pca: PcaSection = PcaSection()

    def validate_domain(self) -> "PipelineConfig":
        """Build every library object once so bad values fail at load time."""
        self.lora.params()
        self.basis.spec()
        self.sim.sampler.ranges()
        self.sim.channel_model()
        self.train.train_config()
        if len(self.net.widths) != self.net.n_cbs_blocks:
            raise ConfigError(f"net: {self.net.n_cbs_blocks} blocks but {len(self.net.widths)} widths")
        return self


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> PipelineConfig:
    try:
        cfg = PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_validation(exc)}") from exc
    return cfg.validate_domain()


def load_config(path: str | Path | None) -> PipelineConfig:
    """Read a JSON config; ``None`` gives the all-defaults config."""
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PersistenceError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data)


def write_resolved(cfg: PipelineConfig, out_dir: str | Path) -> Path:
    """Write the fully-resolved config (defaults filled in) next to a command's outputs."""
    path = Path(out_dir) / RESOLVED_NAME
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path
