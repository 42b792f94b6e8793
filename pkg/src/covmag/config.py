"""Experiment configuration schema and loaders.

Configs are YAML (JSON is accepted too). Frequencies are given in Hz and
converted to rad/s when the physical objects are built. Unknown keys are
rejected.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import carbon13 as c13
from . import gates
from . import noisefield as nf
from . import readout as ro

PROTOCOLS = ("phase-cycle", "c13-cycle", "bell-covar", "tppi-fidelity", "two-time-swap",
             "two-time-overlap", "sensitivity-curve", "xy-spectrum")


class ConfigError(ValueError):
    """Config could not be parsed or validated; the message lists field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ReadoutConfig(_Strict):
    preset: Literal["conventional", "scc", "custom"] = "conventional"
    alpha0: float | None = None
    alpha1: float | None = None
    sigma0_sq: float | None = None
    sigma1_sq: float | None = None
    sigma_R: float | None = Field(None, description="Poisson readout with this noise level")
    p_nv_minus: float = 1.0
    t_R: float | None = None

    def build(self) -> ro.ReadoutModel:
        if self.sigma_R is not None:
            base = ro.poisson_for_sigma_r(self.sigma_R)
            kw = {"alpha0": base.alpha0, "alpha1": base.alpha1}
        elif self.preset == "custom":
            if self.alpha0 is None or self.alpha1 is None:
                raise ConfigError("readout: custom preset needs alpha0 and alpha1")
            kw = {"alpha0": self.alpha0, "alpha1": self.alpha1}
        else:
            kw = {}
            if self.alpha0 is not None:
                kw["alpha0"] = self.alpha0
            if self.alpha1 is not None:
                kw["alpha1"] = self.alpha1
        kw.update(sigma0_sq=self.sigma0_sq, sigma1_sq=self.sigma1_sq, p_nv_minus=self.p_nv_minus)
        if self.t_R is not None:
            kw["t_R"] = self.t_R
        if self.preset == "scc":
            return ro.ReadoutModel.scc(**kw)
        if self.preset == "conventional":
            return ro.ReadoutModel.conventional(**kw)
        return ro.ReadoutModel(**kw)


class SignalConfig(_Strict):
    kind: Literal["none", "tone", "correlated", "flat"] = "none"
    f0_hz: float = 1e6
    amp_a: float = 0.0
    amp_b: float = 0.0
    phase_noise_bw_hz: float = 0.0
    phase_noise_rms: float = 1.0
    chi_C: float = 0.0
    sign_b: float = 1.0
    level: float = 0.0

    def build(self, seq: nf.SequenceTiming):
        if self.kind == "none":
            return None
        if self.kind == "tone":
            return nf.AcToneSpec(self.f0_hz, self.amp_a, self.amp_b, self.phase_noise_bw_hz,
                                 self.phase_noise_rms)
        if self.kind == "correlated":
            return nf.CorrelatedNoiseSpec(self.chi_C, 1.0, self.sign_b)
        return nf.CorrelatedNoiseSpec.from_spectrum(nf.SpectralDensity.flat(self.level), seq, self.sign_b)


class SequenceConfig(_Strict):
    family: Literal["hahn", "cpmg", "xy4", "xy8", "xy16"] = "xy8"
    tau: float = 500e-9
    n_pulses: int | None = 8

    def build(self) -> nf.SequenceTiming:
        n = 1 if self.family == "hahn" else self.n_pulses
        return nf.SequenceTiming(self.family, self.tau, n)


class DecoherenceConfig(_Strict):
    # an unset T2 means no decoherence for that NV
    T2_a: float | None = None
    T2_b: float | None = None
    stretch: float = 1.0
    T2_ent_a: float | None = None
    T2_ent_b: float | None = None
    T2_delay_a: float | None = None
    T2_delay_b: float | None = None

    def build(self) -> nf.DecoherenceModel:
        kw = self.model_dump()
        kw["T2_a"] = math.inf if self.T2_a is None else self.T2_a
        kw["T2_b"] = math.inf if self.T2_b is None else self.T2_b
        return nf.DecoherenceModel(**kw)


class CouplingConfig(_Strict):
    f_zz_hz: float = 183e3
    t_e: float | None = None

    def build(self) -> gates.CouplingSpec:
        return gates.CouplingSpec(2 * math.pi * self.f_zz_hz, self.t_e)


class CarbonConfig(_Strict):
    fixture: Literal["default", "strong_field", "custom"] = "default"
    A_par_khz: float | None = None
    A_perp_khz: float | None = None
    B_gauss: float | None = None
    tau0: float | None = None
    tau1: float | None = None
    n_flip: int | None = None
    force_flip: bool = False
    flip_probability: float | None = None
    tau_min: float = 100e-9
    tau_max: float = 500e-9
    n_tau: int = 401
    n_pulses: int = 24

    def build(self) -> c13.HyperfineCoupling:
        if self.fixture == "default":
            return c13.HyperfineCoupling.default_fixture()
        if self.fixture == "strong_field":
            return c13.HyperfineCoupling.strong_field_fixture()
        if None in (self.A_par_khz, self.A_perp_khz, self.B_gauss):
            raise ConfigError("carbon: custom fixture needs A_par_khz, A_perp_khz and B_gauss")
        return c13.HyperfineCoupling.from_khz(self.A_par_khz, self.A_perp_khz, self.B_gauss)


class TPPIConfig(_Strict):
    f_tppi_hz: float = 10e6
    tau_max: float = 400e-9
    n_points: int = 64
    p_nv_minus: float = 1.0
    exact: bool = False


class TwoTimeConfig(_Strict):
    delays: list[float] = Field(default_factory=lambda: [0.0])
    opposite: bool = False
    same_window: bool = False


class SensitivityConfig(_Strict):
    t: float = 25e-6
    t_e: float = 2e-6
    T2: float = 100e-6
    T_min: float = 1.0
    T_max: float = 1e4
    n_points: int = 41
    sigma_R_conventional: float = 35.0
    sigma_R_scc: float | None = None


class SweepConfig(_Strict):
    parameter: str
    grid: list[float]


class ExperimentConfig(_Strict):
    protocol: Literal[PROTOCOLS]  # type: ignore[valid-type]
    master_seed: int = Field(0, ge=0, lt=2**64)
    shots: int = Field(100_000, ge=2)
    n_resamples: int = Field(2000, ge=0)
    contrast: bool = False
    block_size: int = Field(100, ge=1)
    per_shot_output: bool = True
    readout: ReadoutConfig = ReadoutConfig()
    signal: SignalConfig = SignalConfig()
    sequence: SequenceConfig = SequenceConfig()
    decoherence: DecoherenceConfig = DecoherenceConfig()
    coupling: CouplingConfig = CouplingConfig()
    carbon: CarbonConfig = CarbonConfig()
    tppi: TPPIConfig = TPPIConfig()
    two_time: TwoTimeConfig = TwoTimeConfig()
    sensitivity: SensitivityConfig = SensitivityConfig()
    sweep: SweepConfig | None = None

    @model_validator(mode="after")
    def _sweep_target(self):
        if self.sweep is not None:
            head, _, leaf = self.sweep.parameter.partition(".")
            section = getattr(self, head, None)
            if not leaf or not isinstance(section, BaseModel) or leaf not in type(section).model_fields:
                raise ValueError(f"sweep.parameter {self.sweep.parameter!r} does not name a config field")
        return self

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        head, _, leaf = dotted.partition(".")
        section = getattr(self, head).model_copy(update={leaf: value})
        return self.model_copy(update={head: section})


def _format_errors(e: ValidationError) -> str:
    lines = []
    for err in e.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> dict:
    """JSON-ready dict that :func:`parse_config` maps back to ``cfg``."""
    return cfg.model_dump(mode="json")
