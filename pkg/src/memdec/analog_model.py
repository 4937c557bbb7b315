"""Memristive crossbar inference channel.

Signed weights map onto differential conductance pairs (high/low conductance
states default to 200/60 uS): the signed side programs to
|W|*(G_hcs-G_lcs)/W_max + G_lcs, the other side stays at G_lcs. Programming
adds Gaussian variability with a conductance-dependent standard deviation
sigma_prog(G) — a polynomial fitted from characterization data, or the
constant-relative 0.8% fallback. Stuck differential pairs are forced to the
high-conductance state on both sides, cancelling to an effective weight of
exactly zero. The analog path quantizes DAC inputs (range 1, after scaling
by the ADC bound) and ADC outputs (range 6) at 8 bits.

Each crossbar unit carries one extra bias row; the bias participates in
mapping, variability, and faults like any weight row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rnn_decoder import DecoderParams, logits_to_bits

HIDDEN_SIZE = 16


@dataclass(frozen=True)
class VariabilityModel:
    """sigma_prog(G) in uS for G in uS.

    `coefficients` are ascending polynomial coefficients (c0, c1, ...); when
    empty, sigma = fallback_relative * G. Negative polynomial values clamp
    to zero.
    """

    coefficients: tuple[float, ...] = ()
    fallback_relative: float = 0.008

    def sigma(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        if not self.coefficients:
            return self.fallback_relative * g
        out = np.zeros_like(g)
        for c in reversed(self.coefficients):
            out = out * g + c
        return np.maximum(out, 0.0)

    @staticmethod
    def disabled() -> "VariabilityModel":
        return VariabilityModel(fallback_relative=0.0)


@dataclass(frozen=True)
class CrossbarConfig:
    g_hcs: float = 200.0        # uS
    g_lcs: float = 60.0         # uS
    variability: VariabilityModel = field(default_factory=VariabilityModel)
    stuck_rate: float = 0.10
    adc_bound: float = 6.0
    dac_bound: float = 1.0
    levels: int = 256
    quantize_io: bool = True

    def __post_init__(self):
        if not self.g_hcs > self.g_lcs > 0:
            raise ValueError(f"need g_hcs > g_lcs > 0, got {self.g_hcs}, {self.g_lcs}")
        if not 0.0 <= self.stuck_rate <= 1.0:
            raise ValueError(f"stuck_rate must lie in [0, 1], got {self.stuck_rate}")
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")
        if self.adc_bound <= 0 or self.dac_bound <= 0:
            raise ValueError("ADC/DAC bounds must be positive")


@dataclass(frozen=True)
class FaultMap:
    """Boolean matrices marking stuck differential pairs per unit, bias row
    included: recurrent (21, 16) and evaluation (17, 2)."""

    recurrent: np.ndarray
    evaluation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "recurrent", np.asarray(self.recurrent, dtype=bool))
        object.__setattr__(self, "evaluation", np.asarray(self.evaluation, dtype=bool))
        if self.recurrent.shape != (21, HIDDEN_SIZE) or self.evaluation.shape != (17, 2):
            raise ValueError(f"fault map shapes {self.recurrent.shape}, "
                             f"{self.evaluation.shape} do not match the decoder units")

    @staticmethod
    def none() -> "FaultMap":
        return FaultMap(np.zeros((21, HIDDEN_SIZE), bool), np.zeros((17, 2), bool))

    @staticmethod
    def sample(stuck_rate: float, rng: np.random.Generator) -> "FaultMap":
        return FaultMap(sample_fault_map((21, HIDDEN_SIZE), stuck_rate, rng),
                        sample_fault_map((17, 2), stuck_rate, rng))


@dataclass(frozen=True)
class ProgrammedUnit:
    g_plus: np.ndarray
    g_minus: np.ndarray

    def effective(self) -> np.ndarray:
        return self.g_plus - self.g_minus


@dataclass(frozen=True)
class ProgrammedDecoder:
    """Both crossbar units plus the per-unit de-scaling factors
    s = w_max / (g_hcs - g_lcs), so W ~ (G+ - G-) * s."""

    recurrent: ProgrammedUnit
    evaluation: ProgrammedUnit
    scale_recurrent: float
    scale_evaluation: float


def map_weights(w: np.ndarray, w_max: float, cfg: CrossbarConfig,
                ) -> tuple[np.ndarray, np.ndarray]:
    """Differential-pair conductance targets for a signed weight matrix."""
    if w_max <= 0:
        raise ValueError(f"w_max must be positive, got {w_max}")
    w = np.asarray(w, dtype=np.float64)
    span = cfg.g_hcs - cfg.g_lcs
    programmed = np.abs(w) * span / w_max + cfg.g_lcs
    g_plus = np.where(w > 0, programmed, cfg.g_lcs)
    g_minus = np.where(w < 0, programmed, cfg.g_lcs)
    return g_plus, g_minus


def apply_variability(g: np.ndarray, model: VariabilityModel,
                      rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma_prog(g)) per device; no clipping afterwards."""
    g = np.asarray(g, dtype=np.float64)
    sigma = model.sigma(g)
    return g + rng.standard_normal(g.shape) * sigma


def sample_fault_map(shape: tuple[int, ...], stuck_rate: float,
                     rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Bernoulli(stuck_rate) stuck indicator per differential pair."""
    if not 0.0 <= stuck_rate <= 1.0:
        raise ValueError(f"stuck_rate must lie in [0, 1], got {stuck_rate}")
    return rng.random(shape) < stuck_rate


def apply_faults(g_plus: np.ndarray, g_minus: np.ndarray, stuck: np.ndarray,
                 cfg: CrossbarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Force stuck pairs to the high-conductance state on both sides."""
    stuck = np.asarray(stuck, dtype=bool)
    if stuck.shape != g_plus.shape or g_plus.shape != g_minus.shape:
        raise ValueError(f"shape mismatch: {g_plus.shape}, {g_minus.shape}, {stuck.shape}")
    return (np.where(stuck, cfg.g_hcs, g_plus),
            np.where(stuck, cfg.g_hcs, g_minus))


def quantize(x, bound: float, levels: int):
    """Clamp to [-bound, bound]; inside, round(x/(2b)*n)*(2b)/n with halves
    away from zero."""
    if levels < 2:
        raise ValueError(f"levels must be >= 2, got {levels}")
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    x = np.asarray(x, dtype=np.float64)
    step = 2.0 * bound / levels
    scaled = x / step
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    out = np.clip(rounded * step, -bound, bound)
    return out if out.ndim else float(out)


def crossbar_mvm(g_plus: np.ndarray, g_minus: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Column currents i_k = sum_j (G+_jk - G-_jk) v_j (uS * V -> uA).

    `v` may carry leading batch dimensions; its last axis must match the
    row count.
    """
    g_plus = np.asarray(g_plus, dtype=np.float64)
    g_minus = np.asarray(g_minus, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if g_plus.shape != g_minus.shape:
        raise ValueError(f"pair shape mismatch: {g_plus.shape} vs {g_minus.shape}")
    if v.shape[-1] != g_plus.shape[0]:
        raise ValueError(f"input length {v.shape[-1]} != row count {g_plus.shape[0]}")
    return v @ (g_plus - g_minus)


def _stack_unit(weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return np.vstack([weights, bias[None, :]])


def program_decoder(params: DecoderParams, cfg: CrossbarConfig, fmap: FaultMap,
                    rng: np.random.Generator) -> ProgrammedDecoder:
    """Map both decoder layers (bias row appended) onto crossbar units.

    Programming order: target conductances, then per-device variability,
    then stuck-at faults. Faults land last so stuck pairs sit at exactly
    g_hcs on both sides and cancel to an effective weight of zero.
    """
    units = []
    scales = []
    masks = (fmap.recurrent, fmap.evaluation)
    tensors = ((params.w_rec, params.b_rec), (params.w_eval, params.b_eval))
    for (w, b), stuck in zip(tensors, masks):
        mat = _stack_unit(w, b)
        w_max = float(np.abs(mat).max())
        g_plus, g_minus = map_weights(mat, w_max, cfg)
        g_plus = apply_variability(g_plus, cfg.variability, rng)
        g_minus = apply_variability(g_minus, cfg.variability, rng)
        g_plus, g_minus = apply_faults(g_plus, g_minus, stuck, cfg)
        units.append(ProgrammedUnit(g_plus, g_minus))
        scales.append(w_max / (cfg.g_hcs - cfg.g_lcs))
    return ProgrammedDecoder(units[0], units[1], scales[0], scales[1])


def _dac(x: np.ndarray, cfg: CrossbarConfig) -> np.ndarray:
    # inputs are scaled into [-1, 1] by the ADC bound before conversion and
    # the factor is restored after the analog product
    scaled = x / cfg.adc_bound
    if cfg.quantize_io:
        scaled = quantize(scaled, cfg.dac_bound, cfg.levels)
    return scaled


def _adc(x: np.ndarray, cfg: CrossbarConfig) -> np.ndarray:
    return quantize(x, cfg.adc_bound, cfg.levels) if cfg.quantize_io else x


def analog_logits(programmed: ProgrammedDecoder, cfg: CrossbarConfig,
                  events: np.ndarray) -> np.ndarray:
    """Crossbar forward pass; returns post-ADC logits, shape (n, 2)."""
    x = np.asarray(events, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    n, steps, _ = x.shape
    ones = np.ones((n, 1))
    h = np.zeros((n, HIDDEN_SIZE))
    rec, ev = programmed.recurrent, programmed.evaluation
    for t in range(steps):
        inp = np.concatenate([x[:, t], h, ones], axis=1)
        v = _dac(inp, cfg)
        current = crossbar_mvm(rec.g_plus, rec.g_minus, v)
        z = _adc(current * programmed.scale_recurrent * cfg.adc_bound, cfg)
        h = np.maximum(z, 0.0)
    v = _dac(np.concatenate([h, ones], axis=1), cfg)
    current = crossbar_mvm(ev.g_plus, ev.g_minus, v)
    return _adc(current * programmed.scale_evaluation * cfg.adc_bound, cfg)


def analog_forward(programmed: ProgrammedDecoder, cfg: CrossbarConfig,
                   sample_events: np.ndarray) -> int:
    """Analog prediction for one sample (comparator: argmax, tie -> 0)."""
    return int(analog_forward_batch(programmed, cfg, sample_events)[0])


def analog_forward_batch(programmed: ProgrammedDecoder, cfg: CrossbarConfig,
                         events: np.ndarray) -> np.ndarray:
    return logits_to_bits(analog_logits(programmed, cfg, events))


def analog_accuracy(programmed: ProgrammedDecoder, cfg: CrossbarConfig,
                    events: np.ndarray, labels: np.ndarray) -> float:
    pred = analog_forward_batch(programmed, cfg, events)
    return float((pred == np.asarray(labels).reshape(-1)).mean())


def fit_variability_model(rows: Sequence[tuple[float, float]], degree: int,
                          fallback_relative: float = 0.008) -> VariabilityModel:
    """Fit sigma_prog(G) from (target_uS, programmed_uS) characterization
    pairs: per-target sample std, then a least-squares polynomial in the
    target conductance."""
    by_target: dict[float, list[float]] = {}
    for target, programmed in rows:
        by_target.setdefault(float(target), []).append(float(programmed))
    targets = sorted(t for t, vals in by_target.items() if len(vals) >= 2)
    if len(targets) < degree + 1:
        raise ValueError(f"need at least {degree + 1} conductance states with "
                         f">= 2 readings each, got {len(targets)}")
    sigmas = [float(np.std(by_target[t], ddof=1)) for t in targets]
    coeffs = np.polynomial.polynomial.polyfit(targets, sigmas, degree)
    return VariabilityModel(tuple(float(c) for c in coeffs),
                            fallback_relative=fallback_relative)


def read_characterization_csv(path) -> list[tuple[float, float]]:
    """Read (target_conductance_uS, programmed_conductance_uS) pairs; the
    device_id / cycle_id columns are accepted and ignored."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"target_conductance_uS", "programmed_conductance_uS"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"characterization CSV must have columns {sorted(required)}")
        for row in reader:
            rows.append((float(row["target_conductance_uS"]),
                         float(row["programmed_conductance_uS"])))
    return rows
