"""Multi-antenna received-signal model for ambient backscatter detection.

A single-antenna RF source illuminates both an M-antenna reader (direct
link ``h``) and a passive tag.  The tag conveys one bit per symbol by
reflecting (bit 1) or not reflecting (bit 0) the ambient signal, so the
reader observes zero-mean complex Gaussian snapshots whose covariance is
``sigma_s^2 h h^H + sigma_u^2 I`` under bit 0 and the same expression
with the combined vector ``w = h + b`` under bit 1, where ``b`` lumps
the source-tag-reader path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemParams",
    "ChannelRealization",
    "TagSymbolSample",
    "derive_signal_power",
    "sample_channel",
    "generate_tag_symbol",
    "generate_frame",
    "frame_from_seed",
    "pilot_bits",
    "load_params",
    "ConfigError",
]


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario configuration."""


@dataclass(frozen=True)
class SystemParams:
    """Scenario constants for one operating point.

    m            antenna count at the reader
    n_str        source samples per tag symbol (source-to-tag ratio)
    p_pilots     pilot symbols per frame
    t_symbols    total symbols per frame (pilots + data)
    snr_db       direct-link SNR in dB
    zeta_db      backscatter-to-direct average gain ratio in dB
                 (``-inf`` switches the backscatter path off)
    noise_power  per-antenna noise variance, linear
    seed         master RNG seed
    """

    m: int
    n_str: int
    p_pilots: int
    t_symbols: int
    snr_db: float
    zeta_db: float
    noise_power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f"antenna count must be >= 1, got {self.m}")
        if self.n_str < 1:
            raise ConfigError(f"samples per symbol must be >= 1, got {self.n_str}")
        if self.p_pilots < 2:
            raise ConfigError(
                f"need at least 2 pilots so both bits appear, got {self.p_pilots}"
            )
        if self.t_symbols <= self.p_pilots:
            raise ConfigError(
                f"frame length {self.t_symbols} must exceed pilot count {self.p_pilots}"
            )
        if not self.noise_power > 0:
            raise ConfigError(f"noise power must be positive, got {self.noise_power}")
        if np.isnan(self.zeta_db) or np.isnan(self.snr_db):
            raise ConfigError("snr_db / zeta_db must not be NaN")

    @property
    def n_data(self) -> int:
        return self.t_symbols - self.p_pilots

    def replace(self, **kw) -> "SystemParams":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class ChannelRealization:
    """One frame's channel draw and the induced hypothesis covariances."""

    h: np.ndarray  # (M,) complex, direct link
    w: np.ndarray  # (M,) complex, direct + backscatter
    sigma_s2: float  # source signal power
    sigma_0: np.ndarray  # (M, M) Hermitian PD, bit-0 covariance
    sigma_1: np.ndarray  # (M, M) Hermitian PD, bit-1 covariance

    @property
    def m(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class TagSymbolSample:
    """Observation matrix of one tag symbol: columns are antenna snapshots."""

    x: np.ndarray  # (M, N) complex
    label: int  # bit in {0, 1}

    def __post_init__(self):
        if self.x.ndim != 2:
            raise ValueError("sample matrix must be 2-D (antennas x snapshots)")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def derive_signal_power(params: SystemParams) -> float:
    """Source power sigma_s^2 that realizes the configured direct-link SNR.

    With unit-variance Rayleigh entries in ``h``, the expected received
    signal power per snapshot is ``M * sigma_s^2`` against noise power
    ``M * sigma_u^2``, so the dB target fixes the ratio directly.
    """
    return 10.0 ** (params.snr_db / 10.0) * params.noise_power


def _cn_vector(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    """Draw an i.i.d. circularly-symmetric complex Gaussian vector."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def _hypothesis_cov(v: np.ndarray, sigma_s2: float, noise_power: float) -> np.ndarray:
    cov = sigma_s2 * np.outer(v, v.conj()) + noise_power * np.eye(v.shape[0])
    return 0.5 * (cov + cov.conj().T)


def sample_channel(params: SystemParams, rng: np.random.Generator) -> ChannelRealization:
    """Draw one frame's Rayleigh channel and build both covariances.

    ``h`` has i.i.d. CN(0, 1) entries; the lumped backscatter vector has
    i.i.d. CN(0, zeta_linear) entries so the configured average gain
    ratio holds in expectation.  ``zeta_db = -inf`` gives a zero
    backscatter component exactly.
    """
    m = params.m
    h = _cn_vector(rng, m, 1.0)
    zeta_lin = 10.0 ** (params.zeta_db / 10.0)
    b = _cn_vector(rng, m, 1.0) * np.sqrt(zeta_lin)
    w = h + b
    sigma_s2 = derive_signal_power(params)
    return ChannelRealization(
        h=h,
        w=w,
        sigma_s2=sigma_s2,
        sigma_0=_hypothesis_cov(h, sigma_s2, params.noise_power),
        sigma_1=_hypothesis_cov(w, sigma_s2, params.noise_power),
    )


def generate_tag_symbol(
    chan: ChannelRealization,
    c: int,
    params: SystemParams,
    rng: np.random.Generator,
) -> TagSymbolSample:
    """Generate the M x N observation matrix of one tag symbol with bit ``c``."""
    if c not in (0, 1):
        raise ValueError(f"tag bit must be 0 or 1, got {c}")
    v = chan.w if c == 1 else chan.h
    s = _cn_vector(rng, params.n_str, chan.sigma_s2)
    noise = np.sqrt(params.noise_power / 2.0) * (
        rng.standard_normal((params.m, params.n_str))
        + 1j * rng.standard_normal((params.m, params.n_str))
    )
    x = v[:, None] * s[None, :] + noise
    return TagSymbolSample(x=x, label=int(c))


def pilot_bits(p: int) -> np.ndarray:
    """Pilot bit pattern 1,0,1,0,... so both hypotheses appear in the block."""
    return (np.arange(p, dtype=np.int64) + 1) % 2


def frame_from_seed(
    params: SystemParams, frame_seed: int
) -> tuple[ChannelRealization, list[TagSymbolSample]]:
    """One fully seeded frame: channel, random payload bits, all symbols.

    The pair (params, frame_seed) determines the frame completely, so a
    frame used for pilot transfer can be regenerated later for detection.
    """
    from .rng import substream

    rng = substream(frame_seed, "frame")
    chan = sample_channel(params, rng)
    bits = rng.integers(0, 2, size=params.n_data)
    return chan, generate_frame(chan, params, bits, rng)


def generate_frame(
    chan: ChannelRealization,
    params: SystemParams,
    data_bits,
    rng: np.random.Generator,
) -> list[TagSymbolSample]:
    """Generate one frame: P alternating pilots followed by the data bits.

    The channel is held fixed across the whole frame; signal and noise
    are redrawn per symbol.
    """
    data_bits = np.asarray(data_bits, dtype=np.int64)
    if data_bits.shape != (params.n_data,):
        raise ValueError(
            f"expected {params.n_data} data bits, got shape {data_bits.shape}"
        )
    if data_bits.size and not np.isin(data_bits, (0, 1)).all():
        raise ValueError("data bits must be 0/1")
    bits = np.concatenate([pilot_bits(params.p_pilots), data_bits])
    return [generate_tag_symbol(chan, int(b), params, rng) for b in bits]


# --- scenario config files -------------------------------------------------

_PARAM_KEYS = {
    "m": int,
    "n_str": int,
    "p_pilots": int,
    "t_symbols": int,
    "snr_db": float,
    "zeta_db": float,
    "noise_power": float,
    "seed": int,
}


def _parse_scalar(key: str, raw: str):
    caster = _PARAM_KEYS[key]
    try:
        if caster is int:
            return int(raw)
        return float(raw)  # accepts inf / -inf spellings
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_params(text: str) -> SystemParams:
    """Parse ``key = value`` lines (``#`` comments) into SystemParams."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _PARAM_KEYS:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r}; expected one of "
                + ", ".join(sorted(_PARAM_KEYS))
            )
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_scalar(key, raw)
    missing = [k for k in _PARAM_KEYS if k not in values and k not in ("noise_power", "seed")]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    return SystemParams(**values)


def load_params(path) -> SystemParams:
    """Load SystemParams from a key/value text file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_params(text)
