"""System configuration: validation, derived quantities, and file I/O.

All other modules consume a single immutable :class:`SystemConfig`.  The
config couples the multicarrier block geometry (``n_fft``, ``c1_prime``,
``cp_len``), the power split between the chirp pilot and the QAM data, the
detector operating point, and the channel-model knobs used by the
Monte-Carlo harness.

Config files are flat ``key = value`` text, one pair per line, ``#`` for
comments.  dB-valued keys carry a ``_db`` suffix.  See ``load_config``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, InvalidValue, MissingKey

# Keys that must be present in every raw parameter map.  Everything else
# falls back to the documented defaults below.
REQUIRED_KEYS = (
    "n_fft",
    "c1_prime",
    "pilot_index",
    "cp_len",
    "mod_order",
    "alpha",
    "p_fa_target",
)

# Defaults follow the reference simulation setup: 4-QAM on 256 subcarriers,
# CP of N/4, spreading factor 8, pilot at affine index 1, target false-alarm
# probability 1e-3.  The sample rate (7.68 MHz) and bandwidth (N * 30 kHz)
# are explicit knobs because absolute rate/range numbers depend on them.
DEFAULTS = {
    "c2": 0.0,
    "p_pilot_db": 21.1,
    "p_data_db": 0.0,
    "snr_db": 25.0,
    "sample_rate_hz": 7.68e6,
    "delta_tau": 1,
    "num_bds": 3,
    "direct_taps": 3,
    "forward_taps": 2,
    "pdp_decay": 1.0,
    "bd_gain_db": -0.9,
    "bd_reflects_composite": False,
    "strict_pow2": False,
    "seed": 1234,
}


class Domain(str, Enum):
    TIME = "time"
    FREQUENCY = "frequency"
    AFFINE = "affine"


@dataclass(frozen=True)
class ComplexBlock:
    """A length-L sequence of complex baseband samples with a domain tag."""

    samples: np.ndarray
    domain: Domain

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", arr)
        if arr.ndim != 1:
            raise DimensionMismatch(f"ComplexBlock expects a 1-d array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise InvalidValue("samples", "non-finite sample energy")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def to_csv(self, path) -> None:
        """Dump as ``index,re,im`` rows for debugging or plotting."""
        with open(path, "w") as fh:
            fh.write("index,re,im\n")
            for k, v in enumerate(self.samples):
                fh.write(f"{k},{float(v.real)!r},{float(v.imag)!r}\n")


@dataclass(frozen=True)
class SystemConfig:
    """Validated, immutable system parameters plus derived quantities.

    Invariants (enforced by :func:`validate_config`):
      * ``n_fft = c1_prime * m_chirp`` with integer ``m_chirp``
      * ``c1 = c1_prime / (2 * n_fft)`` exactly
      * ``cp_len < n_fft``, ``pilot_index < n_fft``
      * ``alpha`` in [0, 1], ``p_fa_target`` in (0, 1)
      * ``mod_order`` a power of 4 (square QAM)
    """

    # block geometry
    n_fft: int
    c1_prime: int
    c2: float
    pilot_index: int
    cp_len: int
    # data & powers
    mod_order: int
    p_pilot_db: float
    p_data_db: float
    # detector / noise
    alpha: float
    p_fa_target: float
    noise_var: float
    # physical mapping
    sample_rate_hz: float
    bandwidth_hz: float
    delta_tau: int
    # channel-model knobs (documented defaults, see README)
    num_bds: int
    direct_taps: int
    forward_taps: int
    pdp_decay: float
    bd_gain_db: float
    bd_reflects_composite: bool
    strict_pow2: bool
    seed: int
    # derived
    c1: float
    m_chirp: int

    @property
    def p_pilot(self) -> float:
        return 10.0 ** (self.p_pilot_db / 10.0)

    @property
    def p_data(self) -> float:
        return 10.0 ** (self.p_data_db / 10.0)

    @property
    def bd_gain(self) -> float:
        """Amplitude gain of the backscatter cascade budget."""
        return 10.0 ** (self.bd_gain_db / 20.0)

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.p_data / self.noise_var)

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.mod_order)))

    def with_updates(self, **kw) -> "SystemConfig":
        """Return a re-validated copy with the given raw fields replaced."""
        raw = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("c1", "m_chirp")}
        raw.pop("bandwidth_hz")  # re-derive unless explicitly overridden
        if "snr_db" in kw:
            snr = kw.pop("snr_db")
            pd = 10.0 ** (raw.get("p_data_db", 0.0) / 10.0)
            if "p_data_db" in kw:
                pd = 10.0 ** (kw["p_data_db"] / 10.0)
            kw["noise_var"] = pd / (10.0 ** (snr / 10.0))
        raw.update(kw)
        return validate_config(raw)


def _is_power_of(x: int, base: int) -> bool:
    if x < 1:
        return False
    while x % base == 0:
        x //= base
    return x == 1


def validate_config(raw: dict) -> SystemConfig:
    """Validate a raw parameter map and return a frozen SystemConfig.

    Raises MissingKey for absent required keys and InvalidValue for any
    violated constraint.  ``noise_var`` may be given directly or through
    ``snr_db`` (noise_var = p_data / 10^(snr_db/10)).
    """
    raw = dict(raw)
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise MissingKey(key)
    merged = dict(DEFAULTS)
    merged.update(raw)

    n = _as_int("n_fft", merged["n_fft"])
    c1p = _as_int("c1_prime", merged["c1_prime"])
    if n < 1:
        raise InvalidValue("n_fft", "must be positive")
    if c1p < 1:
        raise InvalidValue("c1_prime", "must be positive")
    if c1p % 2 != 0:
        raise InvalidValue("c1_prime", "must be even")
    if n % c1p != 0:
        raise InvalidValue("n_fft", f"not a multiple of c1_prime ({n} % {c1p} != 0)")
    m = n // c1p
    if merged["strict_pow2"] and not (_is_power_of(c1p, 2) and _is_power_of(m, 2)):
        raise InvalidValue("c1_prime", "strict mode requires c1_prime and n_fft/c1_prime to be powers of 2")

    pilot_index = _as_int("pilot_index", merged["pilot_index"])
    if not 0 <= pilot_index < n:
        raise InvalidValue("pilot_index", f"must be in [0, {n})")
    cp_len = _as_int("cp_len", merged["cp_len"])
    if not 0 < cp_len < n:
        raise InvalidValue("cp_len", f"must be in (0, {n})")

    mod_order = _as_int("mod_order", merged["mod_order"])
    if not _is_power_of(mod_order, 4):
        raise InvalidValue("mod_order", "square QAM only (power of 4)")
    if mod_order not in (4, 16, 64):
        raise InvalidValue("mod_order", "supported orders: 4, 16, 64")

    alpha = float(merged["alpha"])
    if not 0.0 <= alpha <= 1.0:
        raise InvalidValue("alpha", "must be in [0, 1]")
    p_fa = float(merged["p_fa_target"])
    if not 0.0 < p_fa < 1.0:
        raise InvalidValue("p_fa_target", "must be in (0, 1)")

    p_data = 10.0 ** (float(merged["p_data_db"]) / 10.0)
    if "noise_var" in merged:
        noise_var = float(merged["noise_var"])
    else:
        noise_var = p_data / (10.0 ** (float(merged["snr_db"]) / 10.0))
    if not noise_var > 0.0:
        raise InvalidValue("noise_var", "must be positive")

    fs = float(merged["sample_rate_hz"])
    if fs <= 0:
        raise InvalidValue("sample_rate_hz", "must be positive")
    bw = float(merged.get("bandwidth_hz", n * 30e3))
    if bw <= 0:
        raise InvalidValue("bandwidth_hz", "must be positive")
    delta_tau = _as_int("delta_tau", merged["delta_tau"])
    if delta_tau < 1:
        raise InvalidValue("delta_tau", "must be >= 1")

    direct_taps = _as_int("direct_taps", merged["direct_taps"])
    forward_taps = _as_int("forward_taps", merged["forward_taps"])
    num_bds = _as_int("num_bds", merged["num_bds"])
    if direct_taps < 1 or direct_taps - 1 >= cp_len:
        raise InvalidValue("direct_taps", "need 1 <= D and D-1 < cp_len")
    if forward_taps < 1:
        raise InvalidValue("forward_taps", "must be >= 1")
    if num_bds < 0:
        raise InvalidValue("num_bds", "must be >= 0")

    # c1 = c1'/(2N): exact in binary floating point whenever n_fft is a
    # power of two; stored once so every module sees the same value.
    c1 = c1p / (2.0 * n)

    return SystemConfig(
        n_fft=n,
        c1_prime=c1p,
        c2=float(merged["c2"]),
        pilot_index=pilot_index,
        cp_len=cp_len,
        mod_order=mod_order,
        p_pilot_db=float(merged["p_pilot_db"]),
        p_data_db=float(merged["p_data_db"]),
        alpha=alpha,
        p_fa_target=p_fa,
        noise_var=noise_var,
        sample_rate_hz=fs,
        bandwidth_hz=bw,
        delta_tau=delta_tau,
        num_bds=num_bds,
        direct_taps=direct_taps,
        forward_taps=forward_taps,
        pdp_decay=float(merged["pdp_decay"]),
        bd_gain_db=float(merged["bd_gain_db"]),
        bd_reflects_composite=bool(merged["bd_reflects_composite"]),
        strict_pow2=bool(merged["strict_pow2"]),
        seed=_as_int("seed", merged["seed"]),
        c1=c1,
        m_chirp=m,
    )


def _as_int(name, value):
    if isinstance(value, bool):
        raise InvalidValue(name, "expected an integer")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise InvalidValue(name, f"expected an integer, got {value!r}")


def derived_chirp_rate(cfg: SystemConfig) -> float:
    """Discrete chirp rate of the pilot's quadratic phase.

    Returns R_t = 2*c1 = c1_prime/n_fft in cycles/sample^2: the pilot's
    instantaneous frequency moves by 2*c1 cycles per sample.  Multiply by
    sample_rate_hz**2 for Hz/s.
    """
    return cfg.c1_prime / cfg.n_fft


# ---------------------------------------------------------------------------
# Config file grammar: one `key = value` per line, `#` starts a comment.
# Values parse as int when possible, then float, then bool, else string.
# ---------------------------------------------------------------------------

def _parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidValue(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        raw[key.strip()] = _parse_scalar(value)
    return raw


def load_config(path) -> SystemConfig:
    with open(path) as fh:
        return validate_config(parse_config_text(fh.read()))


def serialize_config(cfg: SystemConfig) -> str:
    """Render a config back to file form; reparsing yields an identical config.

    Integers round-trip bit-exactly and floats ULP-exactly (repr).
    """
    lines = []
    for f in fields(cfg):
        if f.name in ("c1", "m_chirp"):
            continue  # derived, recomputed on load
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            lines.append(f"{f.name} = {'true' if v else 'false'}")
        elif isinstance(v, float):
            lines.append(f"{f.name} = {v!r}")
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def save_config(cfg: SystemConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))
