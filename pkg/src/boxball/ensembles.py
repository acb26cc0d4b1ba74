"""Random initial states: i.i.d. product states and the two-temperature GGE.

Every sample index gets its own Philox stream keyed by
``SeedSequence(seed, spawn_key=(index,))``, so sample ``k`` is the same no
matter which worker draws it or in what order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .dynamics import Configuration
from .errors import DomainError, InvalidTemperature

__all__ = [
    "IidSpec",
    "Gge2tSpec",
    "rng_for",
    "iid_occupancies",
    "sample_iid",
    "sample_gge2t",
    "gge2t_chain",
    "temperatures_to_az",
    "az_to_temperatures",
    "parse_spec",
    "parse_kv",
]

_CHUNK = 1 << 16


def rng_for(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for sample ``index`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _threshold(p: float) -> int:
    # site occupied when its 32-bit word is below round(p * 2^32)
    return int(round(p * 2**32))


def iid_occupancies(L: int, p: float, seed: int, index: int = 0) -> np.ndarray:
    """Writable uint8 occupancies of i.i.d. sample ``index``."""
    out = np.empty(L, dtype=np.uint8)
    if p == 0:
        out[:] = 0
        return out
    raw = rng_for(seed, index).bit_generator.random_raw((L + 1) // 2)
    kernels.bernoulli_bits(np.ascontiguousarray(raw, dtype=np.uint64), _threshold(p), out)
    return out


def _kv_dump(obj) -> str:
    return "\n".join(f"{k} = {v}" for k, v in obj._kv().items()) + "\n"


def parse_kv(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"expected key = value, got {raw!r}")
        k, v = (part.strip() for part in line.split("=", 1))
        out[k] = v
    return out


@dataclass(frozen=True)
class IidSpec:
    """Product state of ball density p on a ring of L sites."""

    L: int
    p: float
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise DomainError(f"length must be positive, got {self.L}")
        if not 0 <= self.p < 0.5:
            raise DomainError(f"density must lie in [0, 1/2), got {self.p}")

    @property
    def z(self) -> float:
        return self.p / (1 - self.p)

    @property
    def a(self) -> float:
        return self.z

    def _kv(self):
        return {"length": self.L, "density": repr(self.p), "seed": self.seed}

    def dumps(self) -> str:
        return _kv_dump(self)

    @classmethod
    def loads(cls, text: str) -> "IidSpec":
        kv = parse_kv(text)
        return cls(int(kv["length"]), float(kv["density"]), int(kv.get("seed", 0)))


def temperatures_to_az(beta1: float, beta_inf: float) -> tuple[float, float]:
    """(a, z) from (beta_1, beta_inf): z = e^{-beta_inf}, a^1/2 - a^-1/2 = e^{beta_1/2}(z^1/2 - z^-1/2)."""
    if not beta_inf > 0:
        raise InvalidTemperature(f"beta_inf must be positive (z < 1), got {beta_inf}")
    z = math.exp(-beta_inf)
    try:
        c = math.exp(0.5 * beta1) * (math.sqrt(z) - 1 / math.sqrt(z))
    except OverflowError:
        raise InvalidTemperature(f"beta1 = {beta1} drives a to zero") from None
    s = 2 / (math.sqrt(c * c + 4) - c)
    a = s * s
    if not 0 < a < 1:
        raise InvalidTemperature(f"implied a = {a} outside (0, 1)")
    return a, z


def az_to_temperatures(a: float, z: float) -> tuple[float, float]:
    if not (0 < a < 1 and 0 < z < 1):
        raise InvalidTemperature(f"need 0 < a, z < 1, got a={a}, z={z}")
    ratio = (math.sqrt(a) - 1 / math.sqrt(a)) / (math.sqrt(z) - 1 / math.sqrt(z))
    return 2 * math.log(ratio), -math.log(z)


@dataclass(frozen=True)
class Gge2tSpec:
    """GGE with weight exp(-beta1 E_1 - beta_inf Q), sampled by Metropolis.

    ``burn_in`` and ``thinning`` count single-site flip proposals; ``None``
    means 20 L and 5 L.
    """

    L: int
    beta1: float
    beta_inf: float
    burn_in: int | None = None
    thinning: int | None = None
    proposal: str = "single-flip"
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise DomainError(f"length must be positive, got {self.L}")
        if self.proposal != "single-flip":
            raise DomainError(f"unknown proposal kind {self.proposal!r}")
        for name in ("burn_in", "thinning"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise DomainError(f"{name} must be positive")
        temperatures_to_az(self.beta1, self.beta_inf)

    @classmethod
    def from_az(cls, L: int, a: float, z: float, **kw) -> "Gge2tSpec":
        b1, binf = az_to_temperatures(a, z)
        return cls(L, b1, binf, **kw)

    @property
    def az(self) -> tuple[float, float]:
        return temperatures_to_az(self.beta1, self.beta_inf)

    @property
    def n_burn(self) -> int:
        return 20 * self.L if self.burn_in is None else self.burn_in

    @property
    def n_thin(self) -> int:
        return 5 * self.L if self.thinning is None else self.thinning

    def _kv(self):
        return {"length": self.L, "beta1": repr(self.beta1), "beta_inf": repr(self.beta_inf),
                "burn_in": self.n_burn, "thinning": self.n_thin, "seed": self.seed}

    def dumps(self) -> str:
        return _kv_dump(self)

    @classmethod
    def loads(cls, text: str) -> "Gge2tSpec":
        kv = parse_kv(text)
        return cls(int(kv["length"]), float(kv["beta1"]), float(kv["beta_inf"]),
                   int(kv["burn_in"]) if "burn_in" in kv else None,
                   int(kv["thinning"]) if "thinning" in kv else None,
                   seed=int(kv.get("seed", 0)))


def parse_spec(text: str):
    """IidSpec or Gge2tSpec depending on the keys present."""
    kv = parse_kv(text)
    return IidSpec.loads(text) if "density" in kv else Gge2tSpec.loads(text)


def sample_iid(spec: IidSpec, index: int = 0) -> Configuration:
    return Configuration(iid_occupancies(spec.L, spec.p, spec.seed, index))


def _run_chain(s: np.ndarray, spec: Gge2tSpec, rng: np.random.Generator, flips: int) -> int:
    acc = 0
    while flips > 0:
        n = min(flips, _CHUNK)
        sites = rng.integers(0, spec.L, size=n, dtype=np.int64)
        us = rng.random(n)
        acc += kernels.metropolis(s, float(spec.beta1), float(spec.beta_inf), sites, us)
        flips -= n
    return acc


def _chain_start(spec: Gge2tSpec, index: int):
    a, _z = spec.az
    rng = rng_for(spec.seed, index)
    # start from the product state with the target ball density a/(1+a)
    raw = rng.bit_generator.random_raw((spec.L + 1) // 2)
    s = np.empty(spec.L, dtype=np.uint8)
    kernels.bernoulli_bits(np.ascontiguousarray(raw, dtype=np.uint64), _threshold(a / (1 + a)), s)
    _run_chain(s, spec, rng, spec.n_burn)
    return s, rng


def sample_gge2t(spec: Gge2tSpec, index: int = 0) -> Configuration:
    """State after burn-in of chain ``index``."""
    s, _ = _chain_start(spec, index)
    return Configuration(s)


def gge2t_chain(spec: Gge2tSpec, n: int, index: int = 0):
    """Yield ``n`` states of chain ``index``, ``thinning`` flips apart after burn-in."""
    s, rng = _chain_start(spec, index)
    for k in range(n):
        if k:
            _run_chain(s, spec, rng, spec.n_thin)
        yield Configuration(s)
