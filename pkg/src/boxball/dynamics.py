"""Box-ball dynamics: carrier sweeps, conserved energies, combinatorial R and
generalized current fields.

A configuration lives on a ring of ``L`` boxes.  ``T_l`` moves a capacity-``l``
carrier once around the ring; its entering load is the least fixed point of
the one-pass map, found by iterating from an empty carrier.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from ._backend import kernels
from .errors import (
    CarrierNonConvergent,
    DomainError,
    NonSaturatedSpectrum,
    UndefinedPseudoenergy,
)

__all__ = [
    "Configuration",
    "CarrierElement",
    "CarrierTrace",
    "EnergySpectrum",
    "CurrentField",
    "evolve_open",
    "evolve_periodic",
    "evolve",
    "periodic_entry_load",
    "energy",
    "energies",
    "soliton_content",
    "pseudoenergies",
    "combinatorial_R",
    "generalized_current_field",
]


class Configuration:
    """Occupancies of a periodic lattice (one 0/1 entry per box)."""

    __slots__ = ("_occ",)

    def __init__(self, occupancies: Union[str, Iterable[int], np.ndarray]):
        if isinstance(occupancies, str):
            text = occupancies.strip()
            if not text or set(text) - {"0", "1"}:
                raise DomainError("configuration text must be a non-empty string of 0/1")
            occ = np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")
        else:
            arr = np.asarray(occupancies)
            if arr.ndim != 1 or arr.size == 0:
                raise DomainError("configuration must be a non-empty 1-d sequence")
            if not np.all((arr == 0) | (arr == 1)):
                raise DomainError("occupancies must be 0 or 1")
            occ = arr.astype(np.uint8)
        occ = np.array(occ, dtype=np.uint8)
        occ.setflags(write=False)
        self._occ = occ

    @property
    def occupancies(self) -> np.ndarray:
        return self._occ

    @property
    def L(self) -> int:
        return int(self._occ.size)

    @property
    def Q(self) -> int:
        return int(self._occ.sum(dtype=np.int64))

    def __len__(self) -> int:
        return self.L

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self._occ, other._occ)

    def __hash__(self) -> int:
        return hash(self._occ.tobytes())

    def __repr__(self) -> str:
        s = self.to_string()
        return f"Configuration('{s if len(s) <= 60 else s[:57] + '...'}')"

    @classmethod
    def empty(cls, L: int) -> "Configuration":
        return cls(np.zeros(L, dtype=np.uint8))

    def to_string(self) -> str:
        return (self._occ + ord("0")).tobytes().decode("ascii")

    def to_bytes(self) -> bytes:
        """Binary form: little-endian uint64 length, then bits packed LSB first."""
        return struct.pack("<Q", self.L) + np.packbits(self._occ, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Configuration":
        if len(data) < 8:
            raise DomainError("truncated configuration header")
        (L,) = struct.unpack("<Q", data[:8])
        nbytes = (L + 7) // 8
        if len(data) != 8 + nbytes:
            raise DomainError(f"expected {nbytes} payload bytes for L={L}, got {len(data) - 8}")
        bits = np.unpackbits(np.frombuffer(data[8:], dtype=np.uint8), bitorder="little")
        return cls(bits[:L])


def _as_config(config) -> Configuration:
    return config if isinstance(config, Configuration) else Configuration(config)


def _check_capacity(l: int) -> int:
    if isinstance(l, bool) or int(l) != l or l < 1:
        raise DomainError(f"capacity must be a positive integer, got {l!r}")
    return int(l)


@dataclass(frozen=True)
class CarrierElement:
    """Carrier state of capacity ``capacity`` holding ``load`` balls."""

    capacity: int
    load: int

    def __post_init__(self):
        if self.capacity < 1 or not 0 <= self.load <= self.capacity:
            raise DomainError(f"invalid carrier element {self.capacity, self.load}")

    @property
    def pair(self) -> tuple[int, int]:
        """(empty slots, balls)."""
        return self.capacity - self.load, self.load

    @classmethod
    def from_pair(cls, a0: int, a1: int) -> "CarrierElement":
        return cls(a0 + a1, a1)


@dataclass(frozen=True)
class CarrierTrace:
    """Loads entering each site during one sweep, plus the exit load."""

    capacity: int
    loads: np.ndarray
    exit_load: int
    pickups: int

    @property
    def current(self) -> int:
        """Total ball current summed over bonds."""
        return int(self.loads.sum(dtype=np.int64))


@dataclass(frozen=True)
class EnergySpectrum:
    """Energies E_1..E_K of a configuration on a ring of length L (E_0 = 0)."""

    L: int
    E: tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.E)

    def padded(self) -> np.ndarray:
        """E_0..E_K as an integer array."""
        return np.concatenate(([0], np.asarray(self.E, dtype=np.int64)))


@dataclass(frozen=True)
class CurrentField:
    """Generalized current on every bond, for capacities (l, i)."""

    l: int
    i: int
    values: np.ndarray
    closure: int

    @property
    def total(self) -> int:
        return int(self.values.sum(dtype=np.int64))


def evolve_open(config, l: int, u0: int) -> tuple[Configuration, CarrierTrace]:
    """One left-to-right pass of a capacity-l carrier entering with load u0."""
    config = _as_config(config)
    l = _check_capacity(l)
    if not 0 <= u0 <= l:
        raise DomainError(f"initial load {u0} outside [0, {l}]")
    s = np.array(config.occupancies)
    loads = np.zeros(config.L, dtype=np.int32)
    exit_load, pk = kernels.sweep(s, l, int(u0), True, loads)
    return Configuration(s), CarrierTrace(l, loads, int(exit_load), int(pk))


def periodic_entry_load(config, l: int) -> int:
    """Least fixed point of the one-pass load map on the ring."""
    config = _as_config(config)
    l = _check_capacity(l)
    u = kernels.periodic_load(np.ascontiguousarray(config.occupancies), l)
    if u < 0:
        raise CarrierNonConvergent(f"no periodic carrier load within {l + 1} passes")
    return int(u)


def evolve_periodic(config, l: int) -> tuple[Configuration, CarrierTrace]:
    """Apply T_l once on the ring."""
    config = _as_config(config)
    return evolve_open(config, l, periodic_entry_load(config, l))


def evolve(config, l: int, steps: int = 1) -> Configuration:
    """Apply T_l ``steps`` times."""
    config = _as_config(config)
    l = _check_capacity(l)
    s = np.array(config.occupancies)
    for _ in range(steps):
        u = kernels.periodic_load(s, l)
        if u < 0:
            raise CarrierNonConvergent(f"no periodic carrier load within {l + 1} passes")
        kernels.sweep(s, l, u, True)
    return Configuration(s)


def energy(config, k: int) -> int:
    """Pickup count of the periodic capacity-k carrier."""
    config = _as_config(config)
    u = periodic_entry_load(config, k)
    _e, pk = kernels.sweep(np.array(config.occupancies), k, u, False)
    return int(pk)


def energies(config, K: int) -> EnergySpectrum:
    """E_1..E_K.

    Below half filling every E_k follows from one pass that pairs each ball
    with the hole closing it; the nesting depth of a pair is the elimination
    round in which it disappears, and E_k counts pairs of depth at most k.
    """
    config = _as_config(config)
    K = _check_capacity(K)
    s = np.ascontiguousarray(config.occupancies)
    if 2 * config.Q < config.L:
        rounds = kernels.soliton_rounds(s, K + 1)
        E = np.cumsum(rounds[:K])
    else:
        E = [energy(config, k) for k in range(1, K + 1)]
    return EnergySpectrum(config.L, tuple(int(e) for e in E))


def soliton_content(spec: EnergySpectrum) -> np.ndarray:
    """Soliton multiplicities m_1..m_K from a saturated spectrum."""
    E = spec.padded()
    if spec.K == 0 or E[-1] != E[-2]:
        raise NonSaturatedSpectrum("spectrum must satisfy E_{K-1} = E_K; raise K")
    Ep = np.concatenate((E, [E[-1]]))
    return 2 * Ep[1:-1] - Ep[:-2] - Ep[2:]


def pseudoenergies(spec: EnergySpectrum, imax: int | None = None) -> np.ndarray:
    """eps_i = -ln((2E_i - E_{i-1} - E_{i+1}) / (L - 2E_i)) for i = 1..imax.

    ``imax`` defaults to K - 1, the largest index the spectrum determines.
    """
    E = spec.padded()
    imax = spec.K - 1 if imax is None else imax
    if not 1 <= imax <= spec.K - 1:
        raise DomainError(f"imax must lie in [1, {spec.K - 1}]")
    i = np.arange(1, imax + 1)
    num = 2 * E[i] - E[i - 1] - E[i + 1]
    den = spec.L - 2 * E[i]
    if np.any(num <= 0) or np.any(den <= 0):
        bad = int(i[(num <= 0) | (den <= 0)][0])
        raise UndefinedPseudoenergy(f"no soliton of size {bad} (or density >= 1/2)")
    return -np.log(num / den)


def combinatorial_R(alpha: CarrierElement, beta: CarrierElement):
    """R: B_l x B_m -> B_m x B_l with its local energy H.

    Returns ``(beta_new, alpha_new, H)``.
    """
    a = alpha.pair
    b = beta.pair
    na = [0, 0]
    nb = [0, 0]
    for i in (0, 1):
        j = 1 - i
        na[i] = a[i] + min(a[j], b[i]) - min(a[i], b[j])
        nb[i] = b[i] - min(a[j], b[i]) + min(a[i], b[j])
    return CarrierElement.from_pair(*nb), CarrierElement.from_pair(*na), min(a[0], b[1])


def generalized_current_field(config, l: int, i: int) -> CurrentField:
    """min(free slots of the T_i carrier acting after T_l, load of the T_l carrier)."""
    config = _as_config(config)
    l = _check_capacity(l)
    i = _check_capacity(i)
    s = np.ascontiguousarray(config.occupancies)
    ul = periodic_entry_load(config, l)
    ui = kernels.periodic_load_after(s, l, ul, i)
    if ui < 0:
        raise CarrierNonConvergent(f"no periodic carrier load within {i + 1} passes")
    out = np.zeros(config.L, dtype=np.int32)
    _tot, eu, ev = kernels.current_field(s, l, i, ul, ui, out)
    return CurrentField(l, i, out, int(min(i - ev, eu)))

