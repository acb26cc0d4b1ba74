"""Monte Carlo estimators tied to the exact hydrodynamic predictions.

Samples are processed in batches of 64 rings, packed one bit per ring into a
``uint64`` per site, and evolved together by the lane kernel.  Statistics go
into an :class:`Accumulator` whose sums are exact integers, so results do not
depend on how samples were split across workers.
"""
from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import tba
from ._backend import kernels
from .ensembles import Gge2tSpec, IidSpec, iid_occupancies, sample_gge2t
from .errors import CarrierNonConvergent, DomainError, ExcessExclusions
from .ldf import rate, scgf_derivatives

__all__ = [
    "exact_sum",
    "Accumulator",
    "Estimate",
    "MeasurementPlan",
    "CumulantResult",
    "Histogram",
    "SumRuleResult",
    "measure_cumulants",
    "measure_histogram",
    "histogram_theory",
    "measure_generalized_correlation",
    "measure_pseudoenergy_covariance",
    "sum_rule_check",
    "default_workers",
]

SCALE = 1074  # sums are integers in units of 2**-1074, the smallest subnormal
LANES = 64
NO_WRAP_SAFETY = 1.2
MAX_EXCLUDED = 0.01


# ---------------------------------------------------------------- exact sums

def _int_sum(a: np.ndarray) -> int:
    """Exact sum of int64 entries each below 2**53 in magnitude."""
    if a.size <= 512:
        return int(a.sum())
    pad = (-a.size) % 512
    if pad:
        a = np.concatenate((a, np.zeros(pad, dtype=np.int64)))
    return sum(a.reshape(-1, 512).sum(axis=1).tolist())


def exact_sum(values) -> int:
    """Exact sum of float64 values as an integer multiple of 2**-1074."""
    a = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        return 0
    if not np.isfinite(a).all():
        raise DomainError("non-finite value in accumulated data")
    if np.all(np.abs(a) < 2.0**52) and np.all(a == np.trunc(a)):
        return _int_sum(a.astype(np.int64)) << SCALE
    m, e = np.frexp(a)
    M = np.ldexp(m, 53).astype(np.int64)
    E = e.astype(np.int64) + (SCALE - 53)
    total = 0
    for ex in np.unique(E).tolist():
        s = _int_sum(M[E == ex])
        # a negative shift only drops zero bits: every such value is a multiple of 2**-1074
        total += s << ex if ex >= 0 else s >> -ex
    return total


def _frac(s: int) -> Fraction:
    return Fraction(s, 1 << SCALE)


@dataclass
class _Sums:
    """Power sums and cross sums over one block (or a combination of blocks)."""

    n: int = 0
    powers: dict = field(default_factory=dict)   # (channel, k) -> int
    cross: dict = field(default_factory=dict)    # (a, b) -> int

    def add(self, other: "_Sums", sign: int = 1) -> None:
        self.n += sign * other.n
        for src, dst in ((other.powers, self.powers), (other.cross, self.cross)):
            for k, v in src.items():
                dst[k] = dst.get(k, 0) + sign * v

    def copy(self) -> "_Sums":
        return _Sums(self.n, dict(self.powers), dict(self.cross))

    def S(self, ch: str, k: int) -> Fraction:
        return _frac(self.powers.get((ch, k), 0))

    def mean(self, ch: str) -> float:
        return float(self.S(ch, 1) / self.n)

    def kstat(self, ch: str, r: int) -> float:
        """Unbiased k-statistic of order r <= 4 from power sums."""
        n = self.n
        s1 = self.S(ch, 1)
        if r == 1:
            return float(s1 / n)
        s2 = self.S(ch, 2)
        if r == 2:
            return float((n * s2 - s1**2) / (n * (n - 1)))
        s3 = self.S(ch, 3)
        if r == 3:
            return float((2 * s1**3 - 3 * n * s1 * s2 + n * n * s3) / (n * (n - 1) * (n - 2)))
        s4 = self.S(ch, 4)
        if r == 4:
            num = (-6 * s1**4 + 12 * n * s1**2 * s2 - 3 * n * (n - 1) * s2**2
                   - 4 * n * (n + 1) * s1 * s3 + n * n * (n + 1) * s4)
            return float(num / (n * (n - 1) * (n - 2) * (n - 3)))
        raise ValueError("order must be 1..4")

    def cov(self, a: str, b: str) -> float:
        n = self.n
        key = (a, b) if (a, b) in self.cross else (b, a)
        if a == b:
            return self.kstat(a, 2)
        sab = _frac(self.cross.get(key, 0))
        return float((n * sab - self.S(a, 1) * self.S(b, 1)) / (n * (n - 1)))


class Accumulator:
    """Mergeable running statistics with exact sums, blocked for the jackknife.

    Rows are tagged with a sample index; rows of sample ``k`` land in block
    ``k // block_size``.  ``hist`` names an integer channel to histogram.
    """

    def __init__(self, channels: Sequence[str], order: int = 2,
                 pairs: Sequence[tuple[str, str]] = (), block_size: int = 1024,
                 hist: str | None = None):
        self.channels = tuple(channels)
        self.order = int(order)
        self.pairs = tuple(tuple(p) for p in pairs)
        self.block_size = int(block_size)
        self.hist_channel = hist
        self.blocks: dict[int, _Sums] = {}
        self.histogram: Counter = Counter()
        self.excluded = 0

    def _layout(self):
        return (self.channels, self.order, self.pairs, self.block_size, self.hist_channel)

    def add_batch(self, index, rows) -> None:
        """Add rows (n x channels) tagged by sample ``index`` (length n)."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        index = np.asarray(index, dtype=np.int64)
        if rows.shape != (index.size, len(self.channels)):
            raise ValueError("rows must be (len(index), n_channels)")
        if index.size == 0:
            return
        blk = index // self.block_size
        col = {c: i for i, c in enumerate(self.channels)}
        for b in np.unique(blk).tolist():
            sel = rows[blk == b]
            s = self.blocks.setdefault(b, _Sums())
            s.n += sel.shape[0]
            for c, i in col.items():
                x = sel[:, i]
                xp = x
                for k in range(1, self.order + 1):
                    if k > 1:
                        xp = xp * x
                    s.powers[(c, k)] = s.powers.get((c, k), 0) + exact_sum(xp)
            for a, bb in self.pairs:
                key = (a, bb)
                s.cross[key] = s.cross.get(key, 0) + exact_sum(sel[:, col[a]] * sel[:, col[bb]])
        if self.hist_channel is not None:
            vals = rows[:, col[self.hist_channel]]
            if not np.all(vals == np.trunc(vals)):
                raise DomainError("histogram channel must be integer valued")
            u, cnt = np.unique(vals.astype(np.int64), return_counts=True)
            self.histogram.update(dict(zip(u.tolist(), cnt.tolist())))

    def merge(self, other: "Accumulator") -> "Accumulator":
        """New accumulator holding both streams (exact, order independent)."""
        if self._layout() != other._layout():
            raise ValueError("cannot merge accumulators with different layouts")
        out = Accumulator(*self._layout()[:2], pairs=self.pairs, block_size=self.block_size,
                          hist=self.hist_channel)
        for src in (self, other):
            for b, s in src.blocks.items():
                out.blocks.setdefault(b, _Sums()).add(s)
            out.histogram.update(src.histogram)
            out.excluded += src.excluded
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Accumulator):
            return NotImplemented
        return (self._layout() == other._layout() and self.blocks == other.blocks
                and self.histogram == other.histogram and self.excluded == other.excluded)

    def totals(self) -> _Sums:
        t = _Sums()
        for s in self.blocks.values():
            t.add(s)
        return t

    @property
    def count(self) -> int:
        return sum(s.n for s in self.blocks.values())

    def estimate(self, fn: Callable[[_Sums], float]) -> tuple[float, float]:
        """fn on all data, with its delete-one-block jackknife standard error."""
        tot = self.totals()
        value = fn(tot)
        nb = len(self.blocks)
        if nb < 2:
            return value, math.nan
        reps = []
        for s in self.blocks.values():
            loo = tot.copy()
            loo.add(s, -1)
            reps.append(fn(loo))
        reps = np.asarray(reps)
        err = math.sqrt((nb - 1) / nb * float(np.sum((reps - reps.mean()) ** 2)))
        return value, err

    def cumulant(self, ch: str, r: int) -> tuple[float, float]:
        return self.estimate(lambda s: s.kstat(ch, r))

    def covariance(self, a: str, b: str) -> tuple[float, float]:
        return self.estimate(lambda s: s.cov(a, b))


# ---------------------------------------------------------------- plans

@dataclass(frozen=True)
class Estimate:
    name: str
    value: float
    stderr: float
    n_samples: int
    n_excluded: int = 0
    params: dict = field(default_factory=dict)

    def row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MeasurementPlan:
    """What to simulate: ensemble, dynamics T_l, horizon t, sample count.

    ``n`` is the capacity of the dynamics used for generalized correlations,
    ``m, i, j`` their indices.  The master seed is the ensemble's seed.
    """

    ensemble: IidSpec | Gge2tSpec
    l: int = 1
    t: int = 1
    samples: int = 1
    n: int | None = None
    m: int | None = None
    i: int | None = None
    j: int | None = None
    bonds: int = 8
    block_size: int | None = None
    allow_wrap: bool = False

    def __post_init__(self):
        for name in ("l", "n", "m", "i", "j"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise DomainError(f"{name} must be a positive integer, got {v!r}")
        if self.t < 0:
            raise DomainError("time horizon must be non-negative")
        if self.samples < 1:
            raise DomainError("sample count must be at least 1")
        if self.bonds < 1:
            raise DomainError("bonds must be at least 1")

    @property
    def L(self) -> int:
        return self.ensemble.L

    @property
    def seed(self) -> int:
        return self.ensemble.seed

    @property
    def az(self) -> tuple[float, float]:
        if isinstance(self.ensemble, IidSpec):
            return self.ensemble.z, self.ensemble.z
        return self.ensemble.az

    @property
    def blocksize(self) -> int:
        if self.block_size is not None:
            return self.block_size
        # about 128 jackknife blocks
        return max(1, -(-self.samples // 128))

    def v_max(self, capacity: int) -> float:
        """Fastest soliton velocity under T_capacity in this ensemble."""
        a, z = self.az
        return float(tba._vl(a, z, capacity, capacity))

    def min_length(self, capacity: int) -> int:
        return int(math.floor(2 * NO_WRAP_SAFETY * self.v_max(capacity) * self.t)) + 1

    def check_no_wrap(self, capacity: int) -> None:
        if self.allow_wrap:
            return
        need = self.min_length(capacity)
        if self.L < need:
            raise DomainError(
                f"L={self.L} lets signals wrap within t={self.t} under T_{capacity}; "
                f"need L >= {need} or allow_wrap")

    def params(self) -> dict:
        out = {"L": self.L, "l": self.l, "t": self.t, "samples": self.samples, "seed": self.seed}
        if isinstance(self.ensemble, IidSpec):
            out["density"] = self.ensemble.p
        else:
            out.update(beta1=self.ensemble.beta1, beta_inf=self.ensemble.beta_inf)
        for k in ("n", "m", "i", "j"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out


def _draw(plan: MeasurementPlan, start: int, count: int) -> np.ndarray:
    """Initial states of samples start..start+count-1 as a (count, L) uint8 array."""
    out = np.empty((count, plan.L), dtype=np.uint8)
    ens = plan.ensemble
    for k in range(count):
        if isinstance(ens, IidSpec):
            out[k] = iid_occupancies(ens.L, ens.p, ens.seed, start + k)
        else:
            out[k] = sample_gge2t(ens, start + k).occupancies
    return out


def _bond_sites(L: int, nb: int) -> np.ndarray:
    nb = min(nb, L)
    return np.unique((np.arange(nb, dtype=np.int64) * L) // nb)


def _evolve_lanes(cfg: np.ndarray, l: int, t: int, bonds: np.ndarray):
    """Evolve up to 64 rings by T_l for t steps; loads summed over time at ``bonds``."""
    w = kernels.pack_lanes(np.ascontiguousarray(cfg))
    acc = np.zeros((bonds.size, LANES), dtype=np.int64)
    if t > 0 and kernels.lane_evolve(w, l, t, bonds, acc) != 0:
        raise CarrierNonConvergent("periodic carrier not found")
    final = kernels.unpack_lanes(w, cfg.shape[0])
    return final, acc[:, : cfg.shape[0]]


def default_workers() -> int:
    return max(1, int(os.environ.get("BOXBALL_WORKERS", "1")))


def _chunks(samples: int, workers: int, block: int):
    """Split [0, samples) into contiguous ranges aligned to the block size."""
    nblocks = -(-samples // block)
    per = -(-nblocks // max(1, workers))
    out = []
    for w in range(workers):
        lo = w * per * block
        hi = min(samples, (w + 1) * per * block)
        if lo < hi:
            out.append((lo, hi))
    return out


def _run(task, plan: MeasurementPlan, workers: int | None) -> Accumulator:
    workers = default_workers() if workers is None else max(1, int(workers))
    ranges = _chunks(plan.samples, workers, plan.blocksize)
    if workers == 1 or len(ranges) == 1:
        parts = [task(plan, lo, hi) for lo, hi in ranges]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(task, [plan] * len(ranges), *zip(*ranges)))
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    return acc


def _batches(lo: int, hi: int, size: int = LANES):
    for s in range(lo, hi, size):
        yield s, min(size, hi - s)


# ---------------------------------------------------------------- cumulants

@dataclass(frozen=True)
class CumulantResult:
    """Scaled cumulants c_k = <N_t^k>^c / t, k = 1..4."""

    estimates: tuple[Estimate, ...]

    def __getitem__(self, k: int) -> Estimate:
        return self.estimates[k - 1]


def _task_transfer(plan: MeasurementPlan, lo: int, hi: int) -> Accumulator:
    bonds = _bond_sites(plan.L, plan.bonds)
    acc = Accumulator(["N"], order=4, block_size=plan.blocksize)
    for start, cnt in _batches(lo, hi):
        cfg = _draw(plan, start, cnt)
        try:
            _, N = _evolve_lanes(cfg, plan.l, plan.t, bonds)
        except CarrierNonConvergent:
            acc.excluded += cnt
            continue
        idx = np.repeat(np.arange(start, start + cnt), bonds.size)
        acc.add_batch(idx, N.T.reshape(-1, 1))
    return acc


def measure_cumulants(plan: MeasurementPlan, workers: int | None = None) -> CumulantResult:
    """Scaled cumulants of N_t, the number of balls crossing a bond in t steps of T_l.

    N_t sums the carrier load entering the bond over steps 0..t-1; it is
    recorded at ``plan.bonds`` equally spaced bonds of every ring.
    """
    if plan.t < 1:
        raise DomainError("scaled cumulants need t >= 1")
    plan.check_no_wrap(plan.l)
    acc = _run(_task_transfer, plan, workers)
    if acc.count < 5:
        raise DomainError("need at least 5 observations for fourth cumulants")
    est = []
    for r in range(1, 5):
        v, e = acc.cumulant("N", r)
        est.append(Estimate(f"c{r}", v / plan.t, e / plan.t, plan.samples, acc.excluded, plan.params()))
    return CumulantResult(tuple(est))


# ---------------------------------------------------------------- histogram

@dataclass(frozen=True)
class Histogram:
    """Integer-binned counts of N_t observed at one bond per ring."""

    values: np.ndarray
    counts: np.ndarray
    n_samples: int
    n_excluded: int = 0

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def mean(self) -> float:
        return float(self.values @ self.counts / self.counts.sum())

    def rows(self):
        return [(int(v), int(c)) for v, c in zip(self.values, self.counts)]


def measure_histogram(plan: MeasurementPlan, workers: int | None = None) -> Histogram:
    if plan.t == 0:
        return Histogram(np.array([0]), np.array([plan.samples]), plan.samples)
    plan.check_no_wrap(plan.l)
    acc = _run(_task_histogram, replace(plan, bonds=1), workers)
    keys = sorted(acc.histogram)
    return Histogram(np.array(keys, dtype=np.int64),
                     np.array([acc.histogram[k] for k in keys], dtype=np.int64),
                     plan.samples, acc.excluded)


def _task_histogram(plan: MeasurementPlan, lo: int, hi: int) -> Accumulator:
    bonds = np.zeros(1, dtype=np.int64)
    acc = Accumulator(["N"], order=2, block_size=plan.blocksize, hist="N")
    for start, cnt in _batches(lo, hi):
        cfg = _draw(plan, start, cnt)
        _, N = _evolve_lanes(cfg, plan.l, plan.t, bonds)
        acc.add_batch(np.arange(start, start + cnt), N[0].reshape(-1, 1))
    return acc


def histogram_theory(z: float, l: int, t: int, values, prefactor: bool = False) -> np.ndarray:
    """exp(-t G(N/t)) normalized over the given support of N.

    With ``prefactor`` the saddle-point factor sqrt(G''(N/t)) is included, which
    removes the leading finite-t correction; endpoints of the support get zero weight.
    """
    values = np.asarray(values, dtype=np.int64)
    if t < 1:
        raise DomainError("theory curve needs t >= 1")
    logp = np.empty(values.size)
    for k, N in enumerate(values.tolist()):
        r = rate(z, l, N / t)
        logp[k] = -t * r.value
        if prefactor:
            if not math.isfinite(r.lam):
                logp[k] = -math.inf
                continue
            # G'' = 1 / F''(lambda*)
            logp[k] -= 0.5 * math.log(scgf_derivatives(z, l, r.lam, 2)[2])
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


# ---------------------------------------------------------------- correlations

def _field_total(s: np.ndarray, l: int, i: int) -> int:
    """Ring sum of the generalized current field eta^{(l)}_i."""
    ul = kernels.periodic_load(s, l)
    ui = kernels.periodic_load_after(s, l, ul, i)
    if ul < 0 or ui < 0:
        raise CarrierNonConvergent("periodic carrier not found")
    out = np.empty(s.size, dtype=np.int32)
    tot, _, _ = kernels.current_field(s, l, i, ul, ui, out)
    return int(tot)


def _task_correlation(plan: MeasurementPlan, lo: int, hi: int) -> Accumulator:
    acc = Accumulator(["A", "B"], order=2, pairs=[("A", "B")], block_size=plan.blocksize)
    nobonds = np.zeros(0, dtype=np.int64)
    for start, cnt in _batches(lo, hi):
        cfg = _draw(plan, start, cnt)
        B = [_field_total(cfg[k], plan.l, plan.j) for k in range(cnt)]
        final, _ = _evolve_lanes(cfg, plan.n, plan.t, nobonds)
        A = [_field_total(np.ascontiguousarray(final[k]), plan.m, plan.i) for k in range(cnt)]
        acc.add_batch(np.arange(start, start + cnt), np.column_stack((A, B)))
    return acc


def measure_generalized_correlation(plan: MeasurementPlan, workers: int | None = None) -> Estimate:
    """sum_x <eta^{(m)}_i(x, t) eta^{(l)}_j(0, 0)>^c with time evolution by T_n.

    Translation averaging turns the sum into cov(sum_x A(x, t), sum_x B(x, 0)) / L.
    """
    for k in ("n", "m", "i", "j"):
        if getattr(plan, k) is None:
            raise DomainError(f"plan needs {k} for a generalized correlation")
    plan.check_no_wrap(plan.n)
    acc = _run(_task_correlation, plan, workers)
    v, e = acc.covariance("A", "B")
    name = f"C[{plan.m},{plan.l},{plan.n}]_{plan.i},{plan.j}"
    return Estimate(name, v / plan.L, e / plan.L, plan.samples, acc.excluded, plan.params())


# ---------------------------------------------------------------- pseudoenergies

def _energies_batch(cfg: np.ndarray, K: int) -> np.ndarray:
    """E_1..E_K for each row."""
    out = np.empty((cfg.shape[0], K), dtype=np.int64)
    for k in range(cfg.shape[0]):
        s = cfg[k]
        if 2 * int(s.sum()) < s.size:
            out[k] = np.cumsum(kernels.soliton_rounds(s, K + 1)[:K])
        else:
            from .dynamics import energy
            out[k] = [energy(s, q) for q in range(1, K + 1)]
    return out


def _task_pseudo(plan: MeasurementPlan, lo: int, hi: int, imax: int) -> Accumulator:
    names = [f"e{i}" for i in range(1, imax + 1)]
    pairs = [(names[a], names[b]) for a in range(imax) for b in range(a + 1, imax)]
    acc = Accumulator(names, order=2, pairs=pairs, block_size=plan.blocksize)
    L = plan.L
    for start, cnt in _batches(lo, hi, 4 * LANES):
        cfg = _draw(plan, start, cnt)
        E = np.concatenate((np.zeros((cnt, 1), dtype=np.int64), _energies_batch(cfg, imax + 1)), axis=1)
        i = np.arange(1, imax + 1)
        num = 2 * E[:, i] - E[:, i - 1] - E[:, i + 1]
        den = L - 2 * E[:, i]
        ok = np.all((num > 0) & (den > 0), axis=1)
        acc.excluded += int(cnt - ok.sum())
        eps = -np.log(num[ok] / den[ok])
        acc.add_batch(np.arange(start, start + cnt)[ok], eps)
    return acc


class _PseudoTask:
    def __init__(self, imax: int):
        self.imax = imax

    def __call__(self, plan, lo, hi):
        return _task_pseudo(plan, lo, hi, self.imax)


def measure_pseudoenergy_covariance(plan: MeasurementPlan, i_max: int,
                                    workers: int | None = None) -> tuple[np.ndarray, np.ndarray, Accumulator]:
    """L cov(eps_i, eps_j) for i, j <= i_max, with jackknife errors.

    Samples lacking a soliton species up to i_max are excluded; more than 1%
    exclusions raises ExcessExclusions.
    """
    if i_max < 1:
        raise DomainError("i_max must be at least 1")
    acc = _run(_PseudoTask(i_max), plan, workers)
    if acc.excluded > MAX_EXCLUDED * plan.samples:
        raise ExcessExclusions(f"{acc.excluded} of {plan.samples} samples lack a soliton "
                               f"species <= {i_max}; increase L")
    if acc.count < 2:
        raise ExcessExclusions("fewer than two usable samples")
    val = np.empty((i_max, i_max))
    err = np.empty((i_max, i_max))
    for a in range(i_max):
        for b in range(a, i_max):
            v, e = acc.covariance(f"e{a + 1}", f"e{b + 1}")
            val[a, b] = val[b, a] = plan.L * v
            err[a, b] = err[b, a] = plan.L * e
    return val, err, acc


# ---------------------------------------------------------------- sum rule

@dataclass(frozen=True)
class SumRuleResult:
    lhs: float
    rhs: float
    discrepancy: float
    stderr: float
    n_samples: int

    @property
    def z_score(self) -> float:
        if self.discrepancy == 0:
            return 0.0
        return abs(self.discrepancy) / self.stderr


_WEIGHTS = {"abs": lambda x: np.abs(x).astype(float), "square": lambda x: (x.astype(float)) ** 2}


def _ring_offsets(L: int) -> np.ndarray:
    x = np.arange(L)
    return np.where(x <= L // 2, x, x - L)


def _circular_autocorr(a: np.ndarray) -> np.ndarray:
    """sum_y a(x+y) a(y) per row, exact for integer data of moderate size."""
    L = a.shape[1]
    r = np.fft.irfft(np.abs(np.fft.rfft(a, axis=1)) ** 2, n=L, axis=1)
    return np.rint(r).astype(np.int64)


def _sumrule_weights(L: int, weight: str):
    f = _WEIGHTS[weight]
    x = _ring_offsets(L)
    window = np.abs(x) <= (L - 1) // 2
    fx = np.where(window, f(x), 0)
    # second difference of the truncated weight taken around the ring, so summation
    # by parts carries no boundary terms at the window edge
    wx = 2 * fx - np.roll(fx, -1) - np.roll(fx, 1)
    return fx.astype(np.int64), wx.astype(np.int64)


def _task_sumrule(plan: MeasurementPlan, lo: int, hi: int, weight: str) -> Accumulator:
    L = plan.L
    fx, wx = _sumrule_weights(L, weight)
    bonds = np.arange(L, dtype=np.int64)
    # every channel is an integer: L * (per-sample lhs), L * (per-sample rhs part), sum_x I(x)
    acc = Accumulator(["A", "B", "m"], order=1, block_size=plan.blocksize)
    for start, cnt in _batches(lo, hi):
        cfg = _draw(plan, start, cnt)
        final, I = _evolve_lanes(cfg, plan.l, plan.t, bonds)
        dn = final.astype(np.int64) - cfg
        I = np.ascontiguousarray(I.T)
        A = _circular_autocorr(dn.astype(np.float64)) @ fx
        B = _circular_autocorr(I.astype(np.float64)) @ wx
        acc.add_batch(np.arange(start, start + cnt), np.column_stack((A, B, I.sum(axis=1))))
    return acc


class _SumRuleTask:
    def __init__(self, weight: str):
        self.weight = weight

    def __call__(self, plan, lo, hi):
        return _task_sumrule(plan, lo, hi, self.weight)


def sum_rule_check(plan: MeasurementPlan, weight: str = "abs",
                   workers: int | None = None) -> SumRuleResult:
    """Both sides of the density/current sum rule for f(x) = |x| ("abs") or x^2 ("square").

    lhs = sum_x f(x) <dn(x) dn(0)>^c with dn = n(., t) - n(., 0), and
    rhs = sum_x (2f(x) - f(x+1) - f(x-1)) <I(x) I(0)>^c with I(x) the time-integrated
    current through bond x. The weight is truncated to ring offsets |x| <= (L-1)/2 and its
    second difference is taken periodically, so the two sides agree sample by sample; a
    nonzero discrepancy signals broken local conservation.
    """
    if weight not in _WEIGHTS:
        raise DomainError(f"weight must be one of {sorted(_WEIGHTS)}")
    plan.check_no_wrap(plan.l)
    if plan.t == 0:
        return SumRuleResult(0.0, 0.0, 0.0, 0.0, plan.samples)
    L = plan.L
    wsum = int(_sumrule_weights(L, weight)[1].sum())
    acc = _run(_SumRuleTask(weight), plan, workers)

    def lhs(s):
        return float(s.S("A", 1) / (s.n * L))

    def rhs(s):
        mu = s.S("m", 1) / (s.n * L)
        return float(s.S("B", 1) / (s.n * L) - mu * mu * wsum)

    lv = lhs(acc.totals())
    rv = rhs(acc.totals())
    d, e = acc.estimate(lambda s: lhs(s) - rhs(s))
    return SumRuleResult(lv, rv, d, e, plan.samples)
