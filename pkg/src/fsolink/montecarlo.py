"""Monte-Carlo channel simulator used as the independent oracle.

Samples are drawn in fixed-size blocks. Block ``j`` owns its own
generator seeded from ``(seed, j)``, and block statistics are merged in
block order, so every estimate is bitwise identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .composite import ChannelModel
from .errors import DegenerateTruncationError, DomainError
from .fog import fog_sample
from .pointing import geometric_sample, hoyt_sample, ip_map
from .tmos_acm import AcmCodeTable, TmosConfig

__all__ = [
    "McEstimate",
    "McConfig",
    "simulate_snr",
    "simulate_irradiance",
    "irradiance_histogram",
    "mc_outage",
    "mc_ansb",
    "mc_ase",
    "mc_system_ase",
    "mc_ber",
    "mc_tmos",
    "summarize_trials",
]

BLOCK_SIZE = 1 << 16
_SAMPLERS = ("hoyt", "geometric")


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "std_error", float(self.std_error))
        object.__setattr__(self, "n", int(self.n))
        if self.n < 1:
            raise DomainError("an estimate needs at least one sample")
        if not self.std_error >= 0.0:
            raise DomainError("standard error must be nonnegative")


@dataclass(frozen=True)
class McConfig:
    """Sample count, seed, worker count and displacement sampler."""

    n_samples: int = 10**6
    seed: int = 0
    workers: int = 1
    sampler: str = "hoyt"

    def __post_init__(self) -> None:
        if self.n_samples < 1000:
            raise DomainError("n_samples must be at least 1000")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.sampler not in _SAMPLERS:
            raise DomainError(f"sampler must be one of {_SAMPLERS}, got {self.sampler!r}")

    def blocks(self) -> list[tuple[int, int]]:
        """``(block index, sample count)`` pairs covering ``n_samples``."""
        full, rest = divmod(self.n_samples, BLOCK_SIZE)
        out = [(j, BLOCK_SIZE) for j in range(full)]
        if rest:
            out.append((full, rest))
        return out


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _draw_irradiance(m: ChannelModel, sampler: str, rng, size) -> np.ndarray:
    ia = fog_sample(m.fog, rng, size)
    if sampler == "hoyt":
        s = hoyt_sample(m.pointing, rng, size)
    else:
        if m.pointing.geometry is None:
            raise DomainError("the geometric sampler needs the pointing geometry")
        s = geometric_sample(m.pointing.geometry, rng, size)
    return ia * ip_map(m.pointing, s)


def _draw_snr(m: ChannelModel, sampler: str, rng, size) -> np.ndarray:
    ratio = _draw_irradiance(m, sampler, rng, size) / m.mean_irradiance
    return m.mu * ratio ** int(m.r)


def _run_blocks(task, mc: McConfig) -> list:
    blocks = mc.blocks()
    if mc.workers == 1 or len(blocks) == 1:
        return [task(b) for b in blocks]
    with ProcessPoolExecutor(max_workers=mc.workers) as pool:
        return list(pool.map(task, blocks))


def _irradiance_block(m, mc, block):
    j, count = block
    return _draw_irradiance(m, mc.sampler, _rng(mc.seed, j), count)


def _snr_block(m, mc, block):
    j, count = block
    return _draw_snr(m, mc.sampler, _rng(mc.seed, j), count)


def simulate_irradiance(m: ChannelModel, mc: McConfig):
    """Yield blocks of received irradiance ``Ia * Ip``."""
    yield from _run_blocks(partial(_irradiance_block, m, mc), mc)


def simulate_snr(m: ChannelModel, mc: McConfig):
    """Yield blocks of SNR samples ``mu (I / E[I])^r``."""
    yield from _run_blocks(partial(_snr_block, m, mc), mc)


def irradiance_histogram(m: ChannelModel, mc: McConfig, edges) -> np.ndarray:
    """Empirical density of the irradiance on the bins ``edges``."""
    edges = np.asarray(edges, dtype=float)
    counts = np.zeros(edges.size - 1)
    for block in simulate_irradiance(m, mc):
        counts += np.histogram(block, bins=edges)[0]
    return counts / (mc.n_samples * np.diff(edges))


# ---------------------------------------------------------------------------
# beam-selection trials

# per-block sums, in this order
_FIELDS = (
    "trials", "qualified_trials", "outages",
    "beams", "beams_sq",
    "rate", "rate_sq", "rate_beams",
    "err", "err_sq", "err_rate",
)


def _tmos_block(m, c: TmosConfig, t: AcmCodeTable, mc: McConfig, block) -> np.ndarray:
    j, count = block
    rng = _rng(mc.seed, j)
    gamma = _draw_snr(m, mc.sampler, rng, (count, c.H))
    qualified = gamma >= c.gamma_T
    n_q = qualified.sum(axis=1)
    any_q = n_q > 0

    # uniform choice among the qualifying beams of each trial
    pick = np.floor(rng.random(count) * np.maximum(n_q, 1)).astype(np.int64)
    rank = np.cumsum(qualified, axis=1) - 1
    chosen = qualified & (rank == pick[:, None])
    selected = np.where(chosen, gamma, 0.0).sum(axis=1)
    outages = int(np.count_nonzero(any_q & (selected < c.gamma_TH_OUT)))

    code = t.code_for(gamma)
    rates = np.concatenate([[0.0], t.rates])[code] * qualified
    a = np.array([row.a for row in t.rows])
    slope = np.array([row.b / row.M for row in t.rows])
    idx = np.maximum(code - 1, 0)
    ber = np.where(code > 0, a[idx] * np.exp(-slope[idx] * gamma), 0.0)
    rate_sum = rates.sum(axis=1)
    err_sum = (rates * ber).sum(axis=1)
    nq = n_q.astype(float)
    return np.array([
        count, int(any_q.sum()), outages,
        nq.sum(), (nq * nq).sum(),
        rate_sum.sum(), (rate_sum**2).sum(), (rate_sum * nq).sum(),
        err_sum.sum(), (err_sum**2).sum(), (err_sum * rate_sum).sum(),
    ], dtype=float)


def mc_tmos(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, mc: McConfig) -> dict:
    """Sufficient statistics of ``n_samples`` selection trials of ``H`` beams."""
    total = np.zeros(len(_FIELDS))
    for stats in _run_blocks(partial(_tmos_block, m, c, t, mc), mc):
        total += stats
    return dict(zip(_FIELDS, total))


def _mean_estimate(n: float, s1: float, s2: float) -> McEstimate:
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1.0, 1.0)
    return McEstimate(mean, math.sqrt(var / n), int(n))


def _ratio_estimate(n: float, sa: float, sb: float, saa: float, sbb: float, sab: float) -> McEstimate:
    """``sum A / sum B`` with the delta-method standard error."""
    if sb <= 0.0:
        raise DegenerateTruncationError("no qualifying beam in any trial; ratio undefined")
    ratio = sa / sb
    ma, mb = sa / n, sb / n
    cov = np.array([[saa / n - ma * ma, sab / n - ma * mb],
                    [sab / n - ma * mb, sbb / n - mb * mb]])
    grad = np.array([1.0, -ratio]) / mb
    var = max(float(grad @ cov @ grad), 0.0) / max(n - 1.0, 1.0)
    return McEstimate(ratio, math.sqrt(var), int(n))


def _outage_from(s: dict) -> McEstimate:
    n_q = s["qualified_trials"]
    if n_q == 0:
        raise DegenerateTruncationError("no trial had a qualifying beam; outage undefined")
    p = s["outages"] / n_q
    return McEstimate(p, math.sqrt(p * (1.0 - p) / n_q), int(n_q))


def _ase_from(s: dict) -> McEstimate:
    return _ratio_estimate(s["trials"], s["rate"], s["beams"], s["rate_sq"], s["beams_sq"],
                           s["rate_beams"])


def _ber_from(s: dict) -> McEstimate:
    return _ratio_estimate(s["trials"], s["err"], s["rate"], s["err_sq"], s["rate_sq"],
                           s["err_rate"])


def mc_outage(m: ChannelModel, c: TmosConfig, mc: McConfig) -> McEstimate:
    """Fraction of trials whose selected beam falls below ``gamma_TH_OUT``."""
    return _outage_from(mc_tmos(m, c, AcmCodeTable.default(), mc))


def mc_ansb(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, mc: McConfig) -> McEstimate:
    """Mean number of beams clearing ``gamma_T`` per trial."""
    s = mc_tmos(m, c, t, mc)
    return _mean_estimate(s["trials"], s["beams"], s["beams_sq"])


def mc_ase(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, mc: McConfig) -> McEstimate:
    """Mean code rate over selected beams (zero rate below the first code)."""
    return _ase_from(mc_tmos(m, c, t, mc))


def mc_system_ase(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, mc: McConfig) -> McEstimate:
    """Mean per-trial sum of code rates over the selected beams."""
    s = mc_tmos(m, c, t, mc)
    return _mean_estimate(s["trials"], s["rate"], s["rate_sq"])


def mc_ber(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, mc: McConfig) -> McEstimate:
    """Rate-weighted mean code BER over selected beams."""
    return _ber_from(mc_tmos(m, c, t, mc))


def summarize_trials(stats: dict) -> dict:
    """All selection estimates from one set of trial statistics.

    Quantities that are undefined (no qualifying beam) map to None.
    """
    out = {"ansb": _mean_estimate(stats["trials"], stats["beams"], stats["beams_sq"]),
           "system_ase": _mean_estimate(stats["trials"], stats["rate"], stats["rate_sq"])}
    for name, fn in (("outage", _outage_from), ("ase", _ase_from), ("ber", _ber_from)):
        try:
            out[name] = fn(stats)
        except DegenerateTruncationError:
            out[name] = None
    if out["ber"] is not None and stats["rate"] == 0.0:
        out["ber"] = None
    return out
