"""Statistics over simulated lifetimes.

* :func:`summarize_lifetime` -- mean time to failure, standard error, quantiles
  and failure-mode split of a batch.
* :func:`fit_weibull` -- maximises the mean Weibull log density of observed
  failure times (the evidence lower bound with nothing conditioned) by Adam
  on ``(log eta, log beta)`` with closed-form gradients.
* :func:`conditional_lifetime`, :func:`sensitivity` -- conditioning on
  discrete simulator outputs by indicator weights.
* :func:`export_histogram` -- binned (weighted) lifetimes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .executor import Engine
from .faults import FaultTable
from .presim import SimOutcome, run_batch

QUANTILES = (0.01, 0.05, 0.5, 0.95, 0.99)


class EmptySampleError(ValueError):
    pass


class ConditionNeverObserved(RuntimeError):
    """No simulated outcome satisfies the condition; carries raw mode counts."""

    def __init__(self, condition: str, frequencies: dict):
        counts = ", ".join(f"{k}: {v}" for k, v in sorted(frequencies.items())) or "none"
        super().__init__(f"condition never observed: {condition} (outcomes by mode: {counts})")
        self.condition = condition
        self.frequencies = frequencies


class NonFiniteObjectiveError(FloatingPointError):
    pass


class DegenerateSampleError(ValueError):
    pass


# --------------------------------------------------------------------------
# summaries

@dataclass
class LifetimeSummary:
    n: int  # outcomes with positive weight (failed or survived)
    mean_ttf: float  # h, over failed outcomes
    std_error: float  # h
    quantiles: dict  # probability -> h
    mode_split: dict  # failure mode -> probability among failures
    survived: int = 0
    effective_n: float = 0.0

    def to_dict(self) -> dict:
        return {"n": self.n, "mean_ttf_h": self.mean_ttf, "std_error_h": self.std_error,
                "quantiles_h": {str(q): v for q, v in self.quantiles.items()},
                "mode_split": dict(self.mode_split), "survived": self.survived,
                "effective_n": self.effective_n}


def _weighted_quantiles(t: np.ndarray, w: np.ndarray) -> dict:
    if np.all((w == 0) | (w == 1)):
        sub = t[w == 1]
        return {q: float(v) for q, v in zip(QUANTILES, np.quantile(sub, QUANTILES))}
    order = np.argsort(t, kind="stable")
    t, w = t[order], w[order]
    keep = w > 0
    t, w = t[keep], w[keep]
    c = np.cumsum(w)
    pos = (c - 0.5 * w) / c[-1]
    return {q: float(np.interp(q, pos, t)) for q in QUANTILES}


def _summary(times, modes, weights=None, survived: int = 0) -> LifetimeSummary:
    t = np.asarray(times, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    if t.size == 0 or not np.any(w > 0):
        raise EmptySampleError("no failed outcome with positive weight")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    sw = math.fsum(w)
    mean = math.fsum(w * t) / sw
    ess = sw * sw / math.fsum(w * w)
    if ess > 1:
        var = math.fsum(w * (t - mean) ** 2) / sw * ess / (ess - 1.0)
        se = math.sqrt(var / ess)
    else:
        se = 0.0
    split: dict = {}
    for m, wi in zip(modes, w):
        if wi > 0:
            split[m] = split.get(m, 0.0) + float(wi)
    split = {m: v / sw for m, v in sorted(split.items())}
    n = int(np.count_nonzero(w > 0)) + survived
    return LifetimeSummary(n, mean, se, _weighted_quantiles(t, w), split, survived, ess)


def summarize_lifetime(outcomes: Sequence[SimOutcome]) -> LifetimeSummary:
    """Empirical summary; quantiles use linear (type 7) interpolation.

    Survivors of a horizon are counted but excluded from the time statistics.
    """
    if len(outcomes) == 0:
        raise EmptySampleError("no outcomes to summarise")
    failed = [o for o in outcomes if not o.survived]
    return _summary([o.failure_time for o in failed], [o.failure_mode for o in failed],
                    survived=len(outcomes) - len(failed))


# --------------------------------------------------------------------------
# Weibull fit

def weibull_logpdf(t, eta: float, beta: float) -> np.ndarray:
    z = np.log(np.asarray(t, dtype=float)) - math.log(eta)
    return math.log(beta) - math.log(eta) + (beta - 1.0) * z - np.exp(beta * z)


def weibull_objective_and_grad(t, log_eta: float, log_beta: float) -> tuple:
    """Mean log density and its gradient w.r.t. ``(log eta, log beta)``.

    With ``z = ln t - a`` and ``b = e^{log beta}``::

        log q = log beta - a + (b - 1) z - e^{b z}
        d/da  = b (e^{b z} - 1)
        d/dlog beta = 1 + b z (1 - e^{b z})
    """
    beta = math.exp(log_beta)
    z = np.log(np.asarray(t, dtype=float)) - log_eta
    e = np.exp(beta * z)
    obj = log_beta - log_eta + (beta - 1.0) * np.mean(z) - np.mean(e)
    ga = beta * (np.mean(e) - 1.0)
    gb = 1.0 + beta * np.mean(z * (1.0 - e))
    return float(obj), np.array([ga, gb])


@dataclass
class WeibullFit:
    eta: float  # scale, h
    beta: float  # shape
    elbo_trace: np.ndarray = field(repr=False)
    n_steps: int = 0
    learning_rate: float = 0.0
    seed: int = 0
    ks_distance: float = math.nan  # against the fitted samples; informational only

    def to_dict(self) -> dict:
        return {"eta_h": self.eta, "beta": self.beta, "n_steps": self.n_steps,
                "learning_rate": self.learning_rate, "seed": self.seed,
                "final_elbo": float(self.elbo_trace[-1]), "ks_distance": self.ks_distance}


def fit_weibull(samples=None, n_steps: int = 10_000, learning_rate: float = 0.05, seed: int = 0,
                sampler: Optional[Callable[[int, int], np.ndarray]] = None,
                batch_size: int = 64, init: Optional[tuple] = None,
                betas: tuple = (0.9, 0.999), eps: float = 1e-8,
                amsgrad: bool = True) -> WeibullFit:
    """Fit Weibull (eta, beta) to failure times by stochastic gradient ascent.

    Parameters
    ----------
    samples
        Fixed set of failure times in hours; every step uses the whole set.
    sampler
        Alternative to ``samples``: ``sampler(step, batch_size)`` returns fresh
        failure times for each step.
    init
        Starting ``(eta, beta)``.  Defaults to the sample mean and shape 1.
    amsgrad
        Normalise by the running maximum of the second-moment estimate.  Plain
        Adam (``False``) keeps taking steps of size ~``learning_rate`` once the
        gradient of a fixed-sample objective has vanished, which shows up as
        recurring spikes in the trace after convergence.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be positive")
    if (samples is None) == (sampler is None):
        raise ValueError("give exactly one of samples or sampler")
    if samples is not None:
        data = np.asarray(samples, dtype=float)
        if data.size == 0:
            raise EmptySampleError("no failure times to fit")
        if np.any(~np.isfinite(data)) or np.any(data <= 0):
            raise NonFiniteObjectiveError("failure times must be finite and positive; "
                                          "the log density is not finite at zero")
        if np.ptp(data) == 0:
            raise DegenerateSampleError("all failure times are equal; the shape would diverge")
        batch = lambda step: data  # noqa: E731
        first = data
    else:
        batch = lambda step: np.asarray(sampler(step, batch_size), dtype=float)  # noqa: E731
        first = batch(-1)
    if init is None:
        theta = np.array([math.log(float(np.mean(first))), 0.0])
    else:
        theta = np.array([math.log(init[0]), math.log(init[1])])

    b1, b2 = betas
    m = np.zeros(2)
    v = np.zeros(2)
    vmax = np.zeros(2)
    trace = np.empty(n_steps)
    for step in range(n_steps):
        obj, g = weibull_objective_and_grad(batch(step), theta[0], theta[1])
        if not (math.isfinite(obj) and np.all(np.isfinite(g))):
            raise NonFiniteObjectiveError(f"objective became non-finite at step {step}")
        trace[step] = obj
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1 ** (step + 1))
        vhat = v / (1.0 - b2 ** (step + 1))
        if amsgrad:
            vmax = np.maximum(vmax, vhat)
            vhat = vmax
        theta = theta + learning_rate * mhat / (np.sqrt(vhat) + eps)
    eta, beta = math.exp(theta[0]), math.exp(theta[1])
    ks = math.nan
    if samples is not None:
        ks = float(stats.kstest(data, stats.weibull_min(beta, scale=eta).cdf).statistic)
    return WeibullFit(eta, beta, trace, n_steps, learning_rate, seed, ks)


# --------------------------------------------------------------------------
# conditioning

@dataclass
class WeightedSampleSet:
    times: np.ndarray  # h
    weights: np.ndarray
    modes: tuple
    condition: str

    @property
    def effective_sample_size(self) -> float:
        s = math.fsum(self.weights)
        return 0.0 if s == 0 else s * s / math.fsum(self.weights * self.weights)

    def summary(self) -> LifetimeSummary:
        return _summary(self.times, self.modes, self.weights)


def _frequencies(outcomes) -> dict:
    freq: dict = {}
    for o in outcomes:
        k = o.failure_mode or "survived"
        freq[k] = freq.get(k, 0) + 1
    return freq


def conditional_lifetime(engine: Engine, table: FaultTable, seed: int, mode: str, n: int,
                         workers: int = 1, outcomes: Optional[Sequence[SimOutcome]] = None
                         ) -> WeightedSampleSet:
    """Lifetimes weighted by the indicator ``failure_mode == mode``.

    For a point condition on a discrete output this is exactly rejection
    sampling.  Pass ``outcomes`` to reuse an existing batch.
    """
    if outcomes is None:
        outcomes = run_batch(engine, table, seed, n, workers=workers)
    failed = [o for o in outcomes if not o.survived]
    w = np.array([1.0 if o.failure_mode == mode else 0.0 for o in failed])
    condition = f"failure_mode == {mode}"
    if not np.any(w > 0):
        raise ConditionNeverObserved(condition, _frequencies(outcomes))
    return WeightedSampleSet(np.array([o.failure_time for o in failed]), w,
                             tuple(o.failure_mode for o in failed), condition)


@dataclass
class SensitivityResult:
    target: str
    horizon: float  # h
    conditioned: LifetimeSummary
    unconditioned: LifetimeSummary
    samples: WeightedSampleSet

    @property
    def delta(self) -> float:
        """Conditioned minus unconditioned mean time to failure (h)."""
        return self.conditioned.mean_ttf - self.unconditioned.mean_ttf

    def to_dict(self) -> dict:
        return {"target": self.target, "horizon_h": self.horizon, "delta_mttf_h": self.delta,
                "conditioned": self.conditioned.to_dict(),
                "unconditioned": self.unconditioned.to_dict()}


def sensitivity(engine: Engine, table: FaultTable, seed: int, target_instance: str,
                horizon: float, n: int, workers: int = 1,
                outcomes: Optional[Sequence[SimOutcome]] = None) -> SensitivityResult:
    """Lifetime given that ``target_instance`` suffered a fault by ``horizon``.

    The weight of a replica is 1 if any fault of the target was delivered at
    or before ``horizon`` (and hence no later than the system failure).
    """
    if not table.for_instance(target_instance):
        raise ValueError(f"instance '{target_instance}' has no fault annotation")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if outcomes is None:
        outcomes = run_batch(engine, table, seed, n, workers=workers)
    failed = [o for o in outcomes if not o.survived]
    w = np.array([1.0 if any(f.instance == target_instance and f.time <= horizon
                             for f in o.consumed_faults) else 0.0 for o in failed])
    condition = f"{target_instance} faulted by {horizon:g} h"
    if not np.any(w > 0):
        raise ConditionNeverObserved(condition, _frequencies(outcomes))
    ws = WeightedSampleSet(np.array([o.failure_time for o in failed]), w,
                           tuple(o.failure_mode for o in failed), condition)
    return SensitivityResult(target_instance, horizon, ws.summary(),
                             summarize_lifetime(outcomes), ws)


# --------------------------------------------------------------------------
# histograms

@dataclass
class Histogram:
    edges: np.ndarray  # h, len = bins + 1
    mass: np.ndarray

    def write_csv(self, fp: IO[str]) -> None:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(["bin_left_h", "bin_right_h", "mass"])
        for a, b, m in zip(self.edges[:-1], self.edges[1:], self.mass):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(m))])


def export_histogram(samples, weights=None, bin_count: Optional[int] = None,
                     bin_width: Optional[float] = None, upper: Optional[float] = None) -> Histogram:
    """Left-closed bins from 0 up to ``upper`` (default: the largest sample).

    The last bin also holds samples equal to ``upper``.  The total mass equals
    the sum of the weights.
    """
    t = np.asarray(samples, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    if t.size == 0 or not np.any(w > 0):
        raise EmptySampleError("histogram needs at least one sample with positive weight")
    if (bin_count is None) == (bin_width is None):
        raise ValueError("give exactly one of bin_count or bin_width")
    top = float(t[w > 0].max()) if upper is None else float(upper)
    if top < t[w > 0].max():
        raise ValueError("upper bound is below the largest weighted sample")
    if bin_width is not None:
        if not bin_width > 0:
            raise ValueError("bin_width must be positive")
        k = max(1, math.ceil(top / bin_width))
        edges = bin_width * np.arange(k + 1)
    else:
        if bin_count < 1:
            raise ValueError("bin_count must be at least 1")
        edges = np.linspace(0.0, top if top > 0 else 1.0, bin_count + 1)
    mass, _ = np.histogram(t[w > 0], bins=edges, weights=w[w > 0])
    return Histogram(edges, mass)
