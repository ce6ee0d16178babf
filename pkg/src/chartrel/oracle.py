"""Exact reference calculators used to cross-check the simulator and the fitter.

* :func:`build_ctmc` / :func:`solve_ctmc` turn an all-exponential model into a
  continuous-time Markov chain, exploring it with the same :class:`Engine`
  the simulator uses, and solve the absorption equations directly.
* :func:`weibull_mle` solves the two-parameter Weibull likelihood equations.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .executor import Engine, EventInstance
from .faults import Exponential, FaultTable


class OracleError(ValueError):
    pass


class StateSpaceTooLarge(OracleError):
    pass


@dataclass
class CtmcModel:
    """Macro-states are ``(SystemState, frozenset of fired fault rows)``.

    ``generator`` is the full rate matrix (absorbing rows are all zero);
    ``absorbing`` maps state index to failure mode.
    """
    states: list
    generator: sp.csr_matrix
    initial: int
    absorbing: dict
    modes: tuple

    @property
    def transient(self) -> np.ndarray:
        mask = np.ones(len(self.states), dtype=bool)
        mask[list(self.absorbing)] = False
        return np.flatnonzero(mask)


@dataclass
class CtmcSolution:
    mttf: float
    probabilities: dict
    conditional_mttf: dict
    residual: float  # worst relative residual over the solved systems


def build_ctmc(engine: Engine, table: FaultTable, max_states: int = 1_000_000) -> CtmcModel:
    """Breadth-first exploration of the joint state space.

    From each transient macro-state every fault that has not fired yet and
    would change the system state spawns one transition at its rate.  Faults
    whose delivery is a no-op are dropped; that is exact only if they remain
    no-ops in every successor, which is checked along every explored edge.
    """
    for r in table:
        if not isinstance(r.distribution, Exponential):
            raise OracleError(f"fault '{r.instance}.{r.event}' is not exponential; "
                              "the CTMC oracle handles exponential faults only")
    inputs = [(EventInstance(r.system_port, r.event),) for r in table.rows]
    rates = [r.distribution.rate for r in table.rows]
    all_rows = frozenset(range(len(table)))

    start = (engine.init(), frozenset())
    index = {start: 0}
    states = [start]
    absorbing: dict = {}
    modes: list = []
    rows, cols, vals = [], [], []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        sys_state, fired = states[i]
        succ = []
        noops = set()
        for j in sorted(all_rows - fired):
            nxt, _ = engine.execute_cycle(sys_state, inputs[j])
            if nxt == sys_state:
                noops.add(j)
            else:
                succ.append((j, nxt))
        total = 0.0
        for j, nxt in succ:
            key = (nxt, fired | {j})
            k = index.get(key)
            if k is None:
                k = index[key] = len(states)
                if k >= max_states:
                    raise StateSpaceTooLarge(f"more than {max_states} reachable macro-states")
                states.append(key)
                mode = engine.is_absorbing_failure(nxt)
                if mode is not None:
                    absorbing[k] = mode
                    if mode not in modes:
                        modes.append(mode)
                else:
                    queue.append(k)
            if k not in absorbing:
                for d in noops:
                    if engine.execute_cycle(nxt, inputs[d])[0] != nxt:
                        raise OracleError(f"fault row {d} is inert in one state but not in its "
                                          "successor; the reduced chain would not be exact")
            rows.append(i)
            cols.append(k)
            vals.append(rates[j])
            total += rates[j]
        rows.append(i)
        cols.append(i)
        vals.append(-total)
    n = len(states)
    gen = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return CtmcModel(states, gen, 0, absorbing, tuple(modes))


def solve_ctmc(model: CtmcModel) -> CtmcSolution:
    """Mean time to absorption, absorption probabilities and conditional means.

    With ``Q_TT`` the transient block and ``h_k`` the probabilities of ending
    in mode ``k``::

        -Q_TT tau = 1,   -Q_TT h_k = r_k,   -Q_TT g_k = h_k

    where ``r_k`` is the rate into mode ``k``.  ``g_k`` is E[T; mode k], so the
    conditional mean is ``g_k / h_k`` at the initial state.
    """
    if model.initial in model.absorbing:
        raise OracleError("initial state is already absorbing")
    tr = model.transient
    pos = {s: k for k, s in enumerate(tr)}
    Q = model.generator.tocsc()
    A = (-Q[tr][:, tr]).tocsc()
    R = np.zeros((len(tr), len(model.modes)))
    for a, mode in model.absorbing.items():
        R[:, model.modes.index(mode)] += Q[tr][:, a].toarray().ravel()
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise OracleError(f"singular absorption system: {exc}") from None
    ones = np.ones(len(tr))
    tau = lu.solve(ones)
    H = lu.solve(R)
    G = lu.solve(H)
    residual = 0.0
    for x, b in ((tau, ones), (H, R), (G, H)):
        r = np.abs(A @ x - b).max() / max(np.abs(b).max(), 1e-300)
        residual = max(residual, float(r))
    if not np.all(np.isfinite(tau)) or np.abs(H.sum(axis=1) - 1.0).max() > 1e-8:
        raise OracleError("some transient state never reaches absorption")
    i0 = pos[model.initial]
    probs = {m: float(H[i0, k]) for k, m in enumerate(model.modes)}
    cond = {m: float(G[i0, k] / H[i0, k]) if H[i0, k] > 0 else math.nan
            for k, m in enumerate(model.modes)}
    return CtmcSolution(float(tau[i0]), probs, cond, residual)


# --------------------------------------------------------------------------
# Weibull maximum likelihood

class DegenerateSampleError(ValueError):
    pass


@dataclass
class MleResult:
    eta: float  # scale, h
    beta: float  # shape
    iterations: int
    converged: bool
    residual: float


def weibull_score(samples, eta: float, beta: float) -> tuple:
    """Mean score of the log-likelihood w.r.t. (log eta, log beta)."""
    z = np.log(np.asarray(samples, dtype=float)) - math.log(eta)
    e = np.exp(beta * z)
    return float(beta * (e.mean() - 1.0)), float(1.0 + beta * np.mean(z * (1.0 - e)))


def weibull_mle(samples, tol: float = 1e-14, max_iter: int = 200) -> MleResult:
    """Two-parameter Weibull MLE.

    The shape solves the profile equation
    ``sum(t^b ln t)/sum(t^b) - 1/b - mean(ln t) = 0`` (strictly increasing in
    b), found by Newton steps kept inside a sign-change bracket with bisection
    as fallback; the scale follows in closed form.
    """
    t = np.asarray(samples, dtype=float)
    if t.size < 2 or np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise DegenerateSampleError("need at least two finite positive samples")
    if np.unique(t).size < 2:
        raise DegenerateSampleError("all samples are equal; the Weibull MLE does not exist")
    x = np.log(t)
    y = x - x.max()
    ybar = y.mean()

    def profile(b):
        w = np.exp(b * y)
        s0, s1, s2 = w.sum(), (w * y).sum(), (w * y * y).sum()
        m1 = s1 / s0
        return m1 - 1.0 / b - ybar, s2 / s0 - m1 * m1 + 1.0 / (b * b)

    lo, hi = 1.0, 1.0
    while profile(lo)[0] >= 0:
        lo /= 2.0
    while profile(hi)[0] <= 0:
        hi *= 2.0
    b = 0.5 * (lo + hi)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g, dg = profile(b)
        if g == 0:
            converged = True
            break
        if g < 0:
            lo = b
        else:
            hi = b
        nb = b - g / dg
        if not (lo < nb < hi):
            nb = 0.5 * (lo + hi)
        if abs(nb - b) <= tol * b:
            b = nb
            converged = True
            break
        b = nb
    if not converged:
        raise OracleError(f"Weibull MLE did not converge in {max_iter} iterations")
    log_eta = x.max() + math.log(np.mean(np.exp(b * y))) / b
    eta = math.exp(log_eta)
    residual = max(abs(s) for s in weibull_score(t, eta, b))
    return MleResult(eta, float(b), it, converged, residual)
