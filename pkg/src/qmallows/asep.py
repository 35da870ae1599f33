"""Continuous-time multi-species ASEP on finite windows.

Each adjacent pair of labels (a, b) swaps at rate 1 if a > b (the swap
sorts the pair) and at rate q if a < b.  Windows are closed: nothing
crosses their ends, and positions outside carry the identity.  A closed
window started from a sample of the Mallows product measure stays
stationary, because the conditional law of the window word given the
outside is proportional to q^{inv}.

Two simulators live here.  ``simulate`` is event driven and produces a
trajectory for one window.  The ensemble routines evolve many windows at
once by uniformization: proposals arrive at rate (number of bonds), pick
a uniform bond and are accepted with probability equal to that bond's
rate.  Both are exact in law.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import permutations
from typing import NamedTuple

import numpy as np

from .measures import inversions
from .qseries import DEFAULT_POLICY, MallowsParams, TruncationPolicy
from .sampler import sample_windows
from .stats import EmpiricalDist, rate_ci


@dataclass
class AsepWindowState:
    """Labels at positions left, left+1, ..., left+len(labels)-1.

    ``mode="raw"`` holds distinct permutation values with the identity
    outside the window; ``mode="classes"`` holds projected class labels.
    """

    left: int
    labels: np.ndarray
    mode: str = "raw"
    clock: float = 0.0

    def __post_init__(self):
        self.labels = np.array(self.labels, dtype=np.int64)
        if self.mode not in ("raw", "classes"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "raw" and len(np.unique(self.labels)) != len(self.labels):
            raise ValueError("raw labels must be distinct")
        if self.clock < 0:
            raise ValueError("clock must be non-negative")

    @property
    def right(self) -> int:
        return self.left + len(self.labels) - 1

    @classmethod
    def identity(cls, L: int) -> "AsepWindowState":
        return cls(-L, np.arange(-L, L + 1))

    def project(self, thresholds) -> "AsepWindowState":
        """Class label = number of thresholds strictly below the value."""
        if self.mode != "raw":
            raise ValueError("projection needs raw labels")
        cls_labels = np.searchsorted(np.sort(thresholds), self.labels, side="left")
        return AsepWindowState(self.left, cls_labels, "classes", self.clock)

    def value_at(self, a: int) -> int:
        if self.left <= a <= self.right:
            return int(self.labels[a - self.left])
        if self.mode != "raw":
            raise ValueError("outside the window only raw labels are defined")
        return a


class JumpEvent(NamedTuple):
    time: float
    bond: tuple
    kind: str  # "sort" (rate 1) or "antisort" (rate q)


class RateEstimate(NamedTuple):
    x: int
    direction: int
    jumps: int
    occupation_time: float
    rate: float
    stderr: float
    lo: float
    hi: float


def _bond_rates(labels: np.ndarray, q: float) -> np.ndarray:
    a, b = labels[:-1], labels[1:]
    return np.where(a > b, 1.0, np.where(a < b, q, 0.0))


def simulate(state: AsepWindowState, p: MallowsParams, t_max: float, rng: np.random.Generator):
    """Event-driven evolution of one window up to time ``state.clock + t_max``.

    Returns the new state and the list of JumpEvents.
    """
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    labels = state.labels.copy()
    q = p.q
    t_end = state.clock + t_max
    clock = state.clock
    events = []
    if len(labels) < 2:
        return replace(state, labels=labels, clock=t_end), events
    rates = _bond_rates(labels, q)
    while True:
        total = rates.sum()
        if total <= 0:
            clock = t_end
            break
        clock += rng.exponential(1.0 / total)
        if clock > t_end:
            clock = t_end
            break
        b = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        b = min(b, len(rates) - 1)
        kind = "sort" if labels[b] > labels[b + 1] else "antisort"
        labels[b], labels[b + 1] = labels[b + 1], labels[b]
        events.append(JumpEvent(clock, (state.left + b, state.left + b + 1), kind))
        for c in (b - 1, b, b + 1):
            if 0 <= c < len(rates):
                x, y = labels[c], labels[c + 1]
                rates[c] = 1.0 if x > y else (q if x < y else 0.0)
    return replace(state, labels=labels, clock=clock), events


def simulate_discretized(state: AsepWindowState, p: MallowsParams, t_max: float, dt: float,
                         rng: np.random.Generator) -> AsepWindowState:
    """Fixed-step approximation: per step each bond fires with probability rate * dt, left to right."""
    labels = state.labels[None, :].copy()
    discretized_ensemble(labels, p.q, t_max, dt, rng)
    return replace(state, labels=labels[0], clock=state.clock + t_max)


def discretized_ensemble(labels: np.ndarray, q: float, t: float, dt: float, rng: np.random.Generator):
    """Row-wise fixed-step dynamics, in place; bonds are visited left to right within a step."""
    n, w = labels.shape
    rows = np.arange(n)
    for _ in range(int(round(t / dt))):
        fire = rng.random((n, w - 1))
        for b in range(w - 1):
            x, y = labels[:, b], labels[:, b + 1]
            r = np.where(x > y, 1.0, np.where(x < y, q, 0.0))
            sw = rows[fire[:, b] < r * dt]
            labels[sw, b], labels[sw, b + 1] = y[sw], x[sw]
    return labels


# ---- ensembles ------------------------------------------------------------

def evolve_ensemble(labels: np.ndarray, q: float, t: float, rng: np.random.Generator,
                    tag=None, record_from: float = 0.0, batches: int = 1):
    """Evolve every row of ``labels`` for time ``t`` in place.

    If ``tag`` is a label value, the tagged label's position index is
    followed; returns ``(occupation, jumps_right, jumps_left)`` arrays of
    shape (batches, width), accumulated over [record_from, t].  Row r
    contributes to batch r % batches.
    """
    n, w = labels.shape
    nb = w - 1
    clock = np.zeros(n)
    rows = np.arange(n)
    track = tag is not None
    if track:
        pos = np.argmax(labels == tag, axis=1)
        if not np.all(labels[rows, pos] == tag):
            raise ValueError("tagged label missing from some rows")
        grp = rows % batches
        occ = np.zeros((batches, w))
        jr = np.zeros((batches, w), dtype=np.int64)
        jl = np.zeros((batches, w), dtype=np.int64)
    active = rows
    while active.size:
        dt = rng.exponential(1.0 / nb, active.size)
        new = clock[active] + dt
        if track:
            span = np.minimum(new, t) - np.maximum(clock[active], record_from)
            np.add.at(occ, (grp[active], pos[active]), np.maximum(span, 0.0))
        clock[active] = new
        active = active[new < t]
        if not active.size:
            break
        b = rng.integers(0, nb, active.size)
        u = rng.random(active.size)
        x = labels[active, b]
        y = labels[active, b + 1]
        r = np.where(x > y, 1.0, np.where(x < y, q, 0.0))
        acc = u < r
        ra, ba = active[acc], b[acc]
        labels[ra, ba], labels[ra, ba + 1] = y[acc], x[acc]
        if track:
            counting = clock[ra] >= record_from
            right = pos[ra] == ba
            left = pos[ra] == ba + 1
            m = right & counting
            np.add.at(jr, (grp[ra[m]], ba[m]), 1)
            m = left & counting
            np.add.at(jl, (grp[ra[m]], ba[m] + 1), 1)
            pos[ra[right]] += 1
            pos[ra[left]] -= 1
    if track:
        return occ, jr, jl
    return None


def stationary_windows(p: MallowsParams, L: int, n: int, rng: np.random.Generator,
                       policy: TruncationPolicy = DEFAULT_POLICY, require=None) -> np.ndarray:
    """(n, 2L+1) raw windows on [-L, L] drawn from the product measure.

    Rows lacking the value ``require`` are redrawn.
    """
    out, _ = sample_windows(p, -L, 2 * L + 1, n, rng, policy)
    if require is not None:
        for _ in range(1000):
            bad = ~np.any(out == require, axis=1)
            if not bad.any():
                break
            out[bad], _ = sample_windows(p, -L, 2 * L + 1, int(bad.sum()), rng, policy)
        else:
            raise RuntimeError(f"value {require} keeps falling outside the window; enlarge L")
    return out


def run_step_convergence(p: MallowsParams, L: int, t: float, replicas: int, coords,
                         rng: np.random.Generator) -> EmpiricalDist:
    """Start every replica from the identity on [-L, L], run to time t, histogram omega at ``coords``.

    The value of alpha plays no role: a frozen identity keeps the balance
    at zero, so the window relaxes to the balance-zero ergodic law.
    """
    coords = list(coords)
    if any(abs(c) > L for c in coords):
        raise ValueError("coordinates must lie in the window")
    labels = np.tile(np.arange(-L, L + 1), (replicas, 1))
    if t > 0:
        evolve_ensemble(labels, p.q, t, rng)
    cols = [c + L for c in coords]
    if len(cols) == 1:
        return EmpiricalDist.from_samples(labels[:, cols[0]])
    return EmpiricalDist.from_samples(labels[:, cols])


def batch_stderr(jumps: np.ndarray, occupation: np.ndarray) -> float:
    """Standard error of sum(jumps)/sum(occupation) from independent batch totals."""
    B = len(jumps)
    T = occupation.sum()
    if B < 2 or T <= 0:
        return float("inf")
    r = jumps.sum() / T
    return float(np.sqrt(B / (B - 1) * np.sum((jumps - r * occupation) ** 2)) / T)


@dataclass
class SecondClassRun:
    estimates: list
    position_law: EmpiricalDist
    insufficient: list = field(default_factory=list)


def estimate_second_class_rates(p: MallowsParams, L: int, t_max: float, replicas: int, x_range,
                                rng: np.random.Generator, burn_in: float = 0.0, batches: int = 20,
                                policy: TruncationPolicy = DEFAULT_POLICY) -> SecondClassRun:
    """Jump rates of the second-class particle (the value 0) from a stationary start.

    Each replica is a product-measure window on [-L, L].  Projecting values
    below 0 to holes and above 0 to first-class particles makes the value 0
    the second-class particle; its moves are those of the raw dynamics.
    Rates are jumps / occupation time.  The reported stderr is the larger
    of rate/sqrt(jumps) and a batch-means error over groups of replicas,
    since the particle's jumps are correlated through its surroundings.
    Sites with no occupation are listed in ``insufficient``.
    """
    labels = stationary_windows(p, L, replicas, rng, policy, require=0)
    occ, jr, jl = evolve_ensemble(labels, p.q, t_max, rng, tag=0, record_from=burn_in,
                                  batches=batches)
    estimates, missing = [], []
    for x in x_range:
        ix = x + L
        T = float(occ[:, ix].sum()) if 0 <= ix < occ.shape[1] else 0.0
        if T <= 0:
            missing.append(x)
            continue
        for direction, J in ((1, jr[:, ix]), (-1, jl[:, ix])):
            jumps = int(J.sum())
            rate, lo, hi = rate_ci(jumps, T)
            se = max(rate / np.sqrt(jumps), batch_stderr(J, occ[:, ix])) if jumps else hi
            estimates.append(RateEstimate(x, direction, jumps, T, rate, float(se), lo, hi))
    total = occ.sum(axis=0)
    support = list(range(-L, L + 1))
    return SecondClassRun(estimates, EmpiricalDist(support, total, float(total.sum())), missing)


# ---- exact checks ---------------------------------------------------------

def asep_generator(n: int, q: float):
    """Generator matrix of the closed n-site ASEP on S_n and the weights q^{inv}.

    Returns ``(states, Q, pi)`` with ``pi`` normalized.
    """
    states = list(permutations(range(n)))
    index = {s: k for k, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for k, s in enumerate(states):
        for b in range(n - 1):
            t = list(s)
            t[b], t[b + 1] = t[b + 1], t[b]
            Q[k, index[tuple(t)]] += 1.0 if s[b] > s[b + 1] else q
    Q[np.diag_indices_from(Q)] = -Q.sum(axis=1)
    w = np.array([q ** inversions(s) for s in states])
    return states, Q, w / w.sum()


def exact_reversibility_check(n: int, q: float) -> float:
    """Largest |pi(s) r(s->t) - pi(t) r(t->s)| over pairs of states, n labels on n sites."""
    if not 2 <= n <= 6:
        raise ValueError("n must lie in [2, 6]")
    _, Q, pi = asep_generator(n, q)
    flux = pi[:, None] * Q
    off = ~np.eye(len(pi), dtype=bool)
    return float(np.max(np.abs(flux - flux.T)[off]))


# ---- ASEP(q, M) -----------------------------------------------------------

def asepqm_pair_moves(q: float, M: int, s1: tuple, s2: tuple, table: str = "corrected"):
    """Moves across a bond between sites with contents s1 = (n1, b1) and s2 = (n2, b2).

    Each content is (first-class count, second-class count).  Returns a list
    of ``(new_s1, new_s2, rate)``.  ``table="printed"`` reproduces the rate
    table as usually quoted, whose second and fourth moves out of
    {(n1,0),(n2,1)} carry one power of q too many; ``"corrected"`` is the
    reversible version.
    """
    if table not in ("corrected", "printed"):
        raise ValueError("table must be 'corrected' or 'printed'")
    (n1, b1), (n2, b2) = s1, s2
    if b1 + b2 > 1 or n1 + b1 > M or n2 + b2 > M or min(n1, n2, b1, b2) < 0:
        raise ValueError(f"inadmissible pair {s1}, {s2}")
    D = (1 - q ** M) ** 2
    moves = []
    if b1 == 1:
        moves = [
            ((n1 - 1, 1), (n2 + 1, 0), (1 - q ** n1) * (1 - q ** (M - n2))),
            ((n1, 0), (n2, 1), (1 - q) * q ** n1 * (1 - q ** (M - n2))),
            ((n1 + 1, 1), (n2 - 1, 0), q * (q ** (n1 + 1) - q ** M) * (q ** (M - n2) - q ** M)),
            ((n1 + 1, 0), (n2 - 1, 1), (1 - q) * q ** n1 * (q ** (M - n2) - q ** M) * q),
        ]
    elif b2 == 1:
        extra = 1 if table == "printed" else 0
        moves = [
            ((n1 - 1, 0), (n2 + 1, 1), (1 - q ** n1) * (1 - q ** (M - n2 - 1))),
            ((n1 - 1, 1), (n2 + 1, 0), (1 - q ** n1) * (1 - q) * q ** (M - n2 - 1 + extra)),
            ((n1 + 1, 0), (n2 - 1, 1), q * (q ** n1 - q ** M) * (q ** (M - n2) - q ** M)),
            ((n1, 1), (n2, 0), (q ** n1 - q ** M) * (1 - q) * q ** (M - n2 + extra)),
        ]
    else:
        moves = [
            ((n1 - 1, 0), (n2 + 1, 0), (1 - q ** n1) * (1 - q ** (M - n2))),
            ((n1 + 1, 0), (n2 - 1, 0), q * (q ** n1 - q ** M) * (q ** (M - n2) - q ** M)),
        ]
    out = []
    for a, b, r in moves:
        ok = min(a + b) >= 0 and sum(a) <= M and sum(b) <= M
        if ok and r > 0:
            out.append((a, b, r / D))
    return out


def _class_words(M: int, contents):
    # all arrangements of class letters (0 hole, 1 second, 2 first) inside each block
    blocks = []
    for n, b in contents:
        letters = [2] * n + [1] * b + [0] * (M - n - b)
        blocks.append(sorted(set(permutations(letters))))
    words = [()]
    for opts in blocks:
        words = [w + o for w in words for o in opts]
    return words


def _compositions(total, parts, cap):
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(min(total, cap) + 1):
        for rest in _compositions(total - first, parts - 1, cap):
            yield (first,) + rest


def asepqm_reversibility_check(q: float, M: int, sites: int, first: int, table: str = "corrected") -> float:
    """Detailed-balance residual of ASEP(q, M) with one second-class particle on a closed segment.

    The reference measure is the projected Mallows weight: a configuration
    gets the sum of q^{inv(word)} over class words whose blocks of length
    M carry the configuration's contents.
    """
    states = []
    for ns in _compositions(first, sites, M):
        for s in range(sites):
            if ns[s] < M:
                states.append(tuple((n, 1 if j == s else 0) for j, n in enumerate(ns)))
    weight = {}
    for st in states:
        weight[st] = sum(q ** inversions(w) for w in _class_words(M, st))
    Z = sum(weight.values())
    worst = 0.0
    for st in states:
        for j in range(sites - 1):
            for a, b, r in asepqm_pair_moves(q, M, st[j], st[j + 1], table):
                new = list(st)
                new[j], new[j + 1] = a, b
                new = tuple(new)
                back = [rr for aa, bb, rr in asepqm_pair_moves(q, M, a, b, table)
                        if aa == st[j] and bb == st[j + 1]]
                rb = back[0] if back else 0.0
                worst = max(worst, abs(weight[st] * r - weight[new] * rb) / Z)
    return worst


def _site_index(M: int, n: int, b: int) -> int:
    return n if b == 0 else M + 1 + n


def _pair_tables(q: float, M: int, table: str):
    ns = 2 * M + 1
    contents = [(n, 0) for n in range(M + 1)] + [(n, 1) for n in range(M)]
    to1 = np.zeros((ns, ns, 4), dtype=np.int64)
    to2 = np.zeros((ns, ns, 4), dtype=np.int64)
    cum = np.zeros((ns, ns, 4))
    for i, s1 in enumerate(contents):
        for j, s2 in enumerate(contents):
            to1[i, j] = i
            to2[i, j] = j
            if s1[1] + s2[1] > 1:
                continue
            acc = 0.0
            for t, (a, b, r) in enumerate(asepqm_pair_moves(q, M, s1, s2, table)):
                acc += r
                to1[i, j, t] = _site_index(M, *a)
                to2[i, j, t] = _site_index(M, *b)
                cum[i, j, t] = acc
            cum[i, j, len(asepqm_pair_moves(q, M, s1, s2, table)):] = np.inf
    cum[cum == 0] = np.inf
    finite = np.where(np.isfinite(cum), cum, 0.0)
    return to1, to2, cum, float(finite.max())


@dataclass
class AsepQMRun:
    """Time-averaged site law plus per-batch jump counts (shape (batches, sites))."""

    site_law: EmpiricalDist
    jumps_right: np.ndarray
    jumps_left: np.ndarray
    sites: np.ndarray

    def flux_imbalance(self):
        """Net right-minus-left crossings of each bond and a batch-means stderr."""
        net = self.jumps_right[:, :-1] - self.jumps_left[:, 1:]
        B = net.shape[0]
        se = np.sqrt(B * net.var(axis=0, ddof=1)) if B > 1 else np.full(net.shape[1], np.inf)
        return net.sum(axis=0), se


def asepqm_initial(p: MallowsParams, M: int, L: int, n: int, rng: np.random.Generator,
                   policy: TruncationPolicy = DEFAULT_POLICY) -> np.ndarray:
    """(n, 2L+1) site-state indices from product-measure windows grouped into blocks of M."""
    k = (2 * L + 1) * M
    vals, _ = sample_windows(p, -L * M + 1, k, n, rng, policy)
    for _ in range(1000):
        bad = ~np.any(vals == 0, axis=1)
        if not bad.any():
            break
        vals[bad], _ = sample_windows(p, -L * M + 1, k, int(bad.sum()), rng, policy)
    blocks = vals.reshape(n, 2 * L + 1, M)
    first = np.sum(blocks > 0, axis=2)
    second = np.sum(blocks == 0, axis=2)
    return np.where(second == 1, M + 1 + first, first)


def simulate_asepqm(p: MallowsParams, M: int, L: int, t_max: float, burn_in: float | None,
                    rng: np.random.Generator, replicas: int = 200, table: str = "corrected",
                    batches: int = 20, policy: TruncationPolicy = DEFAULT_POLICY) -> AsepQMRun:
    """ASEP(q, M) with one second-class particle on sites [-L, L], closed at both ends.

    Replicas start from the product measure projected to blocks
    [xM+1, (x+1)M].  Returns the time-averaged site law of the
    second-class particle after ``burn_in`` (default t_max/5) and its
    jump counts across every bond.
    """
    if M < 1:
        raise ValueError("M must be positive")
    if burn_in is None:
        burn_in = t_max / 5
    if not 0 <= burn_in < t_max:
        raise ValueError("need 0 <= burn_in < t_max")
    to1, to2, cum, lam = _pair_tables(p.q, M, table)
    S = 2 * L + 1
    st = asepqm_initial(p, M, L, replicas, rng, policy)
    n = replicas
    clock = np.zeros(n)
    nb = S - 1
    occ = np.zeros(S)
    grp = np.arange(n) % batches
    jr = np.zeros((batches, S), dtype=np.int64)
    jl = np.zeros((batches, S), dtype=np.int64)
    pos = np.argmax(st > M, axis=1)
    active = np.arange(n)
    while active.size:
        dt = rng.exponential(1.0 / (nb * lam), active.size)
        new = clock[active] + dt
        span = np.minimum(new, t_max) - np.maximum(clock[active], burn_in)
        np.add.at(occ, pos[active], np.maximum(span, 0.0))
        clock[active] = new
        active = active[new < t_max]
        if not active.size:
            break
        b = rng.integers(0, nb, active.size)
        u = rng.random(active.size) * lam
        s1, s2 = st[active, b], st[active, b + 1]
        t = np.sum(cum[s1, s2] <= u[:, None], axis=1)
        fire = t < 4
        fire &= np.isfinite(cum[s1, s2, np.minimum(t, 3)])
        ra, ba, ta = active[fire], b[fire], t[fire]
        n1 = to1[s1[fire], s2[fire], ta]
        n2 = to2[s1[fire], s2[fire], ta]
        st[ra, ba], st[ra, ba + 1] = n1, n2
        counting = clock[ra] >= burn_in
        right = (pos[ra] == ba) & (n2 > M)
        left = (pos[ra] == ba + 1) & (n1 > M)
        m = right & counting
        np.add.at(jr, (grp[ra[m]], ba[m]), 1)
        m = left & counting
        np.add.at(jl, (grp[ra[m]], ba[m] + 1), 1)
        pos[ra[right]] += 1
        pos[ra[left]] -= 1
    assert np.all(np.sum(st > M, axis=1) == 1)
    sites = np.arange(-L, L + 1)
    law = EmpiricalDist([int(s) for s in sites], occ, float(occ.sum()))
    return AsepQMRun(law, jr, jl, sites)


# ---- height functions -----------------------------------------------------

def height_function(state: AsepWindowState, v: int, p: int) -> int:
    """#{a > p : omega(a) <= v}, counting the identity outside the window.

    The integer arguments encode the half-integer thresholds v + 1/2 and p + 1/2.
    """
    if state.mode != "raw":
        raise ValueError("height functions need raw labels")
    L, R = state.left, state.right
    pos = np.arange(L, R + 1)
    inside = int(np.sum((pos > p) & (state.labels <= v)))
    above = max(0, v - max(p, R))
    below = max(0, min(L - 1, v) - p)
    return inside + above + below


def height_indicator(state: AsepWindowState, color: int, site: int) -> int:
    """Four-term height combination; equals 1 exactly when omega(site) == color."""
    h = height_function
    return (h(state, color - 1, site) - h(state, color, site)
            - h(state, color - 1, site - 1) + h(state, color, site - 1))


def balance(state: AsepWindowState, v: int = 0, p: int = 0) -> int:
    """#{a > p : omega(a) <= v} - #{a <= p : omega(a) > v}; unchanged by every swap."""
    if state.mode != "raw":
        raise ValueError("balance needs raw labels")
    L, R = state.left, state.right
    pos = np.arange(L, R + 1)
    deep = int(np.sum((pos <= p) & (state.labels > v)))
    deep += max(0, min(p, L - 1) - v)
    deep += max(0, p - max(R, v))
    return height_function(state, v, p) - deep
