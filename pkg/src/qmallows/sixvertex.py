"""Stochastic colored six-vertex model on rectangles.

Columns are 0..W-1 and rows 1..T.  By default color x enters column x from
the bottom and color -y enters row y from the left.  At a vertex with
color i arriving from below and j from the left, the paths cross
(i continues up, j continues right) with probability b1 if i < j and b2 if
i > j; otherwise i turns right and j turns up.

Half-integers are encoded as the integer just below them: n + 1/2 -> n.
A cut (x_hat, y_hat) after T rows spans columns x_hat + 1/2 ..
T + y_hat - 1/2 over all rows, and its height counts paths that start
left of that column range and leave it on the right.  For the default
boundary this is the number of colors below x_hat sitting beyond y_hat
in the frame that moves one step right per row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .asep import evolve_ensemble
from .stats import EmpiricalDist, tv_distance

EMPTY = np.iinfo(np.int64).min


@dataclass(frozen=True)
class VertexParams:
    b1: float
    b2: float

    def __post_init__(self):
        for b in (self.b1, self.b2):
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"vertex weights must lie in [0, 1], got {b}")

    @classmethod
    def asep_limit(cls, epsilon: float, q: float) -> "VertexParams":
        return cls(epsilon, q * epsilon)


@dataclass
class RectDomain:
    """``bottom[x]`` enters column x, ``left[y-1]`` enters row y; None means no path."""

    width: int
    height: int
    bottom: list | None = None
    left: list | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("domain needs positive width and height")
        if self.bottom is None:
            self.bottom = list(range(self.width))
        if self.left is None:
            self.left = [-y for y in range(1, self.height + 1)]
        if len(self.bottom) != self.width or len(self.left) != self.height:
            raise ValueError("boundary lists do not match the domain size")
        colors = [c for c in list(self.bottom) + list(self.left) if c is not None]
        if len(set(colors)) != len(colors):
            raise ValueError("boundary colors must be distinct")

    def boundary_arrays(self):
        enc = lambda c: EMPTY if c is None else int(c)
        return (np.array([enc(c) for c in self.bottom], dtype=np.int64),
                np.array([enc(c) for c in self.left], dtype=np.int64))

    def origins(self) -> dict:
        """Color -> entry column (left-boundary colors get -1)."""
        out = {int(c): x for x, c in enumerate(self.bottom) if c is not None}
        out.update({int(c): -1 for c in self.left if c is not None})
        return out


@dataclass(frozen=True)
class CutQuery:
    x_hat: int
    y_hat: int

    def columns(self, T: int):
        return self.x_hat + 1, T + self.y_hat


@dataclass
class SixVertexConfig:
    """Exit data of one (or many) sampled lattices.

    ``top`` has shape (n, W): the color leaving each column at the top.
    ``right`` has shape (n, T): the color leaving each row on the right.
    """

    domain: RectDomain
    top: np.ndarray
    right: np.ndarray

    def exit_columns(self) -> dict:
        """Color -> exit column for the first replica (right exits give W)."""
        W = self.domain.width
        out = {int(c): x for x, c in enumerate(self.top[0]) if c != EMPTY}
        out.update({int(c): W for c in self.right[0] if c != EMPTY})
        return out


def _vertex(i, j, u, b1, b2):
    # returns (up, right) colors; absent colors pass straight through
    cross = np.where(i < j, u < b1, u < b2)
    cross |= (i == EMPTY) | (j == EMPTY)
    return np.where(cross, i, j), np.where(cross, j, i)


def sample_lattice(vp: VertexParams, dom: RectDomain, rng: np.random.Generator,
                   n: int = 1) -> SixVertexConfig:
    """Sweep rows bottom to top and vertices left to right, ``n`` lattices at once."""
    bottom, left = dom.boundary_arrays()
    cur = np.tile(bottom, (n, 1))
    right = np.empty((n, dom.height), dtype=np.int64)
    for y in range(dom.height):
        h = np.full(n, left[y])
        u = rng.random((n, dom.width))
        for x in range(dom.width):
            cur[:, x], h = _vertex(cur[:, x], h, u[:, x], vp.b1, vp.b2)
        right[:, y] = h
    return SixVertexConfig(dom, cur, right)


def _check_cut(dom: RectDomain, cut: CutQuery):
    lo, hi = cut.columns(dom.height)
    if lo < 0 or hi > dom.width - 1 or lo > hi + 1:
        raise ValueError(f"cut {cut} does not fit a {dom.width}x{dom.height} domain")
    return lo, hi


def heights(cfg: SixVertexConfig, cuts) -> np.ndarray:
    """(n, len(cuts)) array of heights for every replica in ``cfg``."""
    dom = cfg.domain
    W = dom.width
    origin = dom.origins()
    cols = np.arange(W)
    # origin column of the color in each exit slot
    def org(c):
        return np.vectorize(lambda v: origin.get(int(v), W), otypes=[np.int64])(c) if c.size else c
    top_org = org(cfg.top)
    right_org = org(cfg.right)
    out = np.empty((cfg.top.shape[0], len(cuts)), dtype=np.int64)
    for k, cut in enumerate(cuts):
        lo, hi = _check_cut(dom, cut)
        beyond = (cols > hi)[None, :] & (top_org < lo) & (cfg.top != EMPTY)
        out[:, k] = beyond.sum(axis=1) + ((right_org < lo) & (cfg.right != EMPTY)).sum(axis=1)
    return out


def height_on_cut(cfg: SixVertexConfig, cut: CutQuery) -> int:
    """Paths that start left of the cut's column range and leave it on the right (first replica)."""
    return int(heights(SixVertexConfig(cfg.domain, cfg.top[:1], cfg.right[:1]), [cut])[0, 0])


def _class_map(dom: RectDomain, spans):
    """Order-preserving map color -> class, or None if origins are not monotone in color."""
    origin = dom.origins()
    colors = sorted(origin)
    org = [origin[c] for c in colors]
    if any(b < a for a, b in zip(org, org[1:])):
        return None, None
    los = sorted({lo for lo, _ in spans})
    return {c: int(np.searchsorted(los, origin[c], side="right")) for c in colors}, los


def enumerate_exact(vp: VertexParams, dom: RectDomain, cuts, max_vertices: int = 80,
                    compact: bool = True) -> dict:
    """Exact joint law of the heights on ``cuts``.

    The expansion runs vertex by vertex and merges identical partial
    configurations; zero-probability branches are dropped.  With
    ``compact=True`` colors are first merged into classes by the cut
    thresholds they fall below.  Merging respects the color order, and
    two paths of one class leave a vertex the same way whichever branch
    is taken, so the law of the heights is unchanged while the state
    space shrinks enormously.  Returns a dict from height tuples to
    probabilities.
    """
    if dom.width * dom.height > max_vertices:
        raise ValueError(f"domain has {dom.width * dom.height} vertices, limit {max_vertices}")
    spans = [_check_cut(dom, c) for c in cuts]
    bottom, left = dom.boundary_arrays()
    origin = dom.origins()
    cmap, los = _class_map(dom, spans) if compact else (None, None)
    if cmap is None:
        cmap = {c: c for c in origin}
    relabel = lambda c: EMPTY if c == EMPTY else cmap[int(c)]
    W = dom.width
    states = {(tuple(relabel(c) for c in bottom), ()): 1.0}
    for y in range(dom.height):
        row = {(top, exits, relabel(left[y])): w for (top, exits), w in states.items()}
        for x in range(W):
            nxt = {}
            for (top, exits, h), w in row.items():
                i = top[x]
                if i == EMPTY or h == EMPTY or i == h:
                    branches = ((i, h, 1.0),)
                else:
                    b = vp.b1 if i < h else vp.b2
                    branches = ((i, h, b), (h, i, 1.0 - b))
                for up, rt, pr in branches:
                    if pr == 0.0:
                        continue
                    key = (top[:x] + (up,) + top[x + 1:], exits, rt)
                    nxt[key] = nxt.get(key, 0.0) + w * pr
            row = nxt
        states = {}
        for (top, exits, h), w in row.items():
            key = (top, tuple(sorted(exits + ((h,) if h != EMPTY else ()))))
            states[key] = states.get(key, 0.0) + w
    if los is not None:
        # class k holds the colors whose origin lies in [los[k-1], los[k])
        below = lambda c, lo: c < int(np.searchsorted(los, lo, side="right"))
    else:
        below = lambda c, lo: origin[c] < lo
    law = {}
    for (top, exits), w in states.items():
        hv = []
        for lo, hi in spans:
            cnt = sum(1 for x, c in enumerate(top) if c != EMPTY and x > hi and below(c, lo))
            cnt += sum(1 for c in exits if below(c, lo))
            hv.append(cnt)
        key = tuple(hv)
        law[key] = law.get(key, 0.0) + w
    return law


# ---- support data ---------------------------------------------------------

@dataclass
class SupportData:
    """Shift-invariance data with half-integers stored doubled (n + 1/2 -> 2n + 1).

    ``hats`` and ``tildes`` are lists of (x, y) pairs; ``g`` maps the set
    {a : A < a < B or S + C < a < S + D} onto itself.
    """

    A2: int
    B2: int
    C2: int
    D2: int
    S: int
    hats: list
    tildes: list
    g: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in (self.A2, self.B2, self.C2, self.D2):
            if v % 2 == 0:
                raise ValueError("A, B, C, D must be half-integers (odd when doubled)")
        if not self.B2 < 2 * self.S + self.C2:
            raise ValueError("need B < S + C")
        if len(self.hats) != len(self.tildes):
            raise ValueError("hat and tilde lists differ in length")
        for x2, y2 in list(self.hats) + list(self.tildes):
            if x2 % 2 == 0 or y2 % 2 == 0:
                raise ValueError("cut coordinates must be half-integers")
            if not (self.A2 <= x2 <= self.B2 and self.C2 <= y2 <= self.D2):
                raise ValueError(f"cut ({x2}/2, {y2}/2) outside [A,B] x [C,D]")
        if not self.g:
            self.g = {a: a for a in self.domain_set()}
        self.g = {int(a): int(b) for a, b in self.g.items()}

    def domain_set(self) -> list:
        lo = [a for a in range((self.A2 + 1) // 2, (self.B2 - 1) // 2 + 1)]
        hi = [a for a in range(self.S + (self.C2 + 1) // 2, self.S + (self.D2 - 1) // 2 + 1)]
        return sorted(set(lo) | set(hi))

    def with_S(self, S: int) -> "SupportData":
        """Same data with another S; g is carried along by shifting its upper block."""
        shift = S - self.S
        up = lambda a: a + shift if 2 * a > 2 * self.S + self.C2 else a
        g = {up(a): up(b) for a, b in self.g.items()}
        return SupportData(self.A2, self.B2, self.C2, self.D2, S, self.hats, self.tildes, g)

    def cuts(self, which: str = "hats") -> list:
        pts = self.hats if which == "hats" else self.tildes
        return [CutQuery((x2 - 1) // 2, (y2 - 1) // 2) for x2, y2 in pts]

    def to_json(self) -> dict:
        return {"A": self.A2, "B": self.B2, "C": self.C2, "D": self.D2, "S": self.S,
                "hats": [list(h) for h in self.hats], "tildes": [list(t) for t in self.tildes],
                "g": {str(a): b for a, b in sorted(self.g.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "SupportData":
        return cls(int(d["A"]), int(d["B"]), int(d["C"]), int(d["D"]), int(d["S"]),
                   [tuple(map(int, h)) for h in d["hats"]], [tuple(map(int, t)) for t in d["tildes"]],
                   {int(a): int(b) for a, b in d.get("g", {}).items()})


def supports(sd: SupportData):
    """Per index i: (supp of the hat cut, supp_g of the tilde cut) as sorted lists."""
    dom = sd.domain_set()
    out = []
    for (hx, hy), (tx, ty) in zip(sd.hats, sd.tildes):
        s_hat = [a for a in dom if hx < 2 * a < 2 * sd.S + hy]
        s_til = [b for b in dom if tx < 2 * sd.g[b] < 2 * sd.S + ty]
        out.append((s_hat, s_til))
    return out


def check_support_condition(sd: SupportData):
    """Return ``(ok, witness)``; witness is the first 1-based index whose supports differ."""
    dom = sd.domain_set()
    if sorted(sd.g) != dom or sorted(sd.g.values()) != dom:
        raise ValueError("g must be a bijection of the index set")
    for i, (a, b) in enumerate(supports(sd), 1):
        if a != b:
            return False, i
    return True, None


def find_support_permutation(sd: SupportData):
    """A bijection g making the support condition hold, or None.

    Each element a gets the signature {i : a in supp(hat_i)}, each b the
    signature {i : b lies strictly inside tilde cut i}; g must send a to a
    b with the same signature, which is possible iff the signature
    multisets agree.
    """
    dom = sd.domain_set()
    sig_hat, sig_til = {}, {}
    for a in dom:
        sig_hat[a] = tuple(i for i, (hx, hy) in enumerate(sd.hats) if hx < 2 * a < 2 * sd.S + hy)
        sig_til[a] = tuple(i for i, (tx, ty) in enumerate(sd.tildes) if tx < 2 * a < 2 * sd.S + ty)
    pool = {}
    for b in dom:
        pool.setdefault(sig_til[b], []).append(b)
    g = {}
    for a in dom:
        cands = pool.get(sig_hat[a])
        if not cands:
            return None
        g[a] = cands.pop(0)
    return g


def domain_for(sd: SupportData) -> RectDomain:
    """Smallest default-colored rectangle of height S holding every cut of ``sd``."""
    cols = [c.columns(sd.S)[1] for c in sd.cuts("hats") + sd.cuts("tildes")]
    return RectDomain(max(cols) + 1, sd.S)


@dataclass
class ShiftReport:
    mode: str
    deviation: float
    p_value: float | None = None
    law_hat: dict | None = None
    law_tilde: dict | None = None


def _perm_test(a: np.ndarray, b: np.ndarray, rng, rounds: int = 200) -> float:
    # permutation p-value for the TV statistic between two samples of height vectors
    def tv(x, y):
        return tv_distance(EmpiricalDist.from_samples(x), EmpiricalDist.from_samples(y))
    obs = tv(a, b)
    pooled = np.concatenate([a, b])
    hits = 0
    for _ in range(rounds):
        idx = rng.permutation(len(pooled))
        hits += tv(pooled[idx[:len(a)]], pooled[idx[len(a):]]) >= obs
    return (hits + 1) / (rounds + 1)


def verify_shift_invariance(sd: SupportData, vp: VertexParams, dom: RectDomain | None = None,
                            mode: str = "exact", n: int = 10_000, rng=None,
                            max_vertices: int = 80) -> ShiftReport:
    """Compare the joint heights on the hat cuts with those on the tilde cuts.

    Exact mode reports the largest pointwise difference of the two laws.
    Monte Carlo mode samples two independent sets of ``n`` lattices and
    reports their TV distance and a permutation-test p-value.
    """
    ok, witness = check_support_condition(sd)
    if not ok:
        raise ValueError(f"support condition fails at index {witness}")
    dom = dom or domain_for(sd)
    if dom.height != sd.S:
        raise ValueError("domain height must equal S")
    hats, tildes = sd.cuts("hats"), sd.cuts("tildes")
    if mode == "exact":
        a = enumerate_exact(vp, dom, hats, max_vertices)
        b = enumerate_exact(vp, dom, tildes, max_vertices)
        dev = max(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))
        return ShiftReport(mode, dev, None, a, b)
    if mode == "montecarlo":
        if rng is None:
            raise ValueError("Monte Carlo mode needs an rng")
        ha = heights(sample_lattice(vp, dom, rng, n), hats)
        hb = heights(sample_lattice(vp, dom, rng, n), tildes)
        ea, eb = EmpiricalDist.from_samples(ha), EmpiricalDist.from_samples(hb)
        return ShiftReport(mode, tv_distance(ea, eb), _perm_test(ha, hb, rng), ea.freqs(), eb.freqs())
    raise ValueError(f"unknown mode {mode!r}")


def interval_instance(i_vals, x_vals, S: int | None = None) -> SupportData:
    """Shift-invariance data from i_1 < ... < i_k and x_1 > ... > x_k.

    The hat family is the four cuts (i_d +- 1/2, x_d +- 1/2) per d; the
    tilde family packs the i's into consecutive integers starting at i_1
    and moves each x_d by the same amount as its i_d.  g is found by
    matching supports.
    """
    i_vals, x_vals = list(i_vals), list(x_vals)
    k = len(i_vals)
    if any(b <= a for a, b in zip(i_vals, i_vals[1:])) or any(b >= a for a, b in zip(x_vals, x_vals[1:])):
        raise ValueError("need increasing i's and decreasing x's")
    i_new = [i_vals[0] + d for d in range(k)]
    x_new = [x + n - o for x, n, o in zip(x_vals, i_new, i_vals)]
    hats, tildes = [], []
    for (i, x), (j, z) in zip(zip(i_vals, x_vals), zip(i_new, x_new)):
        for dx in (-1, 1):
            for dy in (-1, 1):
                hats.append((2 * i + dx, 2 * x + dy))
                tildes.append((2 * j + dx, 2 * z + dy))
    A2 = min(p[0] for p in hats + tildes)
    B2 = max(p[0] for p in hats + tildes)
    C2 = min(p[1] for p in hats + tildes)
    D2 = max(p[1] for p in hats + tildes)
    if S is None:
        S = (B2 - C2) // 2 + 1
    sd = SupportData(A2, B2, C2, D2, S, hats, tildes)
    g = find_support_permutation(sd)
    if g is None:
        raise ValueError("no permutation matches the supports")
    return SupportData(A2, B2, C2, D2, S, hats, tildes, g)


def random_instances(rng: np.random.Generator, count: int, max_vertices: int = 64) -> list:
    """Non-trivial support-valid instances, alternating interval families and random matched cuts."""
    out = []
    tries = 0
    while len(out) < count and tries < 200 * count:
        tries += 1
        if len(out) % 2 == 0:
            i_vals = np.sort(rng.choice(np.arange(0, 5), size=2, replace=False)).tolist()
            x_vals = np.sort(rng.choice(np.arange(-2, 4), size=2, replace=False))[::-1].tolist()
            try:
                sd = interval_instance(i_vals, x_vals)
            except ValueError:
                continue
        else:
            sd = _random_matched(rng)
        if sd is None or sd.hats == sd.tildes or any(
                (o.hats, o.tildes, o.S) == (sd.hats, sd.tildes, sd.S) for o in out):
            continue
        dom = domain_for(sd)
        if (dom.width + 1) * (dom.height + 1) <= max_vertices:
            out.append(sd)
    return out


def _random_matched(rng):
    # random hat cuts inside a small box, then tilde cuts with matching supports via a random g
    A2, B2 = 1, 2 * int(rng.integers(1, 4)) + 1
    C2, D2 = -1, 2 * int(rng.integers(1, 4)) + 1
    S = (B2 - C2) // 2 + 1
    m = int(rng.integers(1, 4))
    xs = rng.choice(np.arange(A2, B2 + 1, 2), size=m)
    ys = rng.choice(np.arange(C2, D2 + 1, 2), size=m)
    hats = [(int(x), int(y)) for x, y in zip(xs, ys)]
    base = SupportData(A2, B2, C2, D2, S, hats, hats)
    dom = base.domain_set()
    perm = rng.permutation(dom)
    g = {int(a): int(b) for a, b in zip(dom, perm)}
    cand_x = list(range(A2, B2 + 1, 2))
    cand_y = list(range(C2, D2 + 1, 2))
    tildes = []
    for hx, hy in hats:
        target = [a for a in dom if hx < 2 * a < 2 * S + hy]
        found = [(tx, ty) for tx in cand_x for ty in cand_y
                 if [b for b in dom if tx < 2 * g[b] < 2 * S + ty] == target]
        if not found:
            return None
        tildes.append(found[int(rng.integers(len(found)))])
    if tildes == hats:
        return None
    return SupportData(A2, B2, C2, D2, S, hats, tildes, g)


def example_support_data() -> SupportData:
    """The two-cut example with supports {1, 2, 5, 6} and {5}."""
    return SupportData(1, 5, 5, 9, 2, [(1, 9), (5, 7)], [(1, 9), (3, 5)], {1: 1, 2: 5, 5: 2, 6: 6})


# ---- ASEP limit -----------------------------------------------------------

def asep_limit_heights(q: float, epsilon: float, t: float, cuts, n: int, rng) -> np.ndarray:
    """Heights from the six-vertex model with b1 = epsilon, b2 = q epsilon after T = floor(t/epsilon) rows."""
    T = int(math.floor(t / epsilon))
    dom = RectDomain(2 * T + 1, T)
    cfg = sample_lattice(VertexParams.asep_limit(epsilon, q), dom, rng, n)
    return _frame_heights(cfg, T, cuts)


def _frame_heights(cfg: SixVertexConfig, T: int, cuts) -> np.ndarray:
    # h = #{colors <= x_hat at frame position > y_hat}; frame position = exit column - T
    W = cfg.domain.width
    n = cfg.top.shape[0]
    out = np.empty((n, len(cuts)), dtype=np.int64)
    cols = np.arange(W)
    for k, c in enumerate(cuts):
        mask = (cfg.top <= c.x_hat) & (cfg.top != EMPTY) & ((cols - T) > c.y_hat)[None, :]
        out[:, k] = mask.sum(axis=1) + ((cfg.right <= c.x_hat) & (cfg.right != EMPTY)).sum(axis=1)
    return out


def asep_step_heights(q: float, t: float, cuts, n: int, rng, L: int = 20) -> np.ndarray:
    """Same height vector for ASEP started from the identity on [-L, L] after time t."""
    labels = np.tile(np.arange(-L, L + 1), (n, 1))
    evolve_ensemble(labels, q, t, rng)
    pos = np.arange(-L, L + 1)
    out = np.empty((n, len(cuts)), dtype=np.int64)
    for k, c in enumerate(cuts):
        inside = ((labels <= c.x_hat) & (pos > c.y_hat)[None, :]).sum(axis=1)
        out[:, k] = inside + max(0, c.x_hat - max(c.y_hat, L))
    return out


def crossing_frequency(b: float, n: int, rng) -> tuple:
    """Crossing frequency on a 1x1 lattice with ordered colors, and an exact binomial p-value."""
    cfg = sample_lattice(VertexParams(b, b), RectDomain(1, 1, bottom=[0], left=[1]), rng, n)
    crossed = int(np.sum(cfg.top[:, 0] == 0))
    return crossed / n, binomtest(crossed, n, b).pvalue
