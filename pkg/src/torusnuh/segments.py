"""Vertical segments and backward curve propagation.

A curve is carried as a polyline in the plane (the torus lift), refined
adaptively when pulled back through an inverse branch so that adjacent edge
directions stay within a small angle of each other.  A v-segment is a
polyline all of whose edge directions lie in the vertical max-norm cone and
whose max-norm length

    l_m = sum over edges of max(|dx1|, |dx2|)

equals the reference length l = alpha / (5 e_v).  The experiments here check,
numerically, that pullback branches of v-segments contain v-segments once the
shear strength passes the segment threshold, and that guided backward
iteration drives arbitrary short curves to a v-segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .endo import EndoMap, reduce_torus

EDGE_SLACK = 1e-12          # closed-cone slack for edge direction tests
LENGTH_TOL = 1e-9           # tolerance on l_m = l
ANGLE_TOL = 1e-3            # radians; adaptive refinement target
MAX_VERTICES = 200_000
MAX_REFINE_ROUNDS = 24


@dataclass(frozen=True, eq=False)
class Polyline:
    """An ordered list of plane vertices; edges are the consecutive
    differences.  Degenerate (repeated) consecutive vertices are rejected."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            raise ValueError(f"polyline needs an (N>=2, 2) vertex array, got shape {v.shape}")
        d = np.diff(v, axis=0)
        if np.any(np.max(np.abs(d), axis=1) == 0.0):
            raise ValueError("polyline has a repeated consecutive vertex")
        object.__setattr__(self, "vertices", v)

    def edges(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)

    @property
    def lm(self) -> float:
        """Max-norm length: sum of max(|dx1|, |dx2|) over edges."""
        return float(np.sum(np.max(np.abs(self.edges()), axis=1)))

    @property
    def euclidean_length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.vertices, axis=0).T)))

    def reduced_vertices(self) -> np.ndarray:
        return reduce_torus(self.vertices)


@dataclass(frozen=True)
class VSegmentSpec:
    """Cone parameter and reference length for v-segments."""

    alpha: float
    l: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"cone parameter must exceed 1, got alpha={self.alpha}")
        if not self.l > 0:
            raise ValueError(f"reference length must be positive, got l={self.l}")

    @staticmethod
    def from_constants(alpha: float, e_v: float) -> "VSegmentSpec":
        return VSegmentSpec(alpha=alpha, l=alpha / (5.0 * e_v))


def _edges_vertical(edges: np.ndarray, alpha: float) -> np.ndarray:
    """Closed vertical-cone test per edge, with a small slack so exactly
    boundary-slope edges count as vertical."""
    a1 = np.abs(edges[:, 0])
    a2 = np.abs(edges[:, 1])
    return a2 + EDGE_SLACK * np.maximum(1.0, a2) >= alpha * a1


def is_v_segment(p: Polyline, spec: VSegmentSpec) -> bool:
    """True iff every edge direction is in the vertical cone and the max-norm
    length equals the reference length to LENGTH_TOL."""
    if not bool(np.all(_edges_vertical(p.edges(), spec.alpha))):
        return False
    return abs(p.lm - spec.l) <= LENGTH_TOL


def _direction_angles(edges: np.ndarray) -> np.ndarray:
    return np.arctan2(edges[:, 1], edges[:, 0])


def _needs_refining(vertices: np.ndarray) -> np.ndarray:
    """Boolean per interior joint: adjacent edge directions differ >= ANGLE_TOL."""
    e = np.diff(vertices, axis=0)
    ang = _direction_angles(e)
    diff = np.abs(np.angle(np.exp(1j * (ang[1:] - ang[:-1]))))
    return diff >= ANGLE_TOL


def pullback_curve(f: EndoMap, p: Polyline, branch: int) -> Polyline:
    """Image of the polyline under the plane inverse branch F_branch, with
    source vertices inserted adaptively until adjacent image edge directions
    differ by less than ANGLE_TOL radians."""
    if not (1 <= branch <= f.degree):
        raise ValueError(f"branch symbol must be in 1..{f.degree}, got {branch}")
    src = p.vertices.copy()
    if len(src) == 2:
        # refinement is driven by interior image joints; a single edge has
        # none, so seed one
        src = np.array([src[0], 0.5 * (src[0] + src[1]), src[1]])
    for _ in range(MAX_REFINE_ROUNDS):
        img = f.lift_inverse_branch(src, branch)
        bad = _needs_refining(img)
        if not np.any(bad) or len(src) >= MAX_VERTICES:
            break
        # split both edges meeting each bad joint
        split = np.zeros(len(src) - 1, dtype=bool)
        split[:-1] |= bad
        split[1:] |= bad
        pieces: List[np.ndarray] = []
        for i in range(len(src) - 1):
            pieces.append(src[i:i + 1])
            if split[i]:
                pieces.append(0.5 * (src[i] + src[i + 1])[None, :])
        pieces.append(src[-1:])
        src = np.concatenate(pieces, axis=0)
    img = f.lift_inverse_branch(src, branch)
    keep = np.concatenate([[True], np.max(np.abs(np.diff(img, axis=0)), axis=1) > 0.0])
    return Polyline(img[keep])


def _mask_runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal runs of True in a boolean mask, as half-open (start, end)
    index pairs."""
    if mask.size == 0:
        return []
    m = mask.astype(np.int8)
    d = np.diff(m)
    starts = list(np.flatnonzero(d == 1) + 1)
    ends = list(np.flatnonzero(d == -1) + 1)
    if m[0]:
        starts = [0] + starts
    if m[-1]:
        ends = ends + [int(mask.size)]
    return list(zip(starts, ends))


def find_v_subsegment(p: Polyline, spec: VSegmentSpec) -> Optional[Polyline]:
    """First maximal run of vertical edges with l_m >= l, trimmed to exactly l
    (max-norm length is linear along an edge, so the cut is exact); None if no
    run is long enough."""
    edges = p.edges()
    vertical = _edges_vertical(edges, spec.alpha)
    lm_edge = np.max(np.abs(edges), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lm_edge)])
    for i, j in _mask_runs(vertical):
        if cum[j] - cum[i] < spec.l - LENGTH_TOL:
            continue
        # first edge k at which the running total reaches l, then trim within
        # it so the run has l_m exactly l
        run_cum = cum[i + 1:j + 1] - cum[i]
        k = i + int(np.searchsorted(run_cum, spec.l - LENGTH_TOL))
        acc = cum[k] - cum[i]
        need = spec.l - acc
        tau = min(1.0, need / lm_edge[k])
        verts = np.concatenate(
            [p.vertices[i:k + 1],
             (p.vertices[k] + tau * edges[k])[None, :]], axis=0)
        return Polyline(verts)
    return None


# -- guided backward search -------------------------------------------------------


def _split_at_band_boundaries(f: EndoMap, p: Polyline) -> Polyline:
    """Insert vertices wherever an edge's shear argument crosses a band
    boundary (mod 1).  The shear argument is affine along edges, so crossing
    parameters are exact."""
    prof = f.profile
    cuts = (prof.x1, prof.x2, prof.x3, prof.x4)
    verts = p.vertices
    w = f.shear_argument(verts)
    out = [verts[0]]
    for i in range(len(verts) - 1):
        a, b = verts[i], verts[i + 1]
        wa, wb = w[i], w[i + 1]
        dw = wb - wa
        taus = []
        if dw != 0.0:
            lo, hi = sorted((wa, wb))
            for c in cuts:
                k0 = math.floor(lo - c) - 1
                k1 = math.ceil(hi - c) + 1
                for k in range(k0, k1 + 1):
                    tau = (c + k - wa) / dw
                    if 1e-12 < tau < 1.0 - 1e-12:
                        taus.append(tau)
        for tau in sorted(taus):
            out.append(a + tau * (b - a))
        out.append(b)
    arr = np.array(out)
    keep = np.concatenate([[True], np.max(np.abs(np.diff(arr, axis=0)), axis=1) > 0.0])
    return Polyline(arr[keep])


def _good_vertical_runs(f: EndoMap, p: Polyline) -> List[Tuple[int, int, float]]:
    """Maximal runs of edges that are vertical and lie in a single good band:
    list of (start_vertex, end_vertex, lm).  Assumes band-boundary splitting
    has been done, so each edge has a well-defined band."""
    edges = p.edges()
    vertical = _edges_vertical(edges, f.alpha)
    mids = 0.5 * (p.vertices[:-1] + p.vertices[1:])
    labels = f.region_labels(mids)
    lm_edge = np.max(np.abs(edges), axis=1)
    runs: List[Tuple[int, int, float]] = []
    i = 0
    n = len(edges)
    while i < n:
        if not vertical[i] or labels[i] == 0:
            i += 1
            continue
        j = i
        while j < n and vertical[j] and labels[j] == labels[i]:
            j += 1
        runs.append((i, j, float(np.sum(lm_edge[i:j]))))
        i = j
    return runs


def _best_subcurve(f: EndoMap, p: Polyline) -> Tuple[Optional[Polyline], float]:
    """Longest vertical single-good-band sub-polyline, with its l_m.

    Band boundaries are only inserted inside vertical runs: a non-vertical
    edge breaks any candidate run regardless of its band, and vertical runs
    have small first-coordinate extent, so this keeps the splitting cost
    independent of how wildly the rest of the curve folds."""
    edges = p.edges()
    vertical = _edges_vertical(edges, f.alpha)
    lm_edge = np.max(np.abs(edges), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lm_edge)])
    best: Tuple[Optional[Polyline], float] = (None, 0.0)
    for i, j in _mask_runs(vertical):
        if cum[j] - cum[i] <= best[1]:
            continue  # even unsplit, this run cannot beat the current best
        sub = Polyline(p.vertices[i:j + 1])
        split = _split_at_band_boundaries(f, sub)
        for a, b, lm in _good_vertical_runs(f, split):
            if lm > best[1]:
                best = (Polyline(split.vertices[a:b + 1]), lm)
    return best


MAX_SEED_VERTICES = 512


def _seed_window(p: Polyline, target: float) -> Polyline:
    """Bounded working curve for the next guided-search step: a central
    window of max-norm length at most ``target`` and at most
    MAX_SEED_VERTICES vertices.  A tightly folded pullback can pack very many
    vertices into a short window, and carrying them all makes the next
    refinement explode; any sub-curve is an equally legitimate seed."""
    q = _central_window(p, target)
    n = q.vertices.shape[0]
    if n <= MAX_SEED_VERTICES:
        return q
    m = n // 2
    h = MAX_SEED_VERTICES // 2
    return Polyline(q.vertices[m - h:m + h])


def _central_window(p: Polyline, target: float) -> Polyline:
    """Central sub-polyline of max-norm length at most ``target``.

    Keeps per-step work in the guided search bounded: the working curve only
    seeds the next pullback, and a window longer than the reference length
    never discards a find_v_subsegment hit (those return before the curve is
    kept).  Max-norm length is linear along an edge, so the cuts are exact."""
    edges = p.edges()
    lm_edge = np.max(np.abs(edges), axis=1)
    total = float(np.sum(lm_edge))
    if total <= target:
        return p
    lo, hi = 0.5 * (total - target), 0.5 * (total + target)
    cum = np.concatenate([[0.0], np.cumsum(lm_edge)])
    verts: List[np.ndarray] = []
    for k in range(len(edges)):
        a, b = cum[k], cum[k + 1]
        if b <= lo or a >= hi:
            continue
        t0 = max(0.0, (lo - a) / lm_edge[k])
        t1 = min(1.0, (hi - a) / lm_edge[k])
        if not verts:
            verts.append(p.vertices[k] + t0 * edges[k])
        verts.append(p.vertices[k] + t1 * edges[k])
    out = np.array(verts)
    keep = np.concatenate([[True], np.max(np.abs(np.diff(out, axis=0)), axis=1) > 0.0])
    out = out[keep]
    if out.shape[0] < 2:
        return p
    return Polyline(out)


@dataclass(frozen=True, eq=False)
class GuidedSearchResult:
    """Outcome of the backward curve search: the v-segment found (or None),
    the number of backward steps taken, the branch word followed, and the
    best candidate length per step."""

    segment: Optional[Polyline]
    steps: int
    word: Tuple[int, ...]
    lengths: Tuple[float, ...]

    @property
    def found(self) -> bool:
        return self.segment is not None


def guided_search(f: EndoMap, p: Polyline, spec: VSegmentSpec,
                  max_steps: int = 50) -> GuidedSearchResult:
    """Iterate inverse branches, at each step keeping the branch whose pulled
    curve has the longest vertical sub-polyline inside one good band, until
    some branch's pullback contains a v-segment.

    The branch choice mirrors the existence argument: vertical curves in a
    good band grow under the favored inverse branch, so greedily tracking the
    longest good vertical piece terminates quickly for strengths above the
    segment threshold.  If no branch produces a good vertical piece longer
    than LENGTH_TOL for three steps in a row the search gives up early:
    without that signal the greedy choice is blind and further pullbacks only
    fold the curve harder (band-boundary splitting can leave floating-point
    sliver runs, which do not count as signal)."""
    current = p
    word: List[int] = []
    lengths: List[float] = []
    stalls = 0
    for step in range(1, max_steps + 1):
        best_branch = None
        best_curve: Optional[Polyline] = None
        best_len = -1.0
        for branch in range(1, f.degree + 1):
            q = pullback_curve(f, current, branch)
            seg = find_v_subsegment(q, spec)
            if seg is not None:
                return GuidedSearchResult(segment=seg, steps=step,
                                          word=tuple(word + [branch]),
                                          lengths=tuple(lengths + [seg.lm]))
            sub, lm = _best_subcurve(f, q)
            if lm > best_len:
                best_branch, best_curve, best_len = branch, sub, lm
        if best_curve is None:
            # no vertical piece anywhere: keep a bounded window of the
            # pullback of branch 1
            best_branch = 1
            best_curve = _central_window(pullback_curve(f, current, 1), spec.l)
            best_len = 0.0
        stalls = stalls + 1 if best_len <= LENGTH_TOL else 0
        word.append(best_branch)
        lengths.append(best_len)
        if stalls >= 3:
            return GuidedSearchResult(segment=None, steps=step,
                                      word=tuple(word), lengths=tuple(lengths))
        current = _seed_window(best_curve, 2.0 * spec.l)
    return GuidedSearchResult(segment=None, steps=max_steps,
                              word=tuple(word), lengths=tuple(lengths))


# -- random curve generators -------------------------------------------------------


def random_v_segment(spec: VSegmentSpec, rng: np.random.Generator,
                     n_edges: int = 3) -> Polyline:
    """A random polyline with every edge strictly inside the vertical cone and
    l_m exactly l, through a random base point."""
    base = rng.random(2)
    slopes = rng.uniform(-0.9 / spec.alpha, 0.9 / spec.alpha, size=n_edges)
    piece = spec.l / n_edges
    verts = [np.asarray(base, dtype=float)]
    for s in slopes:
        # direction (s, 1) has max-norm 1 for |s| < 1, so the edge lm is piece
        verts.append(verts[-1] + piece * np.array([s, 1.0]))
    return Polyline(np.array(verts))


def random_curve(rng: np.random.Generator, length: float = 0.25,
                 n_vertices: int = 33) -> Polyline:
    """A random short C^1-sampled arc (circular arc with random center angle
    and curvature), used as the seed of the guided search."""
    base = rng.random(2)
    theta0 = rng.uniform(0.0, 2.0 * math.pi)
    bend = rng.uniform(-2.0, 2.0)
    taus = np.linspace(0.0, 1.0, n_vertices)
    angles = theta0 + bend * taus
    steps = (length / (n_vertices - 1)) * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    verts = base[None, :] + np.concatenate(
        [np.zeros((1, 2)), np.cumsum(steps[:-1], axis=0)], axis=0)
    return Polyline(verts)
