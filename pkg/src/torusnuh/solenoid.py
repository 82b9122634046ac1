"""Inverse-limit coding over preimage branch symbols, and Monte-Carlo
Lyapunov-exponent estimation on the natural extension.

A backward orbit of f is coded by the word of branch symbols it follows: with
coset representatives w_1 = 0, ..., w_d of the image lattice, the plane maps
F_i(p) = f~^{-1}(p + w_i) are the d inverse branches of the lift, and the
point sequence of a word omega is x_i = (F_{omega_i} o ... o F_{omega_1})(x~)
reduced mod 1.  Integer translations act on this coding through an exact
carry recursion (psi below), cylinders carry the product-of-inverse-Jacobians
measure, and fiber sampling of backward orbits turns the negative exponent
into a plain Monte-Carlo average.

The deformed maps here have constant Jacobian (the shear is conservative), so
fiber weights are uniform 1/d; the samplers still compute the general
determinant weights where cheap so the code documents the general rule.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .endo import ORDER_EH, EndoMap, reduce_torus, torus_dist
from .estimator import DEFAULT_BUDGET, BudgetError
from .intmat import coset_index_map

THREADS_ENV = "TORUSNUH_THREADS"
ORBIT_TOL = 1e-9
SHORT_ORBIT = 100  # below this length the estimates get a warning flag


@dataclass(frozen=True)
class SymbolWord:
    """A finite word of preimage branch symbols, each in {1..d}."""

    symbols: Tuple[int, ...]
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"alphabet size must be positive, got d={self.d}")
        for s in self.symbols:
            if not (1 <= s <= self.d):
                raise ValueError(f"symbol {s} outside alphabet 1..{self.d}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)


@dataclass(frozen=True)
class PsiState:
    """Result of the carry recursion: the translated word tau_1..tau_n and the
    integer carries u_1..u_n (u_0 = v is the translation being applied)."""

    v: Tuple[int, int]
    word: SymbolWord
    taus: SymbolWord
    carries: Tuple[Tuple[int, int], ...]

    @property
    def final_carry(self) -> Tuple[int, int]:
        return self.carries[-1] if self.carries else self.v


@dataclass(frozen=True, eq=False)
class BackwardOrbit:
    """A sampled backward orbit: f(points[i+1]) = points[i], with the word of
    branch symbols, the plane representative driving the x_i recursion, and
    the pulled-back direction bookkeeping."""

    x0: np.ndarray
    x_tilde: np.ndarray
    word: SymbolWord
    points: np.ndarray        # (n+1, 2) torus points x_0..x_n
    plane_points: np.ndarray  # (n+1, 2) un-reduced plane orbit
    v0: np.ndarray            # initial direction at x_0 (max-norm unit)
    direction: np.ndarray     # pulled-back direction at x_n
    step_logs: np.ndarray     # (n,) log ||(D f)^{-1}|| applied per step
    seed: int


@dataclass(frozen=True)
class ExponentEstimate:
    """Monte-Carlo exponent estimate with its sampling error."""

    value: float
    n: int
    samples: int
    std_error: float
    seed: int
    burn_in: int
    warnings: Tuple[str, ...] = ()


def _symbol_lookup(f: EndoMap):
    """Map integer vectors to their 1-based branch symbol: the unique i with
    z == w_i mod G Z^2."""
    _, lookup = coset_index_map(f.G)

    def symbol(z: Tuple[int, int]) -> int:
        return lookup(z) + 1

    return symbol


def psi(f: EndoMap, v: Tuple[int, int], word: SymbolWord) -> PsiState:
    """The action of the integer translation v on branch words, computed by
    the exact carry recursion: with u_0 = v, step n finds the unique symbol
    tau_n and integer vector u_n with

        w_{tau_n} - w_{omega_n} + u_{n-1} = G u_n.

    All arithmetic is integer-exact; the G-multiple identity is asserted."""
    if word.d != f.degree:
        raise ValueError(f"word alphabet {word.d} does not match degree {f.degree}")
    v = (int(v[0]), int(v[1]))
    symbol_of = _symbol_lookup(f)
    adj = f.G.adjugate()
    det = f.G.det

    u = v
    taus = []
    carries = []
    for omega in word:
        w_omega = f.reps[omega - 1]
        z = (w_omega[0] - u[0], w_omega[1] - u[1])
        tau = symbol_of(z)
        w_tau = f.reps[tau - 1]
        rhs = (w_tau[0] - z[0], w_tau[1] - z[1])
        q0, r0 = divmod(adj.e11 * rhs[0] + adj.e12 * rhs[1], det)
        q1, r1 = divmod(adj.e21 * rhs[0] + adj.e22 * rhs[1], det)
        if r0 != 0 or r1 != 0:
            raise AssertionError(f"carry recursion produced a non-integer carry at symbol {omega}")
        u = (q0, q1)
        if f.G.apply(u) != rhs:
            raise AssertionError("carry does not satisfy the G-multiple identity")
        taus.append(tau)
        carries.append(u)
    return PsiState(v=v, word=word,
                    taus=SymbolWord(tuple(taus), word.d),
                    carries=tuple(carries))


def plane_backward(f: EndoMap, p, word: SymbolWord) -> np.ndarray:
    """Apply the inverse branches of the word to a plane point, first symbol
    first: (F_{omega_n} o ... o F_{omega_1})(p).  Returns the (n+1, 2) orbit."""
    p = np.asarray(p, dtype=float)
    out = np.empty((len(word) + 1, 2), dtype=float)
    out[0] = p
    for i, sym in enumerate(word):
        out[i + 1] = f.lift_inverse_branch(out[i], sym)
    return out


def jacobian_determinants(f: EndoMap, X: np.ndarray) -> np.ndarray:
    """|det D_x f| for a batch of points, from the assembled derivative
    matrices (not the structural constant, so tests can cross-check the two)."""
    X = np.asarray(X, dtype=float)
    G = np.array(f.G.rows(), dtype=float)
    M = np.empty(X.shape[:-1] + (2, 2), dtype=float)
    if f.order == ORDER_EH:
        sp = f.profile.derivative(X[..., 0])
        ts = f.t * sp
        M[..., 0, 0] = G[0, 0] + G[0, 1] * ts
        M[..., 0, 1] = G[0, 1]
        M[..., 1, 0] = G[1, 0] + G[1, 1] * ts
        M[..., 1, 1] = G[1, 1]
    else:
        u_mid = G[0, 0] * X[..., 0] + G[0, 1] * X[..., 1]
        ts = f.t * f.profile.derivative(u_mid)
        M[..., 0, 0] = G[0, 0]
        M[..., 0, 1] = G[0, 1]
        M[..., 1, 0] = G[1, 0] + ts * G[0, 0]
        M[..., 1, 1] = G[1, 1] + ts * G[0, 1]
    return np.abs(np.linalg.det(M))


def cylinder_measure(f: EndoMap, p, word: SymbolWord) -> float:
    """Measure of the depth-n cylinder through the plane point p: the product
    of inverse Jacobian magnitudes along the branch orbit (chain rule for
    |det D(F_{omega_n} o ... o F_{omega_1})(p)|)."""
    orbit = plane_backward(f, p, word)
    if len(word) == 0:
        return 1.0
    dets = jacobian_determinants(f, reduce_torus(orbit[1:]))
    return float(np.prod(1.0 / dets))


def enumerate_cylinder_measures(f: EndoMap, p, n: int,
                                budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Measures of all d^n depth-n cylinders through the plane point p, in
    lexicographic word order (first symbol most significant).  Computed layer
    by layer with the chain rule, so summing is an honest normalization test."""
    if n < 0:
        raise ValueError(f"depth must be >= 0, got {n}")
    d = f.degree
    if d ** n > budget:
        raise BudgetError(d ** n, budget)
    P = np.asarray(p, dtype=float)[None, :]
    acc = np.ones(1, dtype=float)
    for _ in range(n):
        C = _plane_branches(f, P)                       # (N, d, 2)
        dets = jacobian_determinants(f, reduce_torus(C))
        acc = np.repeat(acc, d) / dets.reshape(-1)
        P = C.reshape(-1, 2)
    return acc


def _plane_branches(f: EndoMap, P: np.ndarray) -> np.ndarray:
    """All d inverse branches applied to each plane point: (N, 2) -> (N, d, 2),
    without mod-1 reduction (preserves the covering-space orbit)."""
    N = P.shape[0]
    d = f.degree
    ginv = np.array(f.G.adjugate().rows(), dtype=float) / f.G.det
    W = np.array(f.reps, dtype=float)          # (d, 2)
    out = np.empty((N, d, 2), dtype=float)
    if f.order == ORDER_EH:
        Z = (P[:, None, :] + W[None, :, :]) @ ginv.T
        Z[..., 1] -= f.t * f.profile.value(Z[..., 0])
        out[:] = Z
    else:
        Z = P[:, None, :] + W[None, :, :]
        Z[..., 1] = Z[..., 1] - f.t * f.profile.value(Z[..., 0])
        out[:] = Z @ ginv.T
    return out


def sample_backward_words(f: EndoMap, x, depth: int, draws: int, seed: int) -> np.ndarray:
    """Vectorized fiber sampling of branch words: draws x depth array of
    1-based symbols, each step drawn with probability proportional to the
    inverse Jacobian magnitude at the candidate preimage."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    P = np.tile(reduce_torus(np.asarray(x, dtype=float)), (draws, 1))
    words = np.empty((draws, depth), dtype=np.int32)
    for step in range(depth):
        C = _plane_branches(f, P)                       # (draws, d, 2)
        dets = jacobian_determinants(f, reduce_torus(C))
        weights = 1.0 / dets
        weights /= weights.sum(axis=1, keepdims=True)
        u = rng.random(draws)
        idx = (weights.cumsum(axis=1) < u[:, None]).sum(axis=1)
        idx = np.minimum(idx, f.degree - 1)
        words[:, step] = idx + 1
        P = C[np.arange(draws), idx]
    return words


def sample_backward_orbit(f: EndoMap, x, n: int, seed: int,
                          v: Optional[Sequence[float]] = None) -> BackwardOrbit:
    """Draw one backward orbit of length n from the fiber measure over x,
    tracking the plane representative, the branch word, and the pullback of a
    (by default random) direction."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    x0 = reduce_torus(np.asarray(x, dtype=float))
    if v is None:
        theta = rng.uniform(0.0, 2.0 * math.pi)
        v = np.array([math.cos(theta), math.sin(theta)])
    v = np.asarray(v, dtype=float)
    v = v / np.max(np.abs(v))

    plane = np.empty((n + 1, 2), dtype=float)
    plane[0] = x0
    symbols = np.empty(n, dtype=np.int32)
    step_logs = np.empty(n, dtype=float)
    direction = v.copy()
    for i in range(n):
        C = _plane_branches(f, plane[i][None, :])[0]    # (d, 2)
        dets = jacobian_determinants(f, reduce_torus(C))
        weights = (1.0 / dets)
        weights /= weights.sum()
        idx = int(rng.choice(f.degree, p=weights))
        symbols[i] = idx + 1
        plane[i + 1] = C[idx]
        W, logs = f.pullback_directions(reduce_torus(C[idx])[None, :], direction[None, :])
        direction = W[0]
        step_logs[i] = logs[0]

    points = reduce_torus(plane)
    forward = f.evaluate(points[1:])
    if n > 0 and float(np.max(torus_dist(forward, points[:-1]))) > ORBIT_TOL:
        raise AssertionError("sampled orbit violates f(x_{i+1}) = x_i")
    return BackwardOrbit(x0=x0, x_tilde=x0.copy(),
                         word=SymbolWord(tuple(int(s) for s in symbols), f.degree),
                         points=points, plane_points=plane, v0=v,
                         direction=direction, step_logs=step_logs, seed=seed)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, count)


def _default_burn_in(n: int) -> int:
    return min(50, n // 10)


def _sample_streams(seed: int, samples: int, n: int, d: int,
                    base_points: Optional[np.ndarray]):
    """Pre-draw every random input, one counter-based stream per sample, so
    results are reproducible no matter how the work is later chunked."""
    back_base = np.empty((samples, 2), dtype=float)
    fwd_base = np.empty((samples, 2), dtype=float)
    angles = np.empty((samples, 2), dtype=float)
    symbols = np.empty((samples, n), dtype=np.int32)
    for i in range(samples):
        g = np.random.Generator(np.random.Philox(key=(seed << 64) + i))
        pt = g.random(2)
        back_base[i] = pt if base_points is None else base_points[i % len(base_points)]
        fwd_base[i] = g.random(2) if base_points is None else base_points[i % len(base_points)]
        angles[i] = g.uniform(0.0, 2.0 * math.pi, 2)
        symbols[i] = g.integers(0, d, size=n, dtype=np.int32)
    return back_base, fwd_base, angles, symbols


def estimate_exponents(f: EndoMap, n: int, samples: int, seed: int,
                       base_points: Optional[np.ndarray] = None,
                       burn_in: Optional[int] = None,
                       budget: int = DEFAULT_BUDGET) -> Tuple[ExponentEstimate, ExponentEstimate]:
    """Estimate (chi_plus, chi_minus) for f by Monte Carlo.

    chi_plus: forward iteration of a random direction with per-step
    renormalization.  chi_minus: minus the average slope of the pulled-back
    log norm along backward orbits drawn from the fiber measure (uniform
    symbols; the family has constant Jacobian), a fresh random direction per
    orbit.  Both averages discard the first burn_in steps — the transported
    direction needs a short transient to align — and are taken over the orbit
    tail; burn_in is recorded in the estimates.

    Deterministic for fixed (seed, n, samples) regardless of the thread count
    (set TORUSNUH_THREADS to parallelize over sample chunks)."""
    if n < 1:
        raise ValueError(f"orbit length must be >= 1, got {n}")
    if samples < 2:
        raise ValueError(f"need at least 2 samples for a standard error, got {samples}")
    work = 2 * n * samples
    if work > budget:
        raise BudgetError(work, budget)
    if burn_in is None:
        burn_in = _default_burn_in(n)
    if not (0 <= burn_in < n):
        raise ValueError(f"burn_in must be in [0, n), got {burn_in} with n={n}")
    n_eff = n - burn_in

    back_base, fwd_base, angles, symbols = _sample_streams(seed, samples, n, f.degree, base_points)
    v_back = np.stack([np.cos(angles[:, 0]), np.sin(angles[:, 0])], axis=1)
    v_back /= np.max(np.abs(v_back), axis=1)[:, None]
    v_fwd = np.stack([np.cos(angles[:, 1]), np.sin(angles[:, 1])], axis=1)
    v_fwd /= np.max(np.abs(v_fwd), axis=1)[:, None]

    back_tail = np.zeros(samples, dtype=float)
    fwd_tail = np.zeros(samples, dtype=float)

    def run_chunk(lo: int, hi: int) -> None:
        X = reduce_torus(back_base[lo:hi].copy())
        V = v_back[lo:hi].copy()
        acc = np.zeros(hi - lo, dtype=float)
        for step in range(n):
            X = f.backward_step(X, symbols[lo:hi, step])
            V, logs = f.pullback_directions(X, V)
            if step >= burn_in:
                acc += logs
        back_tail[lo:hi] = acc

        X = reduce_torus(fwd_base[lo:hi].copy())
        V = v_fwd[lo:hi].copy()
        acc = np.zeros(hi - lo, dtype=float)
        for step in range(n):
            V, logs = f.push_directions(X, V)
            X = f.evaluate(X)
            if step >= burn_in:
                acc += logs
        fwd_tail[lo:hi] = acc

    threads = _thread_count()
    bounds = np.linspace(0, samples, threads + 1).astype(int)
    chunks = [(int(bounds[i]), int(bounds[i + 1]))
              for i in range(threads) if bounds[i] < bounds[i + 1]]
    if len(chunks) <= 1:
        for lo, hi in chunks:
            run_chunk(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(lambda c: run_chunk(*c), chunks))

    warnings = ("short_orbit",) if n < SHORT_ORBIT else ()

    per_minus = -(back_tail / n_eff)
    per_plus = fwd_tail / n_eff
    chi_minus = ExponentEstimate(
        value=float(np.mean(per_minus)), n=n, samples=samples,
        std_error=float(np.std(per_minus, ddof=1) / math.sqrt(samples)),
        seed=seed, burn_in=burn_in, warnings=warnings,
    )
    chi_plus = ExponentEstimate(
        value=float(np.mean(per_plus)), n=n, samples=samples,
        std_error=float(np.std(per_plus, ddof=1) / math.sqrt(samples)),
        seed=seed, burn_in=burn_in, warnings=warnings,
    )
    return chi_plus, chi_minus
