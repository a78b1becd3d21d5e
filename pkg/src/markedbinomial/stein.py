"""Discrete Stein equation solvers and (compound) Poisson approximation bounds.

Poisson target.  For A a subset of Z+ the Stein solution phi_A solves

    lam0 * phi(k+1) - k * phi(k) = 1_A(k) - P(Poi(lam0) in A),   phi(0) = 0.

The forward recursion amplifies rounding by k/lam0 per step, so the
solver evaluates the equivalent closed form

    phi(k+1) = [P(A & U_k) * P(> k) - P(A \\ U_k) * P(<= k)] / (lam0 * pmf(k)),

U_k = {0..k}, whose factors are single-signed partial pmf sums; residuals
stay near machine precision for the whole table.

Compound Poisson target PC(lam0, gV).  The solution table psi_A solves

    lam0 * sum_k k gV(k) psi(l+k) - l * psi(l) = 1_A(l) - P(PC in A)

for l = 1..L_max (same creation-minus-annihilation orientation as the
Poisson equation, so gV = delta_1 reproduces phi exactly); back
substitution from an extended horizon keeps truncation error away from
the reported window.  The compound pmf itself comes from the Panjer
recursion.

The approximation bounds evaluate their defining expectations exactly on
the enumerated space (or through iid convolutions when the space is too
large to enumerate), so "bound >= exact total variation" is a testable
statement, not an asymptotic one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .malliavin import add_one_cost, gradient, l_inverse, tilde_grad
from .space import ModelParams, PathFunctional, space


# -- constants and generic helpers --------------------------------------------------

def stein_constants(lam0: float) -> tuple[float, float, float]:
    """Sup-norm estimates for (phi, grad phi, grad^2 phi) at intensity lam0."""
    if lam0 <= 0:
        raise ValueError(f"lam0 must be positive, got {lam0}")
    return (
        min(1.0, math.sqrt(2.0 / (math.e * lam0))),
        (1.0 - math.exp(-lam0)) / lam0,
        2.0 * (1.0 - math.exp(-lam0)) / lam0**2,
    )


def poisson_pmf(lam0: float, k_max: int) -> np.ndarray:
    return stats.poisson.pmf(np.arange(k_max + 1), lam0)


def _as_mask(A: Iterable[int] | np.ndarray, k_max: int) -> np.ndarray:
    if isinstance(A, np.ndarray) and A.dtype == bool:
        if len(A) > k_max + 1:
            raise ValueError(f"set mask of length {len(A)} exceeds table range 0..{k_max}")
        mask = np.zeros(k_max + 1, dtype=bool)
        mask[: len(A)] = A
        return mask
    mask = np.zeros(k_max + 1, dtype=bool)
    for j in A:
        if not 0 <= int(j) <= k_max:
            raise ValueError(f"set element {j} outside 0..{k_max}")
        mask[int(j)] = True
    return mask


def default_k_max(lam0: float) -> int:
    return int(10 * lam0 + 50)


# -- Poisson Stein solution ----------------------------------------------------------

@dataclass
class SteinSolution:
    """Solved Stein table for one target intensity and one set A."""

    lam0: float
    a_mask: np.ndarray          # membership of A over 0..K_max
    phi: np.ndarray             # phi(0..K_max+1), phi(0) = 0
    k_max: int
    residual: float             # max |recursion residual| over k = 0..K_max

    @property
    def grad(self) -> np.ndarray:
        return np.diff(self.phi)

    @property
    def grad2(self) -> np.ndarray:
        return np.diff(self.phi, 2)

    def norm_slacks(self) -> dict[str, float]:
        """Positive entries mean the corresponding sup-norm estimate fails."""
        b_phi, b_grad, b_grad2 = stein_constants(self.lam0)
        return {
            "phi": float(np.max(np.abs(self.phi[: self.k_max + 1])) - b_phi),
            "grad": float(np.max(np.abs(self.grad)) - b_grad),
            "grad2": float(np.max(np.abs(self.grad2)) - b_grad2),
        }


def solve_stein_poisson(lam0: float, A: Iterable[int] | np.ndarray, k_max: int | None = None) -> SteinSolution:
    """Solve the Poisson Stein equation for the set A on 0..k_max."""
    if lam0 <= 0:
        raise ValueError(f"lam0 must be positive, got {lam0}")
    k_max = default_k_max(lam0) if k_max is None else int(k_max)
    mask = _as_mask(A, k_max)
    ks = np.arange(k_max + 1)
    pmf = stats.poisson.pmf(ks, lam0)
    if np.any(pmf == 0.0):
        raise ValueError(f"k_max={k_max} too large for float precision at lam0={lam0}")
    cdf = stats.poisson.cdf(ks, lam0)
    sf = stats.poisson.sf(ks, lam0)
    in_a = np.where(mask, pmf, 0.0)
    p_a_low = np.cumsum(in_a)                                  # P(A & {<=k})
    above = in_a[::-1].cumsum()[::-1]
    p_a_high = np.concatenate([above[1:], [0.0]])              # P(A & {>k})
    if mask.all():
        # an all-true mask means A is the whole lattice: P(A) = 1 and the
        # upper mass is the full tail, so the solution vanishes identically
        p_a_low = cdf
        p_a_high = sf
    phi = np.zeros(k_max + 2)
    phi[1:] = (p_a_low * sf - p_a_high * cdf) / (lam0 * pmf)
    p_a = float(p_a_low[-1]) + (float(sf[-1]) if mask.all() else 0.0)
    res = lam0 * phi[ks + 1] - ks * phi[ks] - (mask.astype(float) - p_a)
    residual = float(np.max(np.abs(res)))
    if residual > 1e-12:
        raise RuntimeError(f"Stein recursion residual {residual} exceeds 1e-12")
    return SteinSolution(lam0=lam0, a_mask=mask, phi=phi, k_max=k_max, residual=residual)


# -- compound Poisson target -----------------------------------------------------------

def compound_pmf(lam0: float, mark_pmf: np.ndarray, length: int) -> np.ndarray:
    """Panjer recursion for the compound Poisson law on 0..length-1;
    mark_pmf[k-1] = P(V = k)."""
    p = np.zeros(length)
    p[0] = math.exp(-lam0)
    kmax = len(mark_pmf)
    weighted = np.arange(1, kmax + 1) * mark_pmf
    for s in range(1, length):
        width = min(s, kmax)
        p[s] = lam0 * float(np.dot(weighted[:width], p[s - 1 :: -1][:width])) / s
    return p


@dataclass
class CompoundTarget:
    """Compound Poisson law PC(lam0, gV) with a positive-integer mark pmf."""

    lam0: float
    mark_pmf: np.ndarray         # P(V = k) for k = 1..cutoff
    tail_tol: float = 1e-12
    pmf: np.ndarray | None = None

    def __post_init__(self):
        if self.lam0 <= 0:
            raise ValueError(f"lam0 must be positive, got {self.lam0}")
        self.mark_pmf = np.asarray(self.mark_pmf, dtype=float)
        if np.any(self.mark_pmf < 0):
            raise ValueError("mark pmf entries must be nonnegative")
        if abs(self.mark_pmf.sum() - 1.0) > 1e-9:
            raise ValueError(f"mark pmf must sum to 1, got {self.mark_pmf.sum()!r}")
        if self.pmf is None:
            length = max(64, int(8 * self.lam0 * self.mean_mark) + 64)
            while True:
                pmf = compound_pmf(self.lam0, self.mark_pmf, length)
                if 1.0 - pmf.sum() <= self.tail_tol:
                    break
                length *= 2
                if length > 2**22:
                    raise ValueError("compound pmf support too large for the tail tolerance")
            self.pmf = pmf
        if 1.0 - self.pmf.sum() > self.tail_tol:
            raise ValueError("compound pmf table misses more than the tail tolerance")

    @property
    def mean_mark(self) -> float:
        return float(np.dot(np.arange(1, len(self.mark_pmf) + 1), self.mark_pmf))

    @property
    def d_pc(self) -> float:
        """Sup-norm estimate for the compound Stein solutions."""
        g1 = float(self.mark_pmf[0])
        lead = 1.0 if g1 == 0.0 else min(1.0, 1.0 / (self.lam0 * g1))
        return lead * math.exp(self.lam0)

    def prob_of(self, mask: np.ndarray) -> float:
        width = min(len(mask), len(self.pmf))
        return float(self.pmf[:width][mask[:width]].sum())

    @classmethod
    def polya_aeppli(cls, lam0: float, alpha: float, cutoff: int = 64) -> "CompoundTarget":
        """Poisson(lam0) compounded by geometric(1-alpha) marks."""
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        if alpha == 0.0:
            gv = np.zeros(1)
            gv[0] = 1.0
        else:
            gv = (1.0 - alpha) * alpha ** np.arange(cutoff)
        return cls(lam0=lam0, mark_pmf=gv)


def compound_stein_solve(target: CompoundTarget, A: Iterable[int] | np.ndarray,
                         l_max: int | None = None, extension: int = 64) -> tuple[np.ndarray, float]:
    """Solve the compound Stein equation for l = 1..l_max.

    Back substitution runs on 1..l_max+extension with zero tail, so the
    truncation error has decayed below rounding inside the reported
    window; returns (psi(0..l_max) with psi(0) = 0, max residual).
    """
    l_max = default_k_max(target.lam0 * target.mean_mark) if l_max is None else int(l_max)
    mask = _as_mask(A, l_max)
    p_a = target.prob_of(mask)
    kmax = len(target.mark_pmf)
    weighted = np.arange(1, kmax + 1) * target.mark_pmf
    total = l_max + extension
    psi = np.zeros(total + kmax + 2)
    for l in range(total, 0, -1):
        h = (1.0 if l <= l_max and mask[l] else 0.0) - p_a
        acc = float(np.dot(weighted, psi[l + 1 : l + 1 + kmax]))
        psi[l] = (target.lam0 * acc - h) / l
    ls = np.arange(1, l_max + 1)
    conv = np.array([float(np.dot(weighted, psi[l + 1 : l + 1 + kmax])) for l in ls])
    res = target.lam0 * conv - ls * psi[1 : l_max + 1] - (mask[1:].astype(float) - p_a)
    return psi[: l_max + 1].copy(), float(np.max(np.abs(res)))


# -- exact total variation -------------------------------------------------------------

def exact_tv(pmf_a: Sequence[float], pmf_b: Sequence[float]) -> float:
    """Total variation distance 0.5 * sum |a - b| with tail mass folded in."""
    a = np.asarray(pmf_a, dtype=float)
    b = np.asarray(pmf_b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("pmf tables must be nonnegative")
    width = max(len(a), len(b))
    a = np.pad(a, (0, width - len(a)))
    b = np.pad(b, (0, width - len(b)))
    tail_a = 1.0 - a.sum()
    tail_b = 1.0 - b.sum()
    return 0.5 * (float(np.abs(a - b).sum()) + abs(tail_a - tail_b))


def functional_pmf(F: PathFunctional, tol: float = 1e-9) -> np.ndarray:
    """Law of a Z+-valued exact functional as a pmf table."""
    sp = space(F.params)
    vals = F.table()
    rounded = np.rint(vals)
    if np.max(np.abs(vals - rounded)) > tol or np.min(rounded) < 0:
        raise ValueError("functional is not Z+-valued")
    return np.bincount(rounded.astype(int), weights=sp.probabilities)


# -- Poisson approximation bound ---------------------------------------------------------

def poisson_bound(F: PathFunctional, lam0: float) -> float:
    """Exact evaluation of the Poisson-approximation bound for a simple
    binomial functional: with G = L^{-1}(F - E F),

        (1-e^-lam0)/lam0   * E| lam0 - <Dtilde F, -D G>_nu |
      + (1-e^-lam0)/lam0^2 * E[ sum_t nu_t |Dtilde_t F (Dtilde_t F - 1)| |D_t G| ].
    """
    params = F.params
    if params.n_marks != 1:
        raise ValueError(f"mark-space size must be 1, got {params.n_marks}")
    if lam0 <= 0:
        raise ValueError(f"lam0 must be positive, got {lam0}")
    sp = space(params)
    vals = F.table()
    rounded = np.rint(vals)
    if np.max(np.abs(vals - rounded)) > 1e-9 or np.min(rounded) < 0:
        raise ValueError("functional must be Z+-valued")
    mean = sp.expectation(vals)
    if abs(mean - lam0) > 1e-9:
        raise ValueError(f"mean mismatch: E[F]={mean!r} but lam0={lam0!r}")
    k = params.marks[0]
    nu_t = params.jump_prob
    G = l_inverse(PathFunctional(params, values=vals - mean))
    inner = np.zeros(sp.n)
    second = np.zeros(sp.n)
    for t in range(1, params.horizon + 1):
        d_tilde = tilde_grad(F, (t, k)).table()
        minus_dg = -gradient(G, (t, k)).table()
        inner += nu_t * d_tilde * minus_dg
        second += nu_t * np.abs(d_tilde * (d_tilde - 1.0)) * np.abs(minus_dg)
    c1 = (1.0 - math.exp(-lam0)) / lam0
    c2 = (1.0 - math.exp(-lam0)) / lam0**2
    return c1 * sp.expectation(np.abs(lam0 - inner)) + c2 * sp.expectation(second)


# -- compound Poisson approximation bound --------------------------------------------------

def default_set_family(length: int, extra_diff: tuple[np.ndarray, np.ndarray] | None = None) -> list[np.ndarray]:
    """Singletons, lower intervals, and (optionally) the positive-part set
    of a pmf difference, as boolean masks over 0..length-1."""
    family = []
    for j in range(length):
        single = np.zeros(length, dtype=bool)
        single[j] = True
        family.append(single)
        lower = np.zeros(length, dtype=bool)
        lower[: j + 1] = True
        family.append(lower)
    if extra_diff is not None:
        a, b = extra_diff
        width = min(len(a), len(b), length)
        diff = np.zeros(length, dtype=bool)
        diff[:width] = a[:width] > b[:width]
        family.append(diff)
    return family


def _first_chaos_step_law(F: PathFunctional) -> ModelParams:
    """Validate F = sum_j V_j dN_j on its space and return the params."""
    params = F.params
    marks_rounded = [round(k) for k in params.marks]
    if any(abs(k - r) > 1e-12 or r < 1 for k, r in zip(params.marks, marks_rounded)):
        raise ValueError("unsupported functional form: marks must be positive integers")
    vals = F.table()
    if abs(vals[0]) > 1e-9:
        raise ValueError("unsupported functional form: F(no jumps) must be 0")
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            d = add_one_cost(F, (t, k)).table()
            if np.max(np.abs(d - k)) > 1e-9:
                raise ValueError(
                    "unsupported functional form: add-one cost is not the mark value "
                    "(F must be a first-chaos compound sum)"
                )
    return params


def compound_poisson_bound(F: PathFunctional | ModelParams, target: CompoundTarget,
                           a_family: list[np.ndarray] | None = None) -> float:
    bound, _ = compound_poisson_bound_details(F, target, a_family)
    return bound


def compound_poisson_bound_details(F: PathFunctional | ModelParams, target: CompoundTarget,
                                   a_family: list[np.ndarray] | None = None) -> tuple[float, np.ndarray]:
    """Bound for the compound sum against PC(lam0, gV): supremum over the
    set family of the two exactly evaluated integral terms of the Stein
    identity.  Returns (bound, attaining set mask).

    Accepts either an exact first-chaos functional (evaluated by
    enumeration) or bare ModelParams describing the compound sum (terms
    evaluated through iid convolutions; no enumeration needed).
    """
    if isinstance(F, PathFunctional):
        params = _first_chaos_step_law(F)
    else:
        params = F
    lam = params.jump_prob
    marks = [int(round(k)) for k in params.marks]
    if any(k < 1 for k in marks):
        raise ValueError("unsupported functional form: marks must be positive integers")
    q = np.asarray(params.mark_probs)
    mean_f = lam * params.horizon * float(np.dot(marks, q))
    if abs(mean_f - target.lam0 * target.mean_mark) > 1e-9:
        raise ValueError(
            f"mean mismatch: E[F]={mean_f!r} but lam0*E[V]={target.lam0 * target.mean_mark!r}"
        )
    kmax = max(marks)
    # per-step law of one summand
    step = np.zeros(kmax + 1)
    step[0] = 1.0 - lam
    for k, qk in zip(marks, q):
        step[k] += lam * qk
    pmf_full = step.copy()
    for _ in range(params.horizon - 1):
        pmf_full = np.convolve(pmf_full, step)
    pmf_drop = np.array([1.0])
    for _ in range(params.horizon - 1):
        pmf_drop = np.convolve(pmf_drop, step)
    l_max = len(pmf_full) + kmax + 8
    family = a_family if a_family is not None else default_set_family(
        min(l_max, len(target.pmf)), extra_diff=(pmf_full, target.pmf)
    )
    # second term of the bound: integrand D+F - k vanishes identically for
    # a first-chaos compound sum
    best = -1.0
    best_mask = None
    for mask in family:
        psi, _ = compound_stein_solve(target, np.nonzero(mask)[0], l_max)
        psi_pad = np.concatenate([psi, np.zeros(kmax + 1)])
        term1 = 0.0
        for k, qk in zip(marks, q):
            # E[psi(S_{T-1} + k)] - E[psi(S_T + k)], T-1 vs T fold convolutions
            e_drop = float(np.dot(pmf_drop, psi_pad[k : k + len(pmf_drop)]))
            e_full = float(np.dot(pmf_full, psi_pad[k : k + len(pmf_full)]))
            term1 += lam * qk * k * (e_drop - e_full)
        term1 *= params.horizon
        if abs(term1) > best:
            best = abs(term1)
            best_mask = mask
    return best, best_mask


# -- head run application -------------------------------------------------------------------

def head_run_params(n: int, m: int, p: float, rng_seed: int = 0) -> ModelParams:
    """Simple binomial space of length n+m-1 with jump probability p."""
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return ModelParams(horizon=n + m - 1, marks=(1.0,), jump_prob=p, mark_probs=(1.0,), rng_seed=rng_seed)


def head_run_lambda0(n: int, m: int, p: float) -> float:
    return p**m * ((n - 1) * (1.0 - p) + 1.0)


def _head_run_values(digits: np.ndarray, n: int, m: int) -> np.ndarray:
    jumps = (digits > 0).astype(float)
    u = np.prod(jumps[..., :m], axis=-1)
    for i in range(1, n):
        u = u + (1.0 - jumps[..., i - 1]) * np.prod(jumps[..., i : i + m], axis=-1)
    return u


def head_run_functional(n: int, m: int, p: float, rng_seed: int = 0) -> PathFunctional:
    """Number of clumps of success runs of length >= m starting in the
    first n tosses; exact table when the space fits the cap, otherwise a
    callable for Monte Carlo use."""
    params = head_run_params(n, m, p, rng_seed)
    try:
        sp = space(params)
    except ValueError:
        return PathFunctional.from_callable(params, lambda digits: _head_run_values(digits, n, m))
    return PathFunctional(params, values=_head_run_values(sp.digits, n, m))


def head_run_variance_identity(n: int, m: int, p: float) -> float:
    """Closed-form variance claimed for the clump count; kept verbatim so
    the acceptance checks can compare it against exact enumeration."""
    q = 1.0 - p
    lam0 = head_run_lambda0(n, m, p)
    return lam0 - 2 * m * q * p ** (2 * m) - (2 * m - 1) * q * q * p ** (2 * m) - p ** (2 * m)


def head_run_bound(n: int, m: int, p: float) -> float:
    """Closed-form Poisson-approximation bound for the clump count."""
    q = 1.0 - p
    lam0 = head_run_lambda0(n, m, p)
    grad_bound = (1.0 - math.exp(-lam0)) / lam0
    return p ** (2 * m) * (2 * (m - 1) * q * q + 2 * m * q + 1.0) \
        + (n - m + 1) * q * p ** (2 * m + 1) * grad_bound


# -- DNA word count application ----------------------------------------------------------------

def dna_lambda0(n: int, h: int, alpha: float, mu_w: float) -> float:
    return (n - h + 1) * (1.0 - alpha) * mu_w


def _check_dna_args(n: int, h: int, alpha: float, mu_w: float):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if not 0.0 < mu_w < 1.0:
        raise ValueError(f"mu_w must lie in (0, 1), got {mu_w}")
    if not 0 < h < n:
        raise ValueError(f"need 0 < h < n, got h={h}, n={n}")


def dna_functional(n: int, h: int, alpha: float, mu_w: float, k_cutoff: int = 40) -> np.ndarray:
    """Exact pmf of the geometric-marked occurrence count H: the
    (n-h+1)-fold convolution of one step (no jump w.p. 1 - lam',
    geometric(1-alpha) mark w.p. lam' = (1-alpha) mu_w), marks truncated
    at k_cutoff."""
    _check_dna_args(n, h, alpha, mu_w)
    lamp = (1.0 - alpha) * mu_w
    if alpha == 0.0:
        gv = np.array([1.0])
    else:
        gv = (1.0 - alpha) * alpha ** np.arange(k_cutoff)
    step = np.zeros(len(gv) + 1)
    step[0] = 1.0 - lamp
    step[1:] = lamp * gv
    pmf = np.array([1.0])
    for _ in range(n - h + 1):
        pmf = np.convolve(pmf, step)
    return pmf


def dna_target(n: int, h: int, alpha: float, mu_w: float, cutoff: int = 64) -> CompoundTarget:
    """Polya-Aeppli law matched to the occurrence count."""
    return CompoundTarget.polya_aeppli(dna_lambda0(n, h, alpha, mu_w), alpha, cutoff)


def dna_bound(n: int, h: int, alpha: float, mu_w: float) -> float:
    """2 h mu(W) declumping term plus (n-h+1) d_PC mu(W)^2."""
    _check_dna_args(n, h, alpha, mu_w)
    target = dna_target(n, h, alpha, mu_w)
    return 2.0 * h * mu_w + (n - h + 1) * target.d_pc * mu_w**2
