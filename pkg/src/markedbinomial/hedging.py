"""Quadratic hedging in the two-asset ternary market.

The risky asset jumps up by factor 1+b (mark +1), down by 1+a (mark -1)
or stays put, driven by a marked binomial process with mark space
{1, -1}; the riskless asset grows by 1+r per step (-1 < a < r < b).
Discounted prices S~_t = S_t / (1+r)^t satisfy

    dS~_t = S~_{t-1} (eta_t dN_t - r) / (1+r),

which is a martingale exactly when lambda (b p + a q) = r.  The market
is incomplete: a claim F is approximated by a self-financed predictable
strategy minimizing E[(F - x - sum_t phi_t dS~_t)^2].

All conditional moments are computed exactly on the enumerated tree, so
the minimal martingale measure really turns dS~ into a martingale
tablewise, the value-process decomposition really is orthogonal, and the
recursive optimal strategy can be confronted with an independent
normal-equations oracle that solves the same least-squares problem over
every predictable strategy at once.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .space import ModelParams, PathFunctional, SampleSpace, space


@dataclass(frozen=True)
class MarketParams:
    """Ternary market description; -1 < a < r < b and lambda, p in (0, 1)."""

    a: float
    b: float
    r: float
    jump_prob: float
    up_prob: float
    horizon: int
    initial_capital: float = 0.0
    a0: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.a < self.r < self.b:
            raise ValueError(
                f"need -1 < a < r < b, got a={self.a}, r={self.r}, b={self.b}"
            )
        if not 0.0 < self.jump_prob < 1.0:
            raise ValueError(f"jump_prob must lie in (0, 1), got {self.jump_prob}")
        if not 0.0 < self.up_prob < 1.0:
            raise ValueError(f"up_prob must lie in (0, 1), got {self.up_prob}")
        if self.initial_capital < 0.0:
            raise ValueError(f"initial capital must be >= 0, got {self.initial_capital}")
        if self.a0 <= 0.0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon}")
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def down_prob(self) -> float:
        return 1.0 - self.up_prob

    @property
    def rho(self) -> float:
        """lambda q / (1 - lambda p), the Gram-Schmidt mixing weight."""
        lam, p = self.jump_prob, self.up_prob
        return lam * (1.0 - p) / (1.0 - lam * p)

    @property
    def drift_gap(self) -> float:
        """lambda (b p + a q) - r; zero exactly for martingale parameters."""
        lam, p, q = self.jump_prob, self.up_prob, self.down_prob
        return lam * (self.b * p + self.a * q) - self.r

    def model_params(self) -> ModelParams:
        """Underlying marked binomial model: marks (+1, -1), Q = (p, q)."""
        return ModelParams(
            horizon=self.horizon,
            marks=(1.0, -1.0),
            jump_prob=self.jump_prob,
            mark_probs=(self.up_prob, self.down_prob),
            rng_seed=self.rng_seed,
        )


@dataclass
class PricePaths:
    """Exact price tables per configuration (columns t = 0..T)."""

    market: MarketParams
    riskless: np.ndarray          # A_t, shape (T+1,)
    price: np.ndarray             # S_t, shape (n, T+1)
    discounted: np.ndarray        # S~_t = S_t / (1+r)^t
    increments: np.ndarray        # dS~_t, shape (n, T)


@lru_cache(maxsize=64)
def price_paths(market: MarketParams) -> PricePaths:
    """Cached per market; the returned tables are shared and read-only."""
    params = market.model_params()
    sp = space(params)
    T = market.horizon
    factor_of_digit = np.array([1.0, 1.0 + market.b, 1.0 + market.a])
    factors = factor_of_digit[sp.digits]
    price = np.concatenate([np.ones((sp.n, 1)), np.cumprod(factors, axis=1)], axis=1)
    disc = (1.0 + market.r) ** np.arange(T + 1)
    discounted = price / disc[None, :]
    paths = PricePaths(
        market=market,
        riskless=market.a0 * disc,
        price=price,
        discounted=discounted,
        increments=np.diff(discounted, axis=1),
    )
    for arr in (paths.riskless, paths.price, paths.discounted, paths.increments):
        arr.flags.writeable = False
    return paths


def martingale_diagnostics(market: MarketParams) -> tuple[float, np.ndarray]:
    """(drift gap, mean-variance tradeoff table K_0..K_T).

    K uses the closed-form per-step constant
    gap^2 / (lambda p (1-lambda p) b^2 + a^2 lambda q (1-lambda q)), so it
    is linear in t and deterministic.
    """
    lam, p, q = market.jump_prob, market.up_prob, market.down_prob
    gap = market.drift_gap
    denom = lam * p * (1.0 - lam * p) * market.b**2 + market.a**2 * lam * q * (1.0 - lam * q)
    per_step = gap**2 / denom
    return gap, per_step * np.arange(market.horizon + 1, dtype=float)


def _cond(sp: SampleSpace, values: np.ndarray, t: int) -> np.ndarray:
    return sp.conditional_expectation(values, t)


@dataclass
class MinimalMartingaleMeasure:
    """Exact minimal-martingale reweighting of the tree."""

    market: MarketParams
    theta: np.ndarray             # shape (n, T): predictable tables
    factors: np.ndarray           # per-step density factors rho_t, shape (n, T)
    density: np.ndarray           # dP^ / dP, shape (n,)
    signed: bool                  # True if the density takes nonpositive values


@lru_cache(maxsize=64)
def minimal_martingale_measure(market: MarketParams) -> MinimalMartingaleMeasure:
    """theta_t = E[dS~_t | F_{t-1}] / E[(dS~_t)^2 | F_{t-1}] and the product
    density prod (1 - theta dS~) / (1 - theta E[dS~ | F_{t-1}]); under it
    discounted prices are a martingale tablewise."""
    params = market.model_params()
    sp = space(params)
    paths = price_paths(market)
    T = market.horizon
    theta = np.empty((sp.n, T))
    factors = np.empty((sp.n, T))
    for t in range(1, T + 1):
        inc = paths.increments[:, t - 1]
        e1 = _cond(sp, inc, t - 1)
        e2 = _cond(sp, inc * inc, t - 1)
        theta[:, t - 1] = e1 / e2
        factors[:, t - 1] = (1.0 - theta[:, t - 1] * inc) / (1.0 - theta[:, t - 1] * e1)
    density = factors.prod(axis=1)
    signed = bool(np.any(density <= 0.0))
    if signed:
        warnings.warn("minimal martingale measure is signed for these parameters")
    return MinimalMartingaleMeasure(market, theta, factors, density, signed)


def mmm_conditional(market: MarketParams, mmm: MinimalMartingaleMeasure,
                    values: np.ndarray) -> list[np.ndarray]:
    """E^[values | F_t] for t = 0..T by backward induction on the density
    factors (exact, works for signed measures)."""
    sp = space(market.model_params())
    out = [None] * (market.horizon + 1)
    out[market.horizon] = np.asarray(values, dtype=float)
    for t in range(market.horizon, 0, -1):
        out[t - 1] = _cond(sp, mmm.factors[:, t - 1] * out[t], t - 1)
    return out


@dataclass
class Strategy:
    """Predictable risky quotas phi_t (one value per F_{t-1} atom, stored
    as dense tables) and the self-financed riskless quotas alpha_t."""

    market: MarketParams
    phi: np.ndarray               # shape (n, T)
    alpha: np.ndarray             # shape (n, T+1); alpha[:, 0] constant

    def phi_by_atom(self, t: int) -> np.ndarray:
        """The 3^(t-1) distinct values of phi_t (atom order)."""
        return self.phi[: 3 ** (t - 1), t - 1].copy()

    def gain(self) -> np.ndarray:
        """Discounted trading gain sum_t phi_t dS~_t per configuration."""
        return (self.phi * price_paths(self.market).increments).sum(axis=1)

    def self_financing_residual(self) -> float:
        """Max violation of A_t (alpha_{t+1}-alpha_t) + S_t (phi_{t+1}-phi_t) = 0
        over t = 0..T-1, with the convention phi_0 = phi_1."""
        paths = price_paths(self.market)
        T = self.market.horizon
        worst = 0.0
        for t in range(0, T):
            phi_next = self.phi[:, t]
            phi_cur = self.phi[:, t - 1] if t >= 1 else self.phi[:, 0]
            lhs = paths.riskless[t] * (self.alpha[:, t + 1] - self.alpha[:, t]) \
                + paths.price[:, t] * (phi_next - phi_cur)
            worst = max(worst, float(np.max(np.abs(lhs))))
        return worst


def _self_financed_alpha(market: MarketParams, phi: np.ndarray, alpha0: float) -> np.ndarray:
    """alpha_t = alpha_{t-1} - (phi_t - phi_{t-1}) S_{t-1} / A_{t-1}
    (phi_0 := phi_1), which makes the book-balance identity hold for any a0."""
    paths = price_paths(market)
    T = market.horizon
    n = phi.shape[0]
    alpha = np.empty((n, T + 1))
    alpha[:, 0] = alpha0
    prev_phi = phi[:, 0]
    for t in range(1, T + 1):
        ratio = paths.price[:, t - 1] / paths.riskless[t - 1]
        alpha[:, t] = alpha[:, t - 1] - (phi[:, t - 1] - prev_phi) * ratio
        prev_phi = phi[:, t - 1]
    return alpha


@dataclass
class KWDecomposition:
    """F = F0 + sum_t xi_t dS~_t + L_T with L a martingale orthogonal to
    the discounted price increments."""

    market: MarketParams
    f0: float
    xi: np.ndarray                # shape (n, T), predictable
    l_process: np.ndarray         # shape (n, T+1), L_0 = 0


def kunita_watanabe(market: MarketParams, F: PathFunctional) -> KWDecomposition:
    """Projection construction through the minimal martingale measure:
    V_t = E^[F | F_t], xi_t = E[dV_t dS~_t | F_{t-1}] / E[(dS~_t)^2 | F_{t-1}],
    L_t = V_t - V_0 - sum_{s<=t} xi_s dS~_s."""
    params = market.model_params()
    sp = space(params)
    paths = price_paths(market)
    mmm = minimal_martingale_measure(market)
    v_hat = mmm_conditional(market, mmm, F.table())
    T = market.horizon
    xi = np.empty((sp.n, T))
    l_process = np.zeros((sp.n, T + 1))
    for t in range(1, T + 1):
        inc = paths.increments[:, t - 1]
        dv = v_hat[t] - v_hat[t - 1]
        xi[:, t - 1] = _cond(sp, dv * inc, t - 1) / _cond(sp, inc * inc, t - 1)
        l_process[:, t] = l_process[:, t - 1] + dv - xi[:, t - 1] * inc
    return KWDecomposition(market, float(v_hat[0][0]), xi, l_process)


def optimal_strategy(market: MarketParams, F: PathFunctional,
                     x: float | None = None) -> tuple[Strategy, float]:
    """Quadratic-loss minimizing self-financed strategy for the claim F.

    Forward recursion on top of the value-process decomposition:

        phi*_t = xi_t + theta_t (E^[F | F_{t-1}] - x - G_{t-1}(phi*)),

    with G the running discounted gain; the conditioning at t-1 keeps the
    strategy predictable.  The residual risk E[(F - x - G_T)^2] matches
    the normal-equations oracle (mean-variance tradeoff is deterministic).
    """
    x = market.initial_capital if x is None else float(x)
    params = market.model_params()
    sp = space(params)
    paths = price_paths(market)
    mmm = minimal_martingale_measure(market)
    kw = kunita_watanabe(market, F)
    v_hat = mmm_conditional(market, mmm, F.table())
    T = market.horizon
    phi = np.empty((sp.n, T))
    gain = np.zeros(sp.n)
    for t in range(1, T + 1):
        phi[:, t - 1] = kw.xi[:, t - 1] + mmm.theta[:, t - 1] * (v_hat[t - 1] - x - gain)
        gain = gain + phi[:, t - 1] * paths.increments[:, t - 1]
    residual = float(sp.expectation((F.table() - x - gain) ** 2))
    alpha0 = float(v_hat[0][0]) / float(paths.price[0, 0])
    strategy = Strategy(market, phi, _self_financed_alpha(market, phi, alpha0))
    return strategy, residual


def optimal_strategy_t_conditioning(market: MarketParams, F: PathFunctional,
                                    x: float | None = None) -> float:
    """Residual of the variant that conditions the correction term on F_t
    (not predictable; reported for comparison only)."""
    x = market.initial_capital if x is None else float(x)
    params = market.model_params()
    sp = space(params)
    paths = price_paths(market)
    mmm = minimal_martingale_measure(market)
    kw = kunita_watanabe(market, F)
    v_hat = mmm_conditional(market, mmm, F.table())
    gain = np.zeros(sp.n)
    for t in range(1, market.horizon + 1):
        phi_t = kw.xi[:, t - 1] + mmm.theta[:, t - 1] * (v_hat[t] - x - gain)
        gain = gain + phi_t * paths.increments[:, t - 1]
    return float(sp.expectation((F.table() - x - gain) ** 2))


LS_ORACLE_MAX_HORIZON = 8


def ls_oracle(market: MarketParams, F: PathFunctional,
              x: float | None = None) -> tuple[Strategy, float]:
    """Independent least-squares oracle: one unknown per (t, F_{t-1} atom),
    normal equations assembled from exact enumeration moments, global
    minimizer by (minimum-norm) solve."""
    x = market.initial_capital if x is None else float(x)
    if market.horizon > LS_ORACLE_MAX_HORIZON:
        raise ValueError(
            f"ls_oracle caps the horizon at {LS_ORACLE_MAX_HORIZON}, got {market.horizon}"
        )
    params = market.model_params()
    sp = space(params)
    paths = price_paths(market)
    T = market.horizon
    sizes = [3 ** (t - 1) for t in range(1, T + 1)]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n_vars = int(offsets[-1])
    gram = np.zeros((n_vars, n_vars))
    rhs = np.zeros(n_vars)
    cols = np.empty((sp.n, T), dtype=np.int64)
    for t in range(1, T + 1):
        cols[:, t - 1] = offsets[t - 1] + sp.atom_ids(t - 1)
    target = F.table() - x
    # each configuration touches exactly T variables: rank-one updates
    for i in range(sp.n):
        c = cols[i]
        v = paths.increments[i] * sp.probabilities[i]
        gram[np.ix_(c, c)] += np.outer(v, paths.increments[i])
        rhs[c] += v * target[i]
    sol, _, rank, _ = np.linalg.lstsq(gram, rhs, rcond=None)
    if rank < n_vars:
        warnings.warn("singular normal matrix; returning the minimum-norm strategy")
    phi = np.empty((sp.n, T))
    for t in range(1, T + 1):
        phi[:, t - 1] = sol[cols[:, t - 1]]
    gain = (phi * paths.increments).sum(axis=1)
    residual = float(sp.expectation((F.table() - x - gain) ** 2))
    strategy = Strategy(market, phi, _self_financed_alpha(market, phi, 0.0))
    return strategy, residual


def call_payoff(market: MarketParams, strike: float) -> PathFunctional:
    """European call (S_T - K)+ as an exact claim table."""
    paths = price_paths(market)
    return PathFunctional(market.model_params(), values=np.maximum(paths.price[:, -1] - strike, 0.0))


def random_claim(market: MarketParams, rng: np.random.Generator) -> PathFunctional:
    """Seeded random F_T-measurable claim (testing convenience)."""
    params = market.model_params()
    return PathFunctional(params, values=rng.normal(size=params.n_configurations))


def pgf_ratio_enumerated(market: MarketParams, s: float) -> float:
    """E[s^(S_t / S_{t-1})] by enumeration of one step."""
    lam, p, q = market.jump_prob, market.up_prob, market.down_prob
    params = ModelParams(horizon=1, marks=(1.0, -1.0), jump_prob=lam, mark_probs=(p, q))
    sp = space(params)
    ratios = np.array([1.0, 1.0 + market.b, 1.0 + market.a])
    return float(np.dot(sp.probabilities, s ** ratios[sp.digits[:, 0]]))


def pgf_ratio_trinomial(market: MarketParams, s: float) -> float:
    """The trinomial one-step pgf with p~ = lambda p, q~ = lambda q."""
    lam, p, q = market.jump_prob, market.up_prob, market.down_prob
    return lam * p * s ** (1.0 + market.b) + lam * q * s ** (1.0 + market.a) + (1.0 - lam) * s
