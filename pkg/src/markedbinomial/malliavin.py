"""Difference operators, gradients, divergences and the number operator.

Two families of operators live side by side.

L1 family (pathwise differences, no basis involved):

    add-one cost      D+_(t,k) F = F(digit t := k) - F(digit t := 0)
    remove-one cost   D-_(t,k) F = (F - F(digit t := 0)) 1{digit t = k}
    restriction       Dbar_t  F = F - F(digit t := 0)
    centered shift    Dtilde_(t,k) F = F(digit t := k) - F
    divergence        delta_tilde(u) = sum_{(t,k) in omega} u - integral u dnu

with the number operator L_tilde F = -delta_tilde(D+ F).

L2 family (tied to the orthogonal increment basis):

    gradient   D_(t,k) F = E[F dR_(t,k) | everything except step t] / kappa_k,

the annihilation operator of the chaotic decomposition: it maps J_n(f_n)
to n J_{n-1}(f_n(.,(t,k))) and returns the kernel of a first-order
integral.  On a singleton mark space D coincides with the add-one cost;
with several marks the two differ (the add-one cost of dR_(t,k^2)
picks up the Gram-Schmidt correction), so each identity below is stated
for the operator that actually satisfies it.  The divergence is the
exact kappa-weighted adjoint of D on the enumerated space, the number
operator L multiplies order-n coefficients by -n, and L = -delta D.

The Ornstein-Uhlenbeck semigroup acts spectrally (order-n coefficients
scaled by exp(-n tau)); its pathwise form resamples each digit
independently: keep with probability exp(-tau), otherwise redraw from
the one-step marginal.  Both routes agree exactly in distribution, which
the Monte Carlo estimator checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import exp, sqrt

import numpy as np

from .basis import Point, build_basis, delta_r_table, r_step_values
from .chaos import chaos_order_tensor, coefficient_tensor, synthesize
from .space import ModelParams, PathFunctional, space


@dataclass
class ProcessTable:
    """Exact process u(omega, (t,k)): array of shape (n_configs, T, m)."""

    params: ModelParams
    values: np.ndarray
    predictable: bool = False

    def __post_init__(self):
        expected = (self.params.n_configurations, self.params.horizon, self.params.n_marks)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != expected:
            raise ValueError(f"process table must have shape {expected}, got {self.values.shape}")
        if self.predictable and not self.is_predictable():
            raise ValueError("process marked predictable is not F_{t-1}-measurable")

    def is_predictable(self, tol: float = 0.0) -> bool:
        sp = space(self.params)
        for t in range(1, self.params.horizon + 1):
            # the atom id is the rank of the atom's representative (future digits 0)
            atoms = sp.atom_ids(t - 1)
            for k in range(self.params.n_marks):
                col = self.values[:, t - 1, k]
                if np.max(np.abs(col - col[atoms])) > tol:
                    return False
        return True

    @classmethod
    def zeros(cls, params: ModelParams) -> "ProcessTable":
        return cls(params, np.zeros((params.n_configurations, params.horizon, params.n_marks)))

    @classmethod
    def deterministic_indicator(cls, params: ModelParams, point: Point) -> "ProcessTable":
        t, k = point
        u = cls.zeros(params)
        u.values[:, t - 1, params.mark_index(k)] = 1.0
        return u

    @classmethod
    def from_function(cls, params: ModelParams, fn) -> "ProcessTable":
        """fn(t, k) -> table over configurations (t is 1-based, k a mark value)."""
        u = cls.zeros(params)
        for t in range(1, params.horizon + 1):
            for j, k in enumerate(params.marks):
                u.values[:, t - 1, j] = np.asarray(fn(t, k), dtype=float)
        return u


# -- L1 difference operators -------------------------------------------------------

def add_one_cost(F: PathFunctional, point: Point) -> PathFunctional:
    """D+: force a jump with mark k at t versus no jump at t."""
    sp = space(F.params)
    t, k = point
    vals = F.table()
    j = F.params.mark_index(k)
    return PathFunctional(F.params, values=vals[sp.ranks_with_digit(t, j + 1)] - vals[sp.ranks_with_digit(t, 0)])


def remove_one_cost(F: PathFunctional, point: Point) -> PathFunctional:
    """D-: cost of removing the jump (t,k) where it is present, else 0."""
    sp = space(F.params)
    t, k = point
    vals = F.table()
    j = F.params.mark_index(k)
    present = sp.digits[:, t - 1] == j + 1
    return PathFunctional(F.params, values=np.where(present, vals - vals[sp.ranks_with_digit(t, 0)], 0.0))


def bar_grad(F: PathFunctional, t: int) -> PathFunctional:
    sp = space(F.params)
    vals = F.table()
    return PathFunctional(F.params, values=vals - vals[sp.ranks_with_digit(t, 0)])


def tilde_grad(F: PathFunctional, point: Point) -> PathFunctional:
    sp = space(F.params)
    t, k = point
    vals = F.table()
    j = F.params.mark_index(k)
    return PathFunctional(F.params, values=vals[sp.ranks_with_digit(t, j + 1)] - vals)


def iterated_difference(F: PathFunctional, support: tuple[Point, ...]) -> PathFunctional:
    """Iterated add-one cost on a support with strictly increasing times:
    the alternating sum over subsets J of [n] of F(all support digits
    zeroed, digits restored on J)."""
    params = F.params
    sp = space(params)
    times = [t for t, _ in support]
    if len(set(times)) != len(times):
        raise ValueError(f"support times must be distinct, got {support}")
    vals = F.table()
    n = len(support)
    out = np.zeros(sp.n)
    for mask in range(1 << n):
        ranks = np.arange(sp.n, dtype=np.int64)
        popcount = 0
        for i, (t, k) in enumerate(support):
            digit = params.mark_index(k) + 1 if mask >> i & 1 else 0
            popcount += mask >> i & 1
            cur = sp.digits[ranks, t - 1].astype(np.int64)
            ranks = ranks + (digit - cur) * sp.powers[t - 1]
        out += (-1.0) ** (n - popcount) * vals[ranks]
    return PathFunctional(params, values=out)


# -- L2 gradient family -------------------------------------------------------------

def gradient(F: PathFunctional, point: Point) -> PathFunctional:
    """Annihilation gradient D_(t,k): projection of the step-t slice of F
    onto dR_(t,k), normalized by kappa_k.  Independent of digit t."""
    params = F.params
    sp = space(params)
    basis = build_basis(params)
    t, k = point
    j = params.mark_index(k)
    rstep = r_step_values(params)
    vals = F.table()
    acc = np.zeros(sp.n)
    for d in range(sp.base):
        acc += sp.step_weights[d] * rstep[d, j] * vals[sp.ranks_with_digit(t, d)]
    return PathFunctional(params, values=acc / basis.kappa[j])


def gradient_process(F: PathFunctional) -> ProcessTable:
    params = F.params
    u = ProcessTable.zeros(params)
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            u.values[:, t - 1, params.mark_index(k)] = gradient(F, (t, k)).table()
    return u


def iterated_gradient(F: PathFunctional, support: tuple[Point, ...]) -> PathFunctional:
    """D^(n) built from the annihilation gradient (operators at distinct
    times commute); its expectation is n! times the chaos kernel."""
    times = [t for t, _ in support]
    if len(set(times)) != len(times):
        raise ValueError(f"support times must be distinct, got {support}")
    out = F
    for point in support:
        out = gradient(out, point)
    return out


def gradient_via_chaos(F: PathFunctional, point: Point) -> PathFunctional:
    """Same operator computed through the coefficient tensor (cross-check)."""
    params = F.params
    t, k = point
    j = params.mark_index(k) + 1
    C = coefficient_tensor(F)
    out = np.zeros_like(C)
    sl_src = [slice(None)] * params.horizon
    sl_dst = [slice(None)] * params.horizon
    sl_src[t - 1] = j
    sl_dst[t - 1] = 0
    out[tuple(sl_dst)] = C[tuple(sl_src)]
    return synthesize(params, out)


# -- divergences ---------------------------------------------------------------------

def divergence(u: ProcessTable) -> PathFunctional:
    """Exact adjoint of the gradient: the unique functional with
    E[F delta(u)] = E[sum_(t,k) kappa_k D_(t,k)F u(.,(t,k))] for every F.

    For predictable u it reduces to sum u(.,(t,k)) dR_(t,k) (checked by
    enumeration in the tests).
    """
    params = u.params
    sp = space(params)
    rstep = r_step_values(params)
    scatter = np.zeros(sp.n)
    for t in range(1, params.horizon + 1):
        for j in range(params.n_marks):
            weight = sp.probabilities * u.values[:, t - 1, j]
            for d in range(sp.base):
                np.add.at(scatter, sp.ranks_with_digit(t, d), weight * sp.step_weights[d] * rstep[d, j])
    return PathFunctional(params, values=scatter / sp.probabilities)


def tilde_divergence(u: ProcessTable) -> PathFunctional:
    """delta_tilde(u) = sum over charged points of u minus integral of u dnu."""
    params = u.params
    sp = space(params)
    lq = params.jump_prob * np.asarray(params.mark_probs)
    charged = np.zeros(sp.n)
    for t in range(1, params.horizon + 1):
        digit = sp.digits[:, t - 1]
        for j in range(params.n_marks):
            charged += np.where(digit == j + 1, u.values[:, t - 1, j], 0.0)
    compensator = (u.values * lq[None, None, :]).sum(axis=(1, 2))
    return PathFunctional(params, values=charged - compensator)


def mecke_check(u: ProcessTable) -> tuple[float, float]:
    """Both sides of the Mecke identity: E[sum_{(t,k) in omega} u(omega,(t,k))]
    versus sum_(t,k) nu({(t,k)}) E[u(omega with (t,k) forced, (t,k))]."""
    params = u.params
    sp = space(params)
    lq = params.jump_prob * np.asarray(params.mark_probs)
    lhs = 0.0
    rhs = 0.0
    for t in range(1, params.horizon + 1):
        digit = sp.digits[:, t - 1]
        for j in range(params.n_marks):
            lhs += sp.expectation(np.where(digit == j + 1, u.values[:, t - 1, j], 0.0))
            forced = sp.ranks_with_digit(t, j + 1)
            rhs += lq[j] * sp.expectation(u.values[forced, t - 1, j])
    return lhs, rhs


# -- number operator and inverse -------------------------------------------------------

def number_operator(F: PathFunctional) -> PathFunctional:
    """L: multiply order-n chaos coefficients by -n (equals -delta D)."""
    params = F.params
    C = coefficient_tensor(F)
    return synthesize(params, -chaos_order_tensor(params) * C)


def l_inverse(F: PathFunctional) -> PathFunctional:
    """L^{-1}: divide order-n coefficients by -n; demands E[F] = 0."""
    params = F.params
    C = coefficient_tensor(F)
    mean = float(C.reshape(-1, order="F")[0])
    if abs(mean) > 1e-9 * max(1.0, float(np.max(np.abs(C)))):
        raise ValueError(f"center first: l_inverse needs E[F] = 0, got {mean!r}")
    order = chaos_order_tensor(params)
    scale = np.where(order > 0, -1.0 / np.maximum(order, 1), 0.0)
    return synthesize(params, C * scale)


def tilde_number_operator(F: PathFunctional) -> PathFunctional:
    """L_tilde F = -delta_tilde(D+ F), the L1-theory number operator."""
    params = F.params
    u = ProcessTable.zeros(params)
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            u.values[:, t - 1, params.mark_index(k)] = add_one_cost(F, (t, k)).table()
    return PathFunctional(params, values=-tilde_divergence(u).table())


def gamma_tilde(F: PathFunctional, G: PathFunctional) -> PathFunctional:
    """Gamma_tilde(F,G) = (L_tilde(FG) - F L_tilde G - G L_tilde F) / 2."""
    FG = F * G
    out = tilde_number_operator(FG).table() - F.table() * tilde_number_operator(G).table() \
        - G.table() * tilde_number_operator(F).table()
    return PathFunctional(F.params, values=0.5 * out)


def gamma_tilde_expansion(F: PathFunctional, G: PathFunctional) -> PathFunctional:
    """Four-integral form of Gamma_tilde (product-rule expansion)."""
    params = F.params
    sp = space(params)
    lq = params.jump_prob * np.asarray(params.mark_probs)
    acc = np.zeros(sp.n)
    for t in range(1, params.horizon + 1):
        digit = sp.digits[:, t - 1]
        dbarF = bar_grad(F, t).table()
        dbarG = bar_grad(G, t).table()
        for k in params.marks:
            j = params.mark_index(k)
            dpF = add_one_cost(F, (t, k)).table()
            dpG = add_one_cost(G, (t, k)).table()
            dmF = remove_one_cost(F, (t, k)).table()
            dmG = remove_one_cost(G, (t, k)).table()
            acc += lq[j] * (dpF * dpG - dpF * dbarG - dpG * dbarF)
            acc += np.where(digit == j + 1, dmF * dmG, 0.0)
    return PathFunctional(params, values=0.5 * acc)


# -- Ornstein-Uhlenbeck semigroup ------------------------------------------------------

def ou_spectral(F: PathFunctional, tau: float) -> PathFunctional:
    """P_tau F: order-n coefficients scaled by exp(-n tau)."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    params = F.params
    C = coefficient_tensor(F)
    return synthesize(params, C * np.exp(-tau * chaos_order_tensor(params)))


def ou_mehler_mc(F: PathFunctional, tau: float, n_samples: int,
                 stream: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo Mehler estimate of P_tau F at every configuration.

    Each digit survives with probability exp(-tau) and is otherwise
    replaced by a fresh draw from the one-step marginal; one independent
    seeded substream per configuration keeps the estimate reproducible
    under any scheduling.  Returns (means, standard errors).
    """
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    params = F.params
    sp = space(params)
    vals = F.table()
    keep_p = exp(-tau)
    root = np.random.SeedSequence(params.rng_seed, spawn_key=(int(stream),))
    children = root.spawn(sp.n)
    means = np.empty(sp.n)
    errs = np.empty(sp.n)
    for i in range(sp.n):
        rng = np.random.default_rng(children[i])
        keep = rng.random((n_samples, params.horizon)) < keep_p
        fresh = rng.choice(sp.base, size=(n_samples, params.horizon), p=sp.step_weights)
        digs = np.where(keep, sp.digits[i][None, :], fresh).astype(np.int64)
        ranks = digs @ sp.powers
        sample = vals[ranks]
        means[i] = sample.mean()
        errs[i] = sample.std(ddof=1) / sqrt(n_samples)
    return means, errs


# -- Clark representation ---------------------------------------------------------------

def clark_integrand(F: PathFunctional) -> ProcessTable:
    """Predictable integrand E[D_(t,k) F | F_{t-1}]."""
    params = F.params
    sp = space(params)
    u = ProcessTable.zeros(params)
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            g = gradient(F, (t, k)).table()
            u.values[:, t - 1, params.mark_index(k)] = sp.conditional_expectation(g, t - 1)
    u.predictable = True
    return u


def clark_reconstruct(F: PathFunctional) -> PathFunctional:
    """E[F] + sum_(t,k) E[D_(t,k)F | F_{t-1}] dR_(t,k); equals F."""
    params = F.params
    sp = space(params)
    basis = build_basis(params)
    u = clark_integrand(F)
    acc = np.full(sp.n, sp.expectation(F.table()))
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            acc += u.values[:, t - 1, params.mark_index(k)] * delta_r_table(basis, t, k)
    return PathFunctional(params, values=acc)


def clark_integrand_z(F: PathFunctional) -> ProcessTable:
    """Z-coordinates of the Clark integrand: at (t, k^i) the combination
    sum_{j >= i} Minv[j, i] E[D_(t,k^j) F | F_{t-1}]."""
    params = F.params
    basis = build_basis(params)
    u = clark_integrand(F)
    out = ProcessTable.zeros(params)
    out.values[:] = np.einsum("ntj,ji->nti", u.values, basis.matrix_m_inv)
    out.predictable = True
    return out


def clark_reconstruct_z(F: PathFunctional) -> PathFunctional:
    from .basis import delta_z_table

    params = F.params
    sp = space(params)
    u = clark_integrand_z(F)
    acc = np.full(sp.n, sp.expectation(F.table()))
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            acc += u.values[:, t - 1, params.mark_index(k)] * delta_z_table(params, t, k)
    return PathFunctional(params, values=acc)
