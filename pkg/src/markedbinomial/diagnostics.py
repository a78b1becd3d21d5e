"""Exact identity suite: every structural identity of the calculus,
evaluated on the enumerated space and reported as a max residual.

Used by the ``verify`` CLI subcommand and by the acceptance tests.  All
randomness is drawn from seeded generators, so a report is a pure
function of (params, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np

from . import basis as basis_mod
from . import chaos as chaos_mod
from . import girsanov as girsanov_mod
from . import malliavin as mal
from .space import ModelParams, PathFunctional, digits_of_rank, rank_of_digits, space


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


class _Context:
    """Shared precomputed objects for one (params, seed) run."""

    def __init__(self, params: ModelParams, seed: int):
        self.params = params
        self.sp = space(params)
        self.basis = basis_mod.build_basis(params)
        self.rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))

    def random_functional(self) -> PathFunctional:
        return PathFunctional(self.params, values=self.rng.normal(size=self.sp.n))

    def random_process(self, predictable: bool = False) -> mal.ProcessTable:
        u = mal.ProcessTable.zeros(self.params)
        u.values[:] = self.rng.normal(size=u.values.shape)
        if predictable:
            for t in range(1, self.params.horizon + 1):
                for j in range(self.params.n_marks):
                    u.values[:, t - 1, j] = self.sp.conditional_expectation(
                        u.values[:, t - 1, j], t - 1
                    )
            u.predictable = True
        return u

    def nu_weights(self) -> np.ndarray:
        return self.params.jump_prob * np.asarray(self.params.mark_probs)

    def canonical_target(self) -> girsanov_mod.TargetMeasure:
        lam_t = 0.5 * (self.params.jump_prob + 0.5)
        weights = np.asarray(self.params.mark_probs) * (
            1.0 + 0.5 * np.arange(1, self.params.n_marks + 1) / self.params.n_marks
        )
        return girsanov_mod.TargetMeasure(lam_t, tuple(weights / weights.sum()))


# -- individual checks (each returns a max residual) ----------------------------------

def _probability_normalization(ctx: _Context) -> float:
    return abs(ctx.sp.probabilities.sum() - 1.0)


def _rank_roundtrip(ctx: _Context) -> float:
    worst = 0
    for rank in range(ctx.sp.n):
        digs = digits_of_rank(rank, ctx.params.horizon, ctx.params.n_marks)
        worst = max(worst, abs(rank_of_digits(digs, ctx.params.n_marks) - rank))
    return float(worst)


def _tower_property(ctx: _Context) -> float:
    F = ctx.random_functional()
    mean = ctx.sp.expectation(F.table())
    worst = 0.0
    for t in range(ctx.params.horizon + 1):
        ce = ctx.sp.conditional_expectation(F.table(), t)
        worst = max(worst, abs(ctx.sp.expectation(ce) - mean))
    return worst


def _compensated_martingale(ctx: _Context) -> float:
    sp, params = ctx.sp, ctx.params
    worst = 0.0
    prev = np.zeros(sp.n)
    for t in range(1, params.horizon + 1):
        ybar = sp.compound_sum(t) - params.jump_prob * t * params.mean_mark
        cond = sp.conditional_expectation(ybar - prev, t - 1)
        worst = max(worst, float(np.max(np.abs(cond))))
        prev = ybar
    return worst


def _basis_inverse(ctx: _Context) -> float:
    b = ctx.basis
    eye = np.eye(ctx.params.n_marks)
    return float(np.max(np.abs(b.matrix_m @ b.matrix_m_inv - eye)))


def _basis_orthogonality(ctx: _Context) -> float:
    sp = ctx.sp
    m = ctx.params.n_marks
    worst = 0.0
    tables = [basis_mod.delta_r_table(ctx.basis, 1, k) for k in ctx.params.marks]
    for i in range(m):
        for j in range(m):
            moment = sp.expectation(tables[i] * tables[j])
            expected = ctx.basis.kappa[i] if i == j else 0.0
            worst = max(worst, abs(moment - expected))
    return worst


def _dz_equals_m_dr(ctx: _Context) -> float:
    zvals = basis_mod.z_step_values(ctx.params)
    rvals = basis_mod.r_step_values(ctx.params)
    return float(np.max(np.abs(zvals - rvals @ ctx.basis.matrix_m.T)))


def _dr_identically_distributed(ctx: _Context) -> float:
    """Same one-step law at every time: full atom-by-atom law comparison
    (probability attached to each distinct increment value)."""
    sp = ctx.sp
    worst = 0.0

    def law(table: np.ndarray) -> dict[float, float]:
        out: dict[float, float] = {}
        for value, prob in zip(np.round(table, 12), sp.probabilities):
            out[value] = out.get(value, 0.0) + prob
        return out

    for k in ctx.params.marks:
        ref = law(basis_mod.delta_r_table(ctx.basis, 1, k))
        for t in range(2, ctx.params.horizon + 1):
            cur = law(basis_mod.delta_r_table(ctx.basis, t, k))
            for value in set(ref) | set(cur):
                worst = max(worst, abs(ref.get(value, 0.0) - cur.get(value, 0.0)))
    return worst


def _dr_sum_martingale(ctx: _Context) -> float:
    sp = ctx.sp
    worst = 0.0
    for t in range(1, ctx.params.horizon + 1):
        total = np.zeros(sp.n)
        for k in ctx.params.marks:
            total += basis_mod.delta_r_table(ctx.basis, t, k)
        worst = max(worst, float(np.max(np.abs(sp.conditional_expectation(total, t - 1)))))
    return worst


def _isometry(ctx: _Context) -> float:
    sp = ctx.sp
    worst = 0.0
    max_order = min(3, ctx.params.horizon)
    kernels = {
        n: chaos_mod.random_kernel(ctx.params, n, ctx.rng) for n in range(1, max_order + 1)
    }
    others = {
        n: chaos_mod.random_kernel(ctx.params, n, ctx.rng) for n in range(1, max_order + 1)
    }
    integrals_f = {n: chaos_mod.multiple_integral(ctx.basis, kernels[n], n) for n in kernels}
    integrals_g = {n: chaos_mod.multiple_integral(ctx.basis, others[n], n) for n in others}
    for n in kernels:
        for m in others:
            lhs = sp.expectation(integrals_f[n].table() * integrals_g[m].table())
            rhs = 0.0
            if n == m:
                rhs = factorial(n) * chaos_mod.kernel_inner(ctx.basis, kernels[n], others[m], n)
            worst = max(worst, abs(lhs - rhs))
    return worst


def _conditional_truncation(ctx: _Context) -> float:
    sp = ctx.sp
    worst = 0.0
    for n in range(1, min(2, ctx.params.horizon) + 1):
        kernel = chaos_mod.random_kernel(ctx.params, n, ctx.rng)
        J = chaos_mod.multiple_integral(ctx.basis, kernel, n)
        for t in range(ctx.params.horizon + 1):
            truncated = {s: v for s, v in kernel.items() if all(tt <= t for tt, _ in s)}
            lhs = sp.conditional_expectation(J.table(), t)
            rhs = chaos_mod.multiple_integral(ctx.basis, truncated, n).table()
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def _tensor_recursion(ctx: _Context) -> float:
    """Raising identity: J_{n+1} of the symmetric product g o f_n equals the
    two-sum expansion over the time-ordered last point (n = 2)."""
    params, sp = ctx.params, ctx.sp
    if params.horizon < 3:
        return 0.0
    n = 2
    g = {s: v for s, v in chaos_mod.random_kernel(params, 1, ctx.rng).items()}
    f = chaos_mod.random_kernel(params, n, ctx.rng)
    # left side: symmetric tensor product on ordered 3-supports
    sym: dict = {}
    times = range(1, params.horizon + 1)
    from itertools import combinations, product as iproduct

    for tset in combinations(times, n + 1):
        for ks in iproduct(params.marks, repeat=n + 1):
            support = tuple(zip(tset, ks))
            acc = 0.0
            for i in range(n + 1):
                rest = support[:i] + support[i + 1 :]
                acc += g.get((support[i],), 0.0) * f.get(rest, 0.0)
            sym[support] = acc / (n + 1)
    lhs = chaos_mod.multiple_integral(ctx.basis, sym, n + 1).table()
    # right side
    rhs = np.zeros(sp.n)
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            dr = basis_mod.delta_r_table(ctx.basis, t, k)
            inner: dict = {}
            trunc: dict = {}
            for support, fv in f.items():
                if all(tt < t for tt, _ in support):
                    trunc[support] = fv
            for tset in combinations(range(1, t), n):
                for ks in iproduct(params.marks, repeat=n):
                    z = tuple(zip(tset, ks))
                    acc = 0.0
                    for i in range(n):
                        rest = z[:i] + z[i + 1 :] + ((t, k),)
                        acc += g.get((z[i],), 0.0) * f.get(rest, 0.0)
                    if acc:
                        inner[z] = acc / n
            rhs += n * chaos_mod.multiple_integral(ctx.basis, inner, n).table() * dr
            rhs += g.get(((t, k),), 0.0) * chaos_mod.multiple_integral(ctx.basis, trunc, n).table() * dr
    return float(np.max(np.abs(lhs - rhs)))


def _covariance_formula(ctx: _Context) -> float:
    sp = ctx.sp
    F, G = ctx.random_functional(), ctx.random_functional()
    cf = chaos_mod.stroock_decompose(F)
    cg = chaos_mod.stroock_decompose(G)
    lhs = sp.expectation(F.table() * G.table()) - sp.expectation(F.table()) * sp.expectation(G.table())
    return abs(lhs - chaos_mod.covariance_from_coeffs(ctx.basis, cf, cg))


def _stroock_roundtrip(ctx: _Context) -> float:
    F = ctx.random_functional()
    coeffs = chaos_mod.stroock_decompose(F)
    back = chaos_mod.reconstruct(ctx.basis, coeffs)
    return float(np.max(np.abs(back.table() - F.table())))


def _doleans(ctx: _Context) -> float:
    params = ctx.params
    h = chaos_mod.random_kernel(params, 1, ctx.rng)
    h = {s: 0.4 * v for s, v in h.items()}
    xi = chaos_mod.doleans_exponential(ctx.basis, h)
    series = chaos_mod.doleans_series(ctx.basis, h)
    worst = abs(ctx.sp.expectation(xi.table()) - 1.0)
    return max(worst, float(np.max(np.abs(xi.table() - series.table()))))


def _mecke(ctx: _Context) -> float:
    lhs, rhs = mal.mecke_check(ctx.random_process())
    return abs(lhs - rhs)


def _ipp_l1(ctx: _Context) -> float:
    """E[int D+ F u dnu] = E[F delta~ u] + E[int Dbar F u dnu], u predictable."""
    params, sp = ctx.params, ctx.sp
    F = ctx.random_functional()
    u = ctx.random_process(predictable=True)
    nu = ctx.nu_weights()
    lhs = 0.0
    bar_term = 0.0
    for t in range(1, params.horizon + 1):
        dbar = mal.bar_grad(F, t).table()
        for j, k in enumerate(params.marks):
            dplus = mal.add_one_cost(F, (t, k)).table()
            lhs += nu[j] * sp.expectation(dplus * u.values[:, t - 1, j])
            bar_term += nu[j] * sp.expectation(dbar * u.values[:, t - 1, j])
    rhs = sp.expectation(F.table() * mal.tilde_divergence(u).table()) + bar_term
    return abs(lhs - rhs)


def _ipp_tilde(ctx: _Context) -> float:
    """E[<Dtilde F, u>_nu] = E[F delta~ u], u predictable."""
    params, sp = ctx.params, ctx.sp
    F = ctx.random_functional()
    u = ctx.random_process(predictable=True)
    nu = ctx.nu_weights()
    lhs = 0.0
    for t in range(1, params.horizon + 1):
        for j, k in enumerate(params.marks):
            lhs += nu[j] * sp.expectation(mal.tilde_grad(F, (t, k)).table() * u.values[:, t - 1, j])
    return abs(lhs - sp.expectation(F.table() * mal.tilde_divergence(u).table()))


def _ipp_l2(ctx: _Context) -> float:
    """E[F delta u] = E[sum kappa_k D_(t,k)F u_(t,k)] for arbitrary u."""
    params, sp = ctx.params, ctx.sp
    F = ctx.random_functional()
    u = ctx.random_process()
    lhs = sp.expectation(F.table() * mal.divergence(u).table())
    rhs = 0.0
    for t in range(1, params.horizon + 1):
        for j, k in enumerate(params.marks):
            rhs += ctx.basis.kappa[j] * sp.expectation(
                mal.gradient(F, (t, k)).table() * u.values[:, t - 1, j]
            )
    return abs(lhs - rhs)


def _divergence_predictable_form(ctx: _Context) -> float:
    params = ctx.params
    u = ctx.random_process(predictable=True)
    delta = mal.divergence(u).table()
    acc = np.zeros(ctx.sp.n)
    for t in range(1, params.horizon + 1):
        for j, k in enumerate(params.marks):
            acc += u.values[:, t - 1, j] * basis_mod.delta_r_table(ctx.basis, t, k)
    return float(np.max(np.abs(delta - acc)))


def _divergence_indicator(ctx: _Context) -> float:
    params = ctx.params
    worst = 0.0
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            u = mal.ProcessTable.deterministic_indicator(params, (t, k))
            delta = mal.divergence(u).table()
            worst = max(
                worst,
                float(np.max(np.abs(delta - basis_mod.delta_r_table(ctx.basis, t, k)))),
            )
    return worst


def _product_rules(ctx: _Context) -> float:
    params, sp = ctx.params, ctx.sp
    F, G = ctx.random_functional(), ctx.random_functional()
    FG = F * G
    worst = 0.0
    for t in range(1, params.horizon + 1):
        zero_ranks = sp.ranks_with_digit(t, 0)
        f0 = F.table()[zero_ranks]
        g0 = G.table()[zero_ranks]
        for k in params.marks:
            dpF = mal.add_one_cost(F, (t, k)).table()
            dpG = mal.add_one_cost(G, (t, k)).table()
            lhs = mal.add_one_cost(FG, (t, k)).table()
            worst = max(worst, float(np.max(np.abs(lhs - (f0 * dpG + g0 * dpF + dpF * dpG)))))
            dmF = mal.remove_one_cost(F, (t, k)).table()
            dmG = mal.remove_one_cost(G, (t, k)).table()
            lhs_m = mal.remove_one_cost(FG, (t, k)).table()
            rhs_m = F.table() * dmG + G.table() * dmF - dmF * dmG
            worst = max(worst, float(np.max(np.abs(lhs_m - rhs_m))))
    return worst


def _gradient_chaos_route(ctx: _Context) -> float:
    params = ctx.params
    F = ctx.random_functional()
    worst = 0.0
    for t in range(1, params.horizon + 1):
        for k in params.marks:
            a = mal.gradient(F, (t, k)).table()
            b = mal.gradient_via_chaos(F, (t, k)).table()
            worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


def _gradient_equals_add_one_singleton(ctx: _Context) -> float:
    if ctx.params.n_marks != 1:
        return 0.0
    F = ctx.random_functional()
    k = ctx.params.marks[0]
    worst = 0.0
    for t in range(1, ctx.params.horizon + 1):
        diff = mal.gradient(F, (t, k)).table() - mal.add_one_cost(F, (t, k)).table()
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def _number_operator_adjoint(ctx: _Context) -> float:
    F = ctx.random_functional()
    lhs = mal.number_operator(F).table()
    rhs = -mal.divergence(mal.gradient_process(F)).table()
    return float(np.max(np.abs(lhs - rhs)))


def _l_inverse_identity(ctx: _Context) -> float:
    F = ctx.random_functional()
    centered = F.table() - ctx.sp.expectation(F.table())
    G = mal.l_inverse(PathFunctional(ctx.params, values=centered))
    back = mal.number_operator(G).table()
    return float(np.max(np.abs(back - centered)))


def _lemma_iterated_gradient(ctx: _Context) -> float:
    """E[D^(n) F] = E[F prod dR / kappa] over supports of order <= 3."""
    params, sp = ctx.params, ctx.sp
    F = ctx.random_functional()
    from itertools import combinations, product as iproduct

    worst = 0.0
    for n in range(1, min(3, params.horizon) + 1):
        for tset in combinations(range(1, params.horizon + 1), n):
            for ks in iproduct(params.marks, repeat=n):
                support = tuple(zip(tset, ks))
                lhs = sp.expectation(mal.iterated_gradient(F, support).table())
                prod_tab = np.ones(sp.n)
                for (t, k) in support:
                    j = params.mark_index(k)
                    prod_tab = prod_tab * basis_mod.delta_r_table(ctx.basis, t, k) / ctx.basis.kappa[j]
                worst = max(worst, abs(lhs - sp.expectation(F.table() * prod_tab)))
    return worst


def _stroock_covariance(ctx: _Context) -> float:
    """cov(F,G) = sum_n (1/n!) <E[D^n F], E[D^n G]> under the kappa pairing."""
    params, sp = ctx.params, ctx.sp
    F, G = ctx.random_functional(), ctx.random_functional()
    cf = chaos_mod.stroock_decompose(F)
    cg = chaos_mod.stroock_decompose(G)
    total = 0.0
    for n in range(1, params.horizon + 1):
        fk = {s: factorial(n) * v for s, v in cf.kernel(n).items()}
        gk = {s: factorial(n) * v for s, v in cg.kernel(n).items()}
        total += chaos_mod.kernel_inner(ctx.basis, fk, gk, n) / factorial(n)
    lhs = sp.expectation(F.table() * G.table()) - sp.expectation(F.table()) * sp.expectation(G.table())
    return abs(lhs - total)


def _poincare(ctx: _Context, n_draws: int = 100) -> float:
    params, sp = ctx.params, ctx.sp
    worst = 0.0
    for _ in range(n_draws):
        F = ctx.random_functional()
        var = sp.expectation(F.table() ** 2) - sp.expectation(F.table()) ** 2
        energy = 0.0
        for t in range(1, params.horizon + 1):
            for j, k in enumerate(params.marks):
                g = mal.gradient(F, (t, k)).table()
                energy += ctx.basis.kappa[j] * sp.expectation(g * g)
        worst = max(worst, var - energy)
    return max(worst, 0.0)


def _commutation(ctx: _Context) -> float:
    params = ctx.params
    F = ctx.random_functional()
    worst = 0.0
    for tau in (0.1, 0.5, 1.0):
        P = mal.ou_spectral(F, tau)
        for t in range(1, params.horizon + 1):
            for k in params.marks:
                lhs = mal.gradient(P, (t, k)).table()
                rhs = math.exp(-tau) * mal.ou_spectral(mal.gradient(F, (t, k)), tau).table()
                worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def _l_inverse_integral(ctx: _Context) -> float:
    """L^{-1} as minus the semigroup time integral, 64-node Gauss-Laguerre."""
    params, sp = ctx.params, ctx.sp
    nodes, weights = np.polynomial.laguerre.laggauss(64)
    worst = 0.0
    for n in range(1, min(params.horizon, 6) + 1):
        approx = float(np.dot(weights, np.exp(-(n - 1) * nodes)))
        worst = max(worst, abs(approx - 1.0 / n))
    if params.horizon <= 6:
        F = ctx.random_functional()
        centered = PathFunctional(params, values=F.table() - sp.expectation(F.table()))
        linv = mal.l_inverse(centered).table()
        acc = np.zeros(sp.n)
        for x, w in zip(nodes, weights):
            acc += (w * math.exp(x)) * mal.ou_spectral(centered, x).table()
        worst = max(worst, float(np.max(np.abs(linv + acc))))
    return worst


def _contractivity(ctx: _Context) -> float:
    sp = ctx.sp
    F = ctx.random_functional()
    worst = 0.0
    for tau in (0.1, 1.0):
        P = mal.ou_spectral(F, tau).table()
        for p in (1, 2):
            worst = max(worst, sp.expectation(np.abs(P) ** p) - sp.expectation(np.abs(F.table()) ** p))
    return max(worst, 0.0)


def _clark_roundtrip(ctx: _Context) -> float:
    F = ctx.random_functional()
    a = float(np.max(np.abs(mal.clark_reconstruct(F).table() - F.table())))
    b = float(np.max(np.abs(mal.clark_reconstruct_z(F).table() - F.table())))
    return max(a, b)


def _clark_second_order(ctx: _Context) -> float:
    """F = E[F|F_t] + sum_{s >= t+1} E[D_(s,k) F | F_{s-1}] dR_(s,k), any t."""
    params, sp = ctx.params, ctx.sp
    F = ctx.random_functional()
    integrand = mal.clark_integrand(F)
    worst = 0.0
    for t in range(params.horizon + 1):
        acc = sp.conditional_expectation(F.table(), t)
        for s in range(t + 1, params.horizon + 1):
            for j, k in enumerate(params.marks):
                acc = acc + integrand.values[:, s - 1, j] * basis_mod.delta_r_table(ctx.basis, s, k)
        worst = max(worst, float(np.max(np.abs(acc - F.table()))))
    return worst


def _gamma_tilde(ctx: _Context) -> float:
    sp = ctx.sp
    F, G = ctx.random_functional(), ctx.random_functional()
    direct = mal.gamma_tilde(F, G).table()
    expanded = mal.gamma_tilde_expansion(F, G).table()
    worst = float(np.max(np.abs(direct - expanded)))
    sym = mal.gamma_tilde(G, F).table()
    worst = max(worst, float(np.max(np.abs(direct - sym))))
    lhs = -sp.expectation(direct)
    rhs = 0.5 * (
        sp.expectation(F.table() * mal.tilde_number_operator(G).table())
        + sp.expectation(G.table() * mal.tilde_number_operator(F).table())
    )
    return max(worst, abs(lhs - rhs))


def _tilde_divergence_centered(ctx: _Context) -> float:
    u = ctx.random_process(predictable=True)
    return abs(ctx.sp.expectation(mal.tilde_divergence(u).table()))


def _singleton_l_operators(ctx: _Context) -> float:
    if ctx.params.n_marks != 1:
        return 0.0
    F = ctx.random_functional()
    diff = mal.tilde_number_operator(F).table() - mal.number_operator(F).table()
    return float(np.max(np.abs(diff)))


def _girsanov_block(ctx: _Context) -> float:
    params, sp = ctx.params, ctx.sp
    target = ctx.canonical_target()
    dens = girsanov_mod.girsanov_density(params, target).table()
    tgt_probs = space(target.as_params(params)).probabilities
    worst = abs(sp.expectation(dens) - 1.0)
    rel = np.abs(dens * sp.probabilities - tgt_probs) / tgt_probs
    worst = max(worst, float(np.max(rel)))
    via_doleans = girsanov_mod.girsanov_density_doleans(params, target).table()
    worst = max(worst, float(np.max(np.abs(via_doleans - dens))))
    via_varphi = girsanov_mod.girsanov_density_varphi(params, target).table()
    worst = max(worst, float(np.max(np.abs(via_varphi - dens))))
    prev = np.ones(sp.n)
    for t in range(1, params.horizon + 1):
        cur = girsanov_mod.girsanov_density(params, target, t).table()
        worst = max(worst, float(np.max(np.abs(sp.conditional_expectation(cur, t - 1) - prev))))
        prev = cur
    F = ctx.random_functional()
    direct = float(np.dot(space(target.as_params(params)).probabilities, F.table()))
    worst = max(worst, abs(girsanov_mod.reweighted_expectation(F, target) - direct))
    return worst


CHECKS: list[tuple[str, float, Callable[[_Context], float]]] = [
    ("probability_normalization", 1e-12, _probability_normalization),
    ("rank_roundtrip", 0.0, _rank_roundtrip),
    ("tower_property", 1e-12, _tower_property),
    ("compensated_martingale", 1e-12, _compensated_martingale),
    ("basis_inverse", 1e-12, _basis_inverse),
    ("basis_orthogonality", 1e-12, _basis_orthogonality),
    ("dz_equals_m_dr", 1e-12, _dz_equals_m_dr),
    ("dr_identically_distributed", 1e-12, _dr_identically_distributed),
    ("dr_sum_martingale", 1e-12, _dr_sum_martingale),
    ("isometry", 1e-10, _isometry),
    ("conditional_truncation", 1e-12, _conditional_truncation),
    ("tensor_recursion", 1e-12, _tensor_recursion),
    ("covariance_formula", 1e-10, _covariance_formula),
    ("stroock_roundtrip", 1e-9, _stroock_roundtrip),
    ("doleans_product_vs_series", 1e-10, _doleans),
    ("mecke", 1e-12, _mecke),
    ("ipp_l1", 1e-12, _ipp_l1),
    ("ipp_tilde", 1e-12, _ipp_tilde),
    ("ipp_l2", 1e-10, _ipp_l2),
    ("divergence_predictable_form", 1e-10, _divergence_predictable_form),
    ("divergence_indicator", 1e-12, _divergence_indicator),
    ("product_rules", 1e-12, _product_rules),
    ("gradient_chaos_route", 1e-10, _gradient_chaos_route),
    ("gradient_add_one_singleton", 1e-10, _gradient_equals_add_one_singleton),
    ("number_operator_adjoint", 1e-10, _number_operator_adjoint),
    ("l_inverse_identity", 1e-10, _l_inverse_identity),
    ("lemma_iterated_gradient", 1e-10, _lemma_iterated_gradient),
    ("stroock_covariance", 1e-10, _stroock_covariance),
    ("poincare", 1e-12, _poincare),
    ("commutation", 1e-10, _commutation),
    ("l_inverse_integral_gl64", 1e-8, _l_inverse_integral),
    ("contractivity", 1e-12, _contractivity),
    ("clark_roundtrip", 1e-9, _clark_roundtrip),
    ("clark_second_order", 1e-10, _clark_second_order),
    ("gamma_tilde", 1e-10, _gamma_tilde),
    ("tilde_divergence_centered", 1e-12, _tilde_divergence_centered),
    ("singleton_l_operators", 1e-10, _singleton_l_operators),
    ("girsanov_block", 1e-12, _girsanov_block),
]


def run_identity_suite(params: ModelParams, seed: int = 0) -> list[CheckResult]:
    """Evaluate every identity on the enumerated space for ``params``."""
    ctx = _Context(params, seed)
    return [CheckResult(name, float(fn(ctx)), tol) for name, tol, fn in CHECKS]


def worst_offender(results: list[CheckResult]) -> CheckResult | None:
    failing = [r for r in results if not r.passed]
    if not failing:
        return None
    return max(failing, key=lambda r: r.residual - r.tolerance)
