"""Multiple stochastic integrals and chaotic decompositions.

On a finite horizon the products

    prod_i dR_(t_i, k_i),   t_1 < ... < t_n,

together with the constant 1 form an orthogonal basis of the space of
all functionals, so every F decomposes uniquely as

    F = E[F] + sum_n J_n(f_n),
    J_n(f_n) = n! * sum_{t_1<...<t_n, marks} f_n(support) prod_i dR_(t_i,k_i).

Kernels are stored sparsely by their value on time-ordered supports (the
symmetric kernel is determined there).  With this normalization the
kernel of the plain product dR_(t1,k1) * dR_(t2,k2) has value 1/2! on its
support, and the coefficients are recovered as f_n = E[D^(n) F] / n!
(expected iterated gradients, module :mod:`malliavin`).

Decomposition and reconstruction are carried out by a per-step tensor
transform: contracting axis t of the reshaped table with the analysis
matrix W[j, d] = w_d * r_j(d) / kappa_j (row j = 0 holds the step
probabilities) produces every projection coefficient in one pass, and the
synthesis matrix V[d, j] = r_j(d) inverts it exactly.

Reference inner product: kernels are paired by the kappa-weighted
counting measure, <f, g>_n = n! * sum_{ordered supports} f g prod kappa,
under which E[J_n(f) J_m(g)] = 1{n=m} n! <f, g>_n.
"""
from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from math import factorial

import numpy as np

from .basis import (
    Kernel,
    OrthogonalBasis,
    Point,
    build_basis,
    convert_coeffs_r_to_z,
    r_step_values,
    z_step_values,
)
from .space import ModelParams, PathFunctional, space


@dataclass
class ChaosCoefficients:
    """Sparse chaotic decomposition: constant term plus per-order kernels."""

    params: ModelParams
    f0: float
    orders: dict[int, Kernel] = field(default_factory=dict)

    def __post_init__(self):
        for n, kernel in self.orders.items():
            if not 1 <= n <= self.params.horizon:
                raise ValueError(f"order {n} outside 1..{self.params.horizon}")
            for support in kernel:
                if len(support) != n:
                    raise ValueError(f"support {support} has wrong size for order {n}")
                times = [t for t, _ in support]
                if any(s >= t for s, t in zip(times, times[1:])):
                    raise ValueError(f"support times must strictly increase: {support}")

    def kernel(self, n: int) -> Kernel:
        return self.orders.get(n, {})

    def scale_orders(self, factor_of_order) -> "ChaosCoefficients":
        """New coefficients with order-n kernels scaled by factor_of_order(n)."""
        scaled = {
            n: {s: v * factor_of_order(n) for s, v in kern.items()}
            for n, kern in self.orders.items()
        }
        return ChaosCoefficients(self.params, self.f0, scaled)

    def export_csv(self, path: str | os.PathLike) -> None:
        """CSV rows (order, support, value); support as 't:k' pairs joined by ';'."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["order", "support", "value"])
            writer.writerow([0, "", repr(self.f0)])
            for n in sorted(self.orders):
                for support in sorted(self.orders[n]):
                    label = ";".join(f"{t}:{k}" for t, k in support)
                    writer.writerow([n, label, repr(self.orders[n][support])])


# -- tensor transform ------------------------------------------------------------

@lru_cache(maxsize=64)
def _transform_matrices(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """(analysis W, synthesis V) for one time step; index 0 is the constant."""
    basis = build_basis(params)
    sp = space(params)
    B = sp.base
    V = np.ones((B, B))
    V[:, 1:] = r_step_values(params)
    kap = np.concatenate([[1.0], basis.kappa])
    W = (sp.step_weights[:, None] * V / kap[None, :]).T
    V.flags.writeable = False
    W.flags.writeable = False
    return W, V


def _apply_per_step(params: ModelParams, table: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    sp = space(params)
    G = np.asarray(table, dtype=float).reshape((sp.base,) * params.horizon, order="F")
    for ax in range(params.horizon):
        G = np.moveaxis(np.tensordot(matrix, G, axes=([1], [ax])), 0, ax)
    return G


def coefficient_tensor(F: PathFunctional) -> np.ndarray:
    """All orthogonal-projection coefficients of F, axis t = 0-based step,
    index 0 = constant slot, index j = mark j at that step."""
    W, _ = _transform_matrices(F.params)
    return _apply_per_step(F.params, F.table(), W)


def synthesize(params: ModelParams, coeffs: np.ndarray) -> PathFunctional:
    _, V = _transform_matrices(params)
    table = _apply_per_step(params, coeffs, V).reshape(-1, order="F")
    return PathFunctional(params, values=np.ascontiguousarray(table))


def chaos_order_tensor(params: ModelParams) -> np.ndarray:
    """Chaos order (number of non-constant slots) of every coefficient."""
    sp = space(params)
    idx = np.indices((sp.base,) * params.horizon)
    return (idx > 0).sum(axis=0)


def _tensor_to_coeffs(params: ModelParams, tensor: np.ndarray, tol: float = 0.0) -> ChaosCoefficients:
    flat = tensor.reshape(-1, order="F")
    sp = space(params)
    orders: dict[int, Kernel] = {}
    f0 = float(flat[0])
    nz = np.nonzero(np.abs(flat) > tol)[0]
    for rank in nz:
        digs = sp.digits[rank]
        pts = tuple((t + 1, params.marks[d - 1]) for t, d in enumerate(digs) if d > 0)
        n = len(pts)
        if n == 0:
            continue
        orders.setdefault(n, {})[pts] = float(flat[rank]) / factorial(n)
    return ChaosCoefficients(params, f0, orders)


def _coeffs_to_tensor(coeffs: ChaosCoefficients) -> np.ndarray:
    params = coeffs.params
    sp = space(params)
    flat = np.zeros(sp.n)
    flat[0] = coeffs.f0
    for n, kernel in coeffs.orders.items():
        fact = factorial(n)
        for support, value in kernel.items():
            rank = 0
            for t, k in support:
                rank += (params.mark_index(k) + 1) * int(sp.powers[t - 1])
            flat[rank] = fact * value
    return flat.reshape((sp.base,) * params.horizon, order="F")


# -- multiple integrals -----------------------------------------------------------

def multiple_integral(basis: OrthogonalBasis, f_n: Kernel, n: int, family: str = "R") -> PathFunctional:
    """J_n(f_n) = n! * sum over ordered supports of f_n * prod of increments.

    family "R" integrates against the orthogonal family, "Z" against the
    raw centered indicators (the pseudo-chaotic form).  Order above the
    horizon integrates to zero (warned).
    """
    params = basis.params
    sp = space(params)
    if n == 0:
        c = float(f_n.get((), 0.0)) if isinstance(f_n, dict) else float(f_n)
        return PathFunctional.constant(params, c)
    if n > params.horizon:
        warnings.warn(f"order {n} exceeds horizon {params.horizon}; integral is zero")
        return PathFunctional.constant(params, 0.0)
    if family not in ("R", "Z"):
        raise ValueError(f"family must be 'R' or 'Z', got {family!r}")
    step = r_step_values(params) if family == "R" else z_step_values(params)
    out = np.zeros(sp.n)
    fact = factorial(n)
    for support, value in f_n.items():
        if value == 0.0:
            continue
        prod_vals = np.ones(sp.n)
        last_t = 0
        for t, k in support:
            if t <= last_t:
                raise ValueError(f"support times must strictly increase: {support}")
            last_t = t
            prod_vals = prod_vals * step[sp.digits[:, t - 1], params.mark_index(k)]
        out += fact * value * prod_vals
    return PathFunctional(params, values=out)


def product_kernel(params: ModelParams, support: tuple[Point, ...]) -> Kernel:
    """Kernel whose multiple integral is the plain product of dR increments
    on ``support`` (value 1/n!, the symmetrized indicator)."""
    return {tuple(support): 1.0 / factorial(len(support))}


def stroock_decompose(F: PathFunctional, rel_tol: float = 1e-13) -> ChaosCoefficients:
    """Chaos kernels of F: f_0 = E[F], f_n = E[D^(n) F] / n! on ordered
    supports, computed in one pass by the per-step tensor transform.

    Coefficients below rel_tol times the largest coefficient are rounding
    dust from the transform and are dropped from the sparse kernels.
    """
    tensor = coefficient_tensor(F)
    tol = rel_tol * max(1e-300, float(np.max(np.abs(tensor))))
    return _tensor_to_coeffs(F.params, tensor, tol=tol)


def reconstruct(basis: OrthogonalBasis, coeffs: ChaosCoefficients) -> PathFunctional:
    """F = f_0 + sum_n J_n(f_n); exact inverse of stroock_decompose."""
    return synthesize(coeffs.params, _coeffs_to_tensor(coeffs))


# -- inner products ---------------------------------------------------------------

def kernel_inner(basis: OrthogonalBasis, f_n: Kernel, g_n: Kernel, n: int) -> float:
    """<f, g>_n = n! * sum over ordered supports of f * g * prod kappa."""
    params = basis.params
    acc = 0.0
    for support, fv in f_n.items():
        gv = g_n.get(support)
        if gv is None:
            continue
        w = 1.0
        for _, k in support:
            w *= basis.kappa[params.mark_index(k)]
        acc += fv * gv * w
    return factorial(n) * acc


def covariance_from_coeffs(basis: OrthogonalBasis, cf: ChaosCoefficients, cg: ChaosCoefficients) -> float:
    """cov(F, G) = sum_n n! <f_n, g_n>_n."""
    acc = 0.0
    for n in set(cf.orders) | set(cg.orders):
        acc += factorial(n) * kernel_inner(basis, cf.kernel(n), cg.kernel(n), n)
    return acc


def random_kernel(params: ModelParams, n: int, rng: np.random.Generator, density: float = 1.0) -> Kernel:
    """Seeded random order-n kernel on all (or a fraction of) ordered supports."""
    kernel: Kernel = {}
    times = range(1, params.horizon + 1)
    for tset in combinations(times, n):
        for ks in product(params.marks, repeat=n):
            if density < 1.0 and rng.random() > density:
                continue
            kernel[tuple(zip(tset, ks))] = float(rng.normal())
    return kernel


# -- Doleans exponentials ----------------------------------------------------------

def doleans_exponential(basis: OrthogonalBasis, h: Kernel, mean: float = 1.0) -> PathFunctional:
    """Exponential functional of an order-1 kernel h.

    Product form: mean * prod_t (1 + sum_k g(t,k) (1{(t,k) in omega} - lambda Q_k))
    with g the Z-coordinates of h; equivalently the chaos series
    mean * (1 + sum_n J_n(h tensor n) / n!), which the tests check termwise.
    """
    params = basis.params
    sp = space(params)
    g = convert_coeffs_r_to_z(basis, h)
    zvals = z_step_values(params)
    factors = np.ones((sp.n, params.horizon))
    for support, value in g.items():
        ((t, k),) = tuple(support)
        factors[:, t - 1] += value * zvals[sp.digits[:, t - 1], params.mark_index(k)]
    return PathFunctional(params, values=mean * factors.prod(axis=1))


def doleans_series(basis: OrthogonalBasis, h: Kernel, mean: float = 1.0) -> PathFunctional:
    """Termwise chaos series of the exponential (for verification)."""
    params = basis.params
    by_time: dict[int, list[tuple[Point, float]]] = {}
    for support, value in h.items():
        ((t, k),) = tuple(support)
        by_time.setdefault(t, []).append(((t, k), value))
    total = PathFunctional.constant(params, 1.0)
    times = sorted(by_time)
    for n in range(1, params.horizon + 1):
        kernel: Kernel = {}
        for tset in combinations(times, n):
            for picks in product(*(by_time[t] for t in tset)):
                support = tuple(pt for pt, _ in picks)
                val = 1.0
                for _, v in picks:
                    val *= v
                kernel[support] = kernel.get(support, 0.0) + val
        if kernel:
            total = total + (1.0 / factorial(n)) * multiple_integral(basis, kernel, n)
    return PathFunctional(params, values=mean * total.table())
