"""Numerical stand-ins for the existence theorems.

fit_shallow builds a depth-2 network by sampling random hidden features and
solving the output layer with complex ridge least squares on a grid; it is a
constructive substitute for shallow universality (no nonconvex training, so
results are deterministic functions of the config).  fit_poly projects a
target onto all monomials in z_1..z_n and their conjugates up to a total
degree, the working form of the density of such polynomials.

Complex least squares is solved through the equivalent real system of twice
the size: with c = cr + i ci and y = yr + i yi,

    [ Re A  -Im A ] [cr]   [yr]
    [ Im A   Re A ] [ci] ~ [yi]

and the ridge penalty on (cr, ci) equals the complex penalty |c|^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as _iter_product
from typing import Callable, Optional, Sequence

import numpy as np

from .activations import ActivationSpec
from .core import CompactBox, ComplexAffineMap, Cvnn, GridSpec, eval_cvnn, sample_box
from .errors import DimensionMismatch, FitSingular
from .register import PolyZZbar

__all__ = ["FitConfig", "fit_shallow", "fit_poly", "solve_complex_ridge",
           "monomial_exponents"]


@dataclass(frozen=True)
class FitConfig:
    num_features: int = 200
    weight_scale: float = 1.0
    ridge: float = 1e-8
    box: CompactBox = CompactBox.square(1, 1.0)
    grid: GridSpec = GridSpec(21, "uniform-lattice")
    seed: int = 0

    def __post_init__(self):
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")


def solve_complex_ridge(design: np.ndarray, targets: np.ndarray, ridge: float) -> np.ndarray:
    """Minimize ||design @ c - targets||^2 + ridge ||c||^2 over complex c.

    Solved via the doubled real system.  With ridge > 0 and more columns than
    rows, the equivalent dual (kernel) system is used, which is much smaller.
    Raises FitSingular for a rank-deficient system when ridge == 0.
    """
    a = np.asarray(design, dtype=np.complex128)
    y = np.asarray(targets, dtype=np.complex128)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    p, w = a.shape
    ar = np.block([[a.real, -a.imag], [a.imag, a.real]])   # (2p, 2w)
    yr = np.vstack([y.real, y.imag])                        # (2p, k)
    if ridge == 0:
        sol, _, rank, _ = np.linalg.lstsq(ar, yr, rcond=None)
        if rank < 2 * w:
            raise FitSingular(
                "normal equations are singular with ridge=0; set ridge > 0")
    elif 2 * w > 2 * p:
        # dual form: c = A^T (A A^T + ridge I)^-1 y
        gram = ar @ ar.T + ridge * np.eye(2 * p)
        sol = ar.T @ np.linalg.solve(gram, yr)
    else:
        gram = ar.T @ ar + ridge * np.eye(2 * w)
        sol = np.linalg.solve(gram, ar.T @ yr)
    c = sol[:w] + 1j * sol[w:]
    return c[:, 0] if squeeze else c


def _sup_err(values: np.ndarray, targets: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(values - targets, axis=1)))


def fit_shallow(f: Callable, spec: ActivationSpec, n: int, m: int,
                cfg: FitConfig = FitConfig()):
    """Random-feature shallow fit of a target f: (N, n) -> (N, m).

    Hidden weights and biases are seeded Gaussians scaled by weight_scale;
    only the output layer is solved (ridge least squares on the grid).
    Returns (network, achieved sup error on the fit grid).
    """
    rng = np.random.default_rng(cfg.seed)
    w = cfg.num_features
    scale = cfg.weight_scale
    a1 = scale * (rng.standard_normal((w, n)) + 1j * rng.standard_normal((w, n))) / np.sqrt(2)
    b1 = scale * (rng.standard_normal(w) + 1j * rng.standard_normal(w)) / np.sqrt(2)
    pts = sample_box(cfg.box, cfg.grid, cfg.seed)
    targets = np.asarray(f(pts), dtype=np.complex128)
    if targets.ndim == 1:
        targets = targets[:, None]
    if targets.shape != (pts.shape[0], m):
        raise DimensionMismatch(
            f"target returned shape {targets.shape}, expected {(pts.shape[0], m)}")
    feats = np.asarray(spec.fn(pts @ a1.T + b1), dtype=np.complex128)
    design = np.hstack([feats, np.ones((pts.shape[0], 1), dtype=np.complex128)])
    coef = solve_complex_ridge(design, targets, cfg.ridge)
    v1 = ComplexAffineMap(a1, b1)
    v2 = ComplexAffineMap(coef[:w].T, coef[w])
    net = Cvnn((v1, v2), spec.activation_id)
    achieved = _sup_err(eval_cvnn(net, pts, spec.fn), targets)
    return net, achieved


def monomial_exponents(n: int, degree: int) -> list:
    """All (z_degrees, zbar_degrees) with total degree <= degree, in graded
    lexicographic order."""
    out = []
    for exps in _iter_product(range(degree + 1), repeat=2 * n):
        if sum(exps) <= degree:
            out.append((exps[:n], exps[n:]))
    out.sort(key=lambda e: (sum(e[0]) + sum(e[1]), e[0] + e[1]))
    return out


def fit_poly(f: Callable, n: int, degree: int, box: CompactBox,
             grid: GridSpec, m: Optional[int] = None, seed: int = 0,
             prune_tol: float = 1e-12) -> list:
    """Least-squares fit of all monomials z^alpha conj(z)^beta with
    |alpha| + |beta| <= degree on the grid.  Returns one PolyZZbar per output
    component.  Raises when the grid under-determines the basis.

    Coefficients below prune_tol * (1 + max |coeff|) are dropped so that
    exactly-representable targets compile to minimal register programs.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    pts = sample_box(box, grid, seed)
    targets = np.asarray(f(pts), dtype=np.complex128)
    if targets.ndim == 1:
        targets = targets[:, None]
    if m is None:
        m = targets.shape[1]
    exps = monomial_exponents(n, degree)
    if len(exps) > pts.shape[0]:
        raise FitSingular(
            f"{len(exps)} basis monomials but only {pts.shape[0]} grid points; "
            "refine the grid or lower the degree")
    conj = np.conj(pts)
    cols = []
    for zd, bd in exps:
        col = np.ones(pts.shape[0], dtype=np.complex128)
        for i in range(n):
            if zd[i]:
                col = col * pts[:, i] ** zd[i]
            if bd[i]:
                col = col * conj[:, i] ** bd[i]
        cols.append(col)
    design = np.column_stack(cols)
    coef = solve_complex_ridge(design, targets, 0.0)
    polys = []
    for j in range(m):
        cut = prune_tol * (1.0 + float(np.max(np.abs(coef[:, j]))))
        terms = [(coef[k, j], zd, bd) for k, (zd, bd) in enumerate(exps)
                 if abs(coef[k, j]) > cut]
        polys.append(PolyZZbar(n, tuple(terms)))
    return polys
