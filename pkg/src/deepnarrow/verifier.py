"""Measurement and demonstration harness.

Approximation quality is always measured as a discretized uniform norm: the
max Euclidean error over a finite grid on a compact box (grids make every
check deterministic), with Monte-Carlo L1 estimates and their standard errors
where volume integrals are needed.  End-to-end pipelines chain fit ->
register program -> lowering and sweep the localization scale h, reporting
(h, sup_error, max_post_coeff, depth, width) rows; verification grids are
always strictly finer (2x per axis) than the fitting grids upstream.

The demo functions exercise the negative results: the rank-deficiency
invariance of phi(RE z) first layers and the induced L1 lower bound, the
affine-subspace floor for real-valued activations, closure of R-affine /
holomorphic / antiholomorphic network classes, and the identity block built
from the truncated nowhere-differentiable activation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from math import factorial, pi
from typing import Callable, Optional, Sequence

import numpy as np

from .activations import ActivationSpec, conjugate_activation, get_activation
from .core import (CompactBox, ComplexAffineMap, Cvnn, GridSpec, eval_cvnn,
                   sample_box, width_of, depth_of)
from .errors import DimensionMismatch, StrategyMismatch
from .fitting import FitConfig, fit_shallow, solve_complex_ridge
from .lowering import lower
from .register import RegisterProgram, eval_register, poly_to_register, shallow_to_register
from .wirtinger import ToleranceProfile, find_nonzero_second_point

__all__ = [
    "MCEstimate",
    "SweepRow",
    "SweepReport",
    "sup_error",
    "l1_error_mc",
    "ball_volume",
    "h_sweep",
    "end_to_end_poly",
    "end_to_end_nonpoly",
    "kernel_invariance_demo",
    "affine_subspace_floor_demo",
    "affine_closure_demo",
    "holo_floor_demo",
    "nowhere_diff_demo",
    "fit_deep_random",
    "named_target",
    "TARGETS",
    "DEFAULT_SWEEP_SCHEDULE",
]

DEFAULT_SWEEP_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


# ---------------------------------------------------------------------------
# Error measures
# ---------------------------------------------------------------------------


def _as_batch(values, count) -> np.ndarray:
    v = np.asarray(values, dtype=np.complex128)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != count:
        raise DimensionMismatch(f"expected {count} rows, got {v.shape[0]}")
    return v


def sup_error(f: Callable, g: Callable, box: CompactBox, grid: GridSpec,
              seed: int = 0) -> float:
    """Discretized uniform norm: max over the grid of ||f(z) - g(z)||_2."""
    pts = sample_box(box, grid, seed)
    fv = _as_batch(f(pts), pts.shape[0])
    gv = _as_batch(g(pts), pts.shape[0])
    if fv.shape != gv.shape:
        raise DimensionMismatch(f"output shapes differ: {fv.shape} vs {gv.shape}")
    return float(np.max(np.linalg.norm(fv - gv, axis=1)))


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    samples: int


def _box_volume(box: CompactBox) -> float:
    vol = 1.0
    for re_lo, re_hi, im_lo, im_hi in box.intervals:
        vol *= (re_hi - re_lo) * (im_hi - im_lo)
    return vol


def l1_error_mc(f: Callable, g: Callable, box: CompactBox, samples: int,
                seed: int = 0) -> MCEstimate:
    """Monte-Carlo estimate of the L1 error integral over the box, with its
    standard error (volume-scaled)."""
    rng = np.random.default_rng(seed)
    n = box.n
    pts = np.empty((samples, n), dtype=np.complex128)
    for j, (re_lo, re_hi, im_lo, im_hi) in enumerate(box.intervals):
        pts[:, j] = rng.uniform(re_lo, re_hi, samples) + 1j * rng.uniform(im_lo, im_hi, samples)
    fv = _as_batch(f(pts), samples)
    gv = _as_batch(g(pts), samples)
    norms = np.linalg.norm(fv - gv, axis=1)
    vol = _box_volume(box)
    return MCEstimate(
        value=float(np.mean(norms) * vol),
        stderr=float(np.std(norms, ddof=1) / np.sqrt(samples) * vol),
        samples=samples,
    )


def ball_volume(radius: float, real_dim: int) -> float:
    """Lebesgue volume of the Euclidean ball; even dimension 2k gives
    pi^k r^(2k) / k!."""
    if real_dim % 2 == 0:
        k = real_dim // 2
        return pi**k * radius ** (2 * k) / factorial(k)
    from math import gamma

    return pi ** (real_dim / 2) * radius**real_dim / gamma(real_dim / 2 + 1)


# ---------------------------------------------------------------------------
# Sweep reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    h: float
    sup_error: float
    max_post_coeff: float
    depth: int
    width: int


@dataclass
class SweepReport:
    rows: list
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def best_row(self) -> SweepRow:
        return min(self.rows, key=lambda r: r.sup_error)

    def to_csv(self, timestamp: bool = False) -> str:
        buf = io.StringIO()
        if timestamp:
            buf.write(f"# generated={datetime.now(timezone.utc).isoformat()}\n")
        for key in sorted(self.metadata):
            buf.write(f"# {key}={self.metadata[key]}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["h", "sup_error", "max_post_coeff", "depth", "width"])
        for r in self.rows:
            writer.writerow([repr(r.h), repr(r.sup_error), repr(r.max_post_coeff),
                             r.depth, r.width])
        return buf.getvalue()


def _net_max_coeff(net: Cvnn) -> float:
    return float(max(np.max(np.abs(m.matrix)) for m in net.affine_maps))


def h_sweep(factory: Callable, hs: Sequence[float], box: CompactBox,
            grid: GridSpec, reference: Callable, spec: ActivationSpec,
            metadata: Optional[dict] = None) -> SweepReport:
    """Evaluate factory(h) against the reference on the grid, one row per h.

    ``factory`` returns a network; rows are computed independently and kept
    in schedule order (descending h).
    """
    from .errors import EvaluationFailure

    rows = []
    nets = {}
    for h in hs:
        net = factory(h)
        try:
            err = sup_error(reference, lambda zs: eval_cvnn(net, zs, spec.fn), box, grid)
        except EvaluationFailure:
            err = float("inf")
        rows.append(SweepRow(h, err, _net_max_coeff(net), depth_of(net), width_of(net)))
        nets[h] = net
    report = SweepReport(rows, dict(metadata or {}))
    report.extras["nets"] = nets
    return report


# ---------------------------------------------------------------------------
# Named targets (CLI surface and tests)
# ---------------------------------------------------------------------------


def _t_z(zs):
    return zs[:, 0]


def _t_zbar(zs):
    return np.conj(zs[:, 0])


def _t_re(zs):
    return np.real(zs[:, 0]).astype(np.complex128)


def _t_zzbar(zs):
    return zs[:, 0] * np.conj(zs[:, 0])


def _t_abs(zs):
    return np.abs(zs[:, 0]).astype(np.complex128)


def _t_z1zbar2(zs):
    return zs[:, 0] * np.conj(zs[:, 1])


def _t_norm0(zs):
    out = np.zeros((zs.shape[0], 2), dtype=np.complex128)
    out[:, 0] = np.linalg.norm(zs, axis=1)
    return out


TARGETS = {
    "z": (_t_z, 1, "z_1"),
    "zbar": (_t_zbar, 1, "conj(z_1)"),
    "re": (_t_re, 1, "RE(z_1)"),
    "zzbar": (_t_zzbar, 1, "z_1 conj(z_1)"),
    "abs": (_t_abs, 1, "|z_1|"),
    "z1zbar2": (_t_z1zbar2, 1, "z_1 conj(z_2)"),
    "norm0": (_t_norm0, 2, "(|z|, 0)"),
}


def named_target(name: str):
    """Returns (callable, output_dim) for a named target."""
    if name not in TARGETS:
        raise KeyError(f"unknown target {name!r}; known: {sorted(TARGETS)}")
    fn, m, _ = TARGETS[name]
    return fn, m


# ---------------------------------------------------------------------------
# End-to-end pipelines
# ---------------------------------------------------------------------------


def _finer(grid: GridSpec) -> GridSpec:
    return GridSpec(2 * grid.points_per_axis, grid.sampling)


def mul_kind_for(spec: ActivationSpec, prof: ToleranceProfile = ToleranceProfile()) -> str:
    """Which product the square probe affords: a mixed second derivative
    gives mul2, a plain one mul1, a conjugate one mul3."""
    found = find_nonzero_second_point(spec, prof)
    if found is None:
        raise StrategyMismatch("activation is R-affine on the probe grid")
    return {"ddbar": "mul2", "d2": "mul1", "dbar2": "mul3"}[found[1]]


def end_to_end_poly(f: Callable, spec: ActivationSpec, n: int, m: int,
                    degree: int, strategy: str, box: CompactBox,
                    fit_grid: GridSpec = GridSpec(9),
                    schedule: Sequence[float] = DEFAULT_SWEEP_SCHEDULE,
                    prof: ToleranceProfile = ToleranceProfile()):
    """fit_poly -> poly_to_register (kind from the square probe) -> lower,
    sweeping h.  Returns (best network, SweepReport)."""
    from .fitting import fit_poly

    sigma = spec
    if strategy == "Poly_NMplus4":
        from .lowering import _scan_points

        lone_d, lone_db, _ = _scan_points(spec, prof)
        if lone_d is None and lone_db is not None:
            sigma = conjugate_activation(spec)
    kind = mul_kind_for(sigma, prof)
    polys = fit_poly(f, n, degree, box, fit_grid, m=m)
    program = poly_to_register(polys, kind)
    fit_err = sup_error(f, lambda zs: eval_register(program, zs), box, _finer(fit_grid))
    report = h_sweep(
        lambda h: lower(program, spec, strategy, h, prof),
        schedule, box, _finer(fit_grid), f, spec,
        metadata={"pipeline": "poly", "activation": spec.name, "strategy": strategy,
                  "degree": degree, "n": n, "m": m, "mul_kind": kind},
    )
    report.extras["fit_sup_error"] = fit_err
    report.extras["program"] = program
    best = report.best_row()
    return report.extras["nets"][best.h], report


def end_to_end_nonpoly(f: Callable, spec: ActivationSpec, n: int, m: int,
                       cfg: FitConfig, strategy: str, box: CompactBox,
                       schedule: Sequence[float] = DEFAULT_SWEEP_SCHEDULE,
                       prof: ToleranceProfile = ToleranceProfile()):
    """fit_shallow -> shallow_to_register -> lower, sweeping h.

    For the conjugate-network strategy the shallow fit runs on
    sigma = conj o activation, whose program the lowering realizes with
    activation layers followed by conjugation blocks.
    Returns (best network, SweepReport); the report carries the shallow fit
    error so total error can be compared against fit error + lowering slack.
    """
    sigma = conjugate_activation(spec) if strategy == "NonPoly_Conj_NMplus1" else spec
    cfg = FitConfig(num_features=cfg.num_features, weight_scale=cfg.weight_scale,
                    ridge=cfg.ridge, box=box, grid=cfg.grid, seed=cfg.seed)
    shallow, fit_err = fit_shallow(f, sigma, n, m, cfg)
    program = shallow_to_register(shallow)
    eval_grid = _finer(cfg.grid)
    report = h_sweep(
        lambda h: lower(program, spec, strategy, h, prof),
        schedule, box, eval_grid, f, spec,
        metadata={"pipeline": "nonpoly", "activation": spec.name, "strategy": strategy,
                  "features": cfg.num_features, "n": n, "m": m, "seed": cfg.seed},
    )
    report.extras["fit_sup_error"] = fit_err
    report.extras["shallow"] = shallow
    report.extras["program"] = program
    report.extras["sigma_name"] = sigma.name
    # fit error re-measured on the verification grid (finer than the fit grid)
    report.extras["fit_sup_error_fine"] = sup_error(
        f, lambda zs: eval_register(program, zs, sigma.fn), box, eval_grid)
    best = report.best_row()
    return report.extras["nets"][best.h], report


# ---------------------------------------------------------------------------
# Necessity demos
# ---------------------------------------------------------------------------


@dataclass
class KernelDemoReport:
    nullspace_found: bool
    invariance_residual: Optional[float]
    l1_estimate: Optional[MCEstimate]
    l1_threshold: Optional[float]
    passed: Optional[bool]
    note: str = ""


def _random_phi_re_net(spec: ActivationSpec, n: int, m: int, width: int,
                       seed: int) -> Cvnn:
    rng = np.random.default_rng(seed)

    def cplx(shape, scale=1.0):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    v1 = ComplexAffineMap(cplx((width, n)), cplx(width))
    v2 = ComplexAffineMap(cplx((width, width), 0.5), cplx(width, 0.5))
    v3 = ComplexAffineMap(cplx((m, width), 0.5), cplx(m, 0.5))
    return Cvnn((v1, v2, v3), spec.activation_id)


def kernel_invariance_demo(spec: ActivationSpec, n: int, width: Optional[int] = None,
                           seed: int = 0, mc_samples: int = 100_000,
                           residual_points: int = 1000) -> KernelDemoReport:
    """Width 2n-1 with a phi(RE z) activation forces a direction v in which
    the whole network is constant: RE(V1 v) = 0 has a nontrivial solution
    because RE o V1 is a real-linear map R^2n -> R^(2n-1).  That invariance
    costs an L1 error of at least 0.8 * vol(ball(0.1)) against (|z|, 0) on
    [-2,2]^2n.  With width 2n the nullspace is generically empty and the demo
    reports not-applicable.
    """
    m = 2
    w = 2 * n - 1 if width is None else width
    net = _random_phi_re_net(spec, n, m, w, seed)
    v1 = net.affine_maps[0].matrix
    mreal = np.hstack([v1.real, -v1.imag])  # (w, 2n): RE(V1 v) as map of (vr, vi)
    _, svals, vh = np.linalg.svd(mreal)
    rank = int(np.sum(svals > 1e-12 * (svals[0] if svals.size else 1.0)))
    if rank >= 2 * n:
        return KernelDemoReport(False, None, None, None, None,
                                note=f"width {w} >= 2n: RE(V1) has full rank, no invariant direction")
    vreal = vh[-1]
    v = vreal[:n] + 1j * vreal[n:]
    v = v / np.linalg.norm(v)

    rng = np.random.default_rng(seed + 1)
    zs = rng.uniform(-2, 2, (residual_points, n)) + 1j * rng.uniform(-2, 2, (residual_points, n))
    g = lambda pts: eval_cvnn(net, pts, spec.fn)
    residual = float(np.max(np.linalg.norm(g(zs + v) - g(zs), axis=1)))

    box = CompactBox.square(n, 2.0)
    f = lambda pts: np.column_stack(
        [np.linalg.norm(pts, axis=1).astype(np.complex128)]
        + [np.zeros(
            pts.shape[0], dtype=np.complex128)] * (m - 1))
    est = l1_error_mc(f, g, box, mc_samples, seed)
    threshold = 0.8 * ball_volume(0.1, 2 * n)
    passed = est.value >= threshold - 3 * est.stderr
    return KernelDemoReport(True, residual, est, threshold, bool(passed))


@dataclass
class HyperplaneFloorReport:
    vertex_floor: float
    degenerate_floor: float
    net_errors: list
    passed: bool


def _curve_target(ts: np.ndarray) -> np.ndarray:
    """Edge path through the four vertices 0, 1, 1+i, i of the unit square."""
    t = np.clip(np.real(ts), 0.0, 1.0)
    out = np.empty_like(t, dtype=np.complex128)
    seg1 = t <= 1 / 3
    seg2 = (t > 1 / 3) & (t <= 2 / 3)
    seg3 = t > 2 / 3
    out[seg1] = 3 * t[seg1]
    out[seg2] = 1 + 1j * (3 * t[seg2] - 1)
    out[seg3] = (1 - (3 * t[seg3] - 2)) + 1j
    return out


def _minmax_line_distance(points: np.ndarray, angle_steps: int = 720,
                          offset_steps: int = 801, offset_range=(-1.0, 2.0)) -> float:
    """Brute force over lines {x cos t + y sin t = c} of the max distance to
    the given planar points; returns the min over the line grid."""
    thetas = np.linspace(0.0, pi, angle_steps, endpoint=False)
    offsets = np.linspace(offset_range[0], offset_range[1], offset_steps)
    proj = np.outer(np.cos(thetas), points[:, 0]) + np.outer(np.sin(thetas), points[:, 1])
    best = np.inf
    for k in range(angle_steps):
        dist = np.abs(proj[k][None, :] - offsets[:, None])
        best = min(best, float(np.min(np.max(dist, axis=1))))
    return best


def affine_subspace_floor_demo(seeds=(0, 1, 2, 3, 4)) -> HyperplaneFloorReport:
    """Real-valued activations with one output and width 2m-1 = 1 confine the
    network range to a line in R^2; no line comes within 1/2 of all four unit
    square vertices, so the error against the vertex-visiting curve target
    has a hard floor (0.45 allows for grid slack)."""
    vertices = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    floor = _minmax_line_distance(vertices)
    degenerate = _minmax_line_distance(np.array([[0, 0], [0.5, 0.5], [1, 1]], dtype=float))
    spec = get_activation("tanh_re")
    box = CompactBox(((-0.1, 1.1, -0.05, 0.05),))
    errors = []
    for seed in seeds:
        # the bound concerns width 2m-1 = 1: a single real feature, with only
        # the output affine map solved
        cfg = FitConfig(num_features=1, weight_scale=1.0, ridge=1e-10,
                        box=box, grid=GridSpec(40), seed=seed)
        net, _ = fit_shallow(lambda zs: _curve_target(zs[:, 0]), spec, 1, 1, cfg)
        err = sup_error(lambda zs: _curve_target(zs[:, 0])[:, None],
                        lambda zs: eval_cvnn(net, zs, spec.fn), box, GridSpec(60))
        errors.append(err)
    passed = floor >= 0.5 - 2e-2 and all(e >= 0.45 for e in errors)
    return HyperplaneFloorReport(floor, degenerate, errors, bool(passed))


def fit_deep_random(f: Callable, spec: ActivationSpec, n: int, m: int,
                    width: int, depth: int, cfg: FitConfig):
    """Deep random-feature fit: all hidden affine maps are seeded random, only
    the final affine map is solved.  Keeps the class restricted to genuine
    deep networks of the given activation without nonconvex training."""
    rng = np.random.default_rng(cfg.seed)

    def cplx(shape, fan_in):
        s = cfg.weight_scale / np.sqrt(fan_in)
        return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    maps = [ComplexAffineMap(cplx((width, n), n), cplx(width, n))]
    for _ in range(depth - 2):
        maps.append(ComplexAffineMap(cplx((width, width), width), cplx(width, width)))
    pts = sample_box(cfg.box, cfg.grid, cfg.seed)
    targets = _as_batch(f(pts), pts.shape[0])
    cur = pts
    for amap in maps:
        cur = np.asarray(spec.fn(cur @ amap.matrix.T + amap.bias), dtype=np.complex128)
    design = np.hstack([cur, np.ones((pts.shape[0], 1), dtype=np.complex128)])
    coef = solve_complex_ridge(design, targets, max(cfg.ridge, 1e-10))
    final = ComplexAffineMap(coef[:width].T, coef[width])
    net = Cvnn(tuple(maps) + (final,), spec.activation_id)
    err = sup_error(f, lambda zs: eval_cvnn(net, zs, spec.fn), cfg.box, cfg.grid)
    return net, err


@dataclass
class ClosureReport:
    affinity_residual: Optional[float]
    floor_errors: list
    floor: Optional[float]
    passed: bool


def affine_closure_demo(seeds=(0, 1, 2), depths=(2, 3, 5), width: int = 6,
                        alphas=(-0.5, 0.25, 0.75, 2.0)) -> ClosureReport:
    """Networks over an R-affine activation are R-affine: for real alpha,
    eval(alpha x + (1-alpha) y) = alpha eval(x) + (1-alpha) eval(y)."""
    spec = get_activation("r_affine", {"a": 2, "b": 1, "c": 1})
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for depth in depths:
            dims = [2] + [width] * (depth - 1) + [2]
            maps = []
            for din, dout in zip(dims, dims[1:]):
                maps.append(ComplexAffineMap(
                    0.5 * (rng.standard_normal((dout, din)) + 1j * rng.standard_normal((dout, din))),
                    0.5 * (rng.standard_normal(dout) + 1j * rng.standard_normal(dout))))
            net = Cvnn(tuple(maps), spec.activation_id)
            x = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            y = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            for alpha in alphas:
                lhs = eval_cvnn(net, alpha * x + (1 - alpha) * y, spec.fn)
                rhs = alpha * eval_cvnn(net, x, spec.fn) + (1 - alpha) * eval_cvnn(net, y, spec.fn)
                worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return ClosureReport(worst, [], None, worst < 1e-9)


def holo_floor_demo(activation: str = "exp", target: str = "zbar",
                    widths=(8, 16, 32, 64), depths=(2, 3, 4),
                    seeds=(0, 1, 2, 3, 4), weight_scale: float = 0.5) -> ClosureReport:
    """Fit campaign against an unreachable target: holomorphic (resp.
    antiholomorphic) networks cannot leave their closed class, so the sup
    error against conj(z) (resp. z) stays above 1/2 on the unit box.  The
    true distance on the closed unit disk is 1; the finite box/grid only
    certifies the 0.5 level robustly, which is a measurement artifact of the
    discretization, not of the theorem.
    """
    spec = get_activation(activation)
    fn, m = named_target(target)
    box = CompactBox.square(1, 1.0)
    errors = []
    for depth in depths:
        for w in widths:
            for seed in seeds:
                cfg = FitConfig(num_features=w, weight_scale=weight_scale,
                                ridge=1e-8, box=box, grid=GridSpec(17), seed=seed)
                _, err = fit_deep_random(fn, spec, 1, m, w, depth, cfg)
                errors.append(err)
    floor = min(errors)
    return ClosureReport(None, errors, floor, floor >= 0.5)


@dataclass
class NowhereDiffReport:
    rows: list  # (h, k, sup_error)
    best: tuple
    passed: bool


def nowhere_diff_demo(hs=DEFAULT_SWEEP_SCHEDULE, k_max: int = 50,
                      ktrunc: int = 20, tol: float = 1e-2) -> NowhereDiffReport:
    """Identity block from the nowhere-differentiable activation.

    The block sends z -> act(h z + 2 pi k) / h; the sine part contributes
    sin(h z)/h -> z and the bounded rough part is crushed by exp(-2 pi k).
    Scans (h, k) cells on [-1,1]^2 for sup error below tol.
    """
    spec = get_activation("nowhere_diff", {"ktrunc": ktrunc})
    box = CompactBox.square(1, 1.0)
    pts = sample_box(box, GridSpec(33))
    rows = []
    ks = [1, 2, 3, 5, 8, 13, 21, 34, 50]
    for h in hs:
        for k in (k for k in ks if k <= k_max):
            vals = spec.fn(h * pts[:, 0] + 2 * pi * k) / h
            err = float(np.max(np.abs(vals - pts[:, 0])))
            rows.append((h, k, err))
    best = min(rows, key=lambda r: r[2])
    return NowhereDiffReport(rows, best, best[2] < tol)
