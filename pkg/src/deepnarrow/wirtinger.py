"""Numerical Wirtinger calculus and the activation classifier.

The Wirtinger derivatives repackage the real partials of f: C -> C,

    d f    = (df/dx - i df/dy) / 2        ("d", complex-linear part)
    dbar f = (df/dx + i df/dy) / 2        ("dbar", conjugate-linear part)

and second order via the invertible conversion

    [d2, ddbar, dbar2]^T = (1/4) [[1, -2i, -1], [1, 0, 1], [1, 2i, -1]]
                            @ [fxx, fxy, fyy]^T.

Everything is estimated with central finite differences plus Richardson
extrapolation.  "Nonzero" always means |value| > zero_tol after
extrapolation, which separates analytic zeros from O(h^2) noise at desk
scale.  Polyharmonicity (laplacian^m f == 0 for some m, with
laplacian = 4 d dbar) is undecidable from samples; the iterated-stencil
probe here is advisory and the catalog's analytic flags take precedence.

The classifier walks the decision tree: holomorphic / antiholomorphic /
R-affine activations are never universal; otherwise the pattern of nonzero
first Wirtinger derivatives at a good probe point, combined with
polyharmonicity, selects the sufficient width family (n+m+1, 2n+2m+1,
n+m+4, or 2n+2m+5).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .activations import ActivationSpec
from .core import CompactBox, GridSpec, sample_box
from .errors import ProbeFailed

__all__ = [
    "ToleranceProfile",
    "WirtingerProbe",
    "Classification",
    "TaylorReport",
    "LaplacianEstimate",
    "wirt_first",
    "wirt_second",
    "second_partials_to_wirtinger",
    "laplacian_iterate",
    "taylor_remainder_probe",
    "find_active_point",
    "find_nonzero_second_point",
    "classify_activation",
    "first_derivs",
    "second_derivs",
    "probe_point",
    "VERDICTS",
]

_EPS = float(np.finfo(np.float64).eps)

_DEFAULT_BOX = CompactBox.square(1, 2.0)
_DEFAULT_GRID = GridSpec(9, "uniform-lattice")


@dataclass(frozen=True)
class ToleranceProfile:
    """Numerical policy for all probes.

    fd_step is the relative first-order step (the actual step is
    fd_step * max(1, |z0|)); second-order stencils use sqrt(fd_step) since
    their roundoff grows like eps/h^2.  zero_tol is the nonzero threshold
    applied after Richardson extrapolation.
    """

    zero_tol: float = 1e-6
    fd_step: float = 1e-5
    richardson_levels: int = 2
    polyharmonic_max_order: int = 4
    probe_box: CompactBox = _DEFAULT_BOX
    probe_grid: GridSpec = _DEFAULT_GRID
    taylor_radii: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    taylor_points_per_circle: int = 16

    def __post_init__(self):
        if min(self.zero_tol, self.fd_step) <= 0:
            raise ValueError("tolerances must be positive")
        if self.richardson_levels < 1 or self.polyharmonic_max_order < 1:
            raise ValueError("levels and max order must be >= 1")


@dataclass(frozen=True)
class WirtingerProbe:
    """First- and second-order Wirtinger derivative estimates at one point."""

    z0: complex
    d: complex
    dbar: complex
    d2: complex
    ddbar: complex
    dbar2: complex
    est_error: float


@dataclass(frozen=True)
class TaylorReport:
    z0: complex
    order: int
    radii: tuple
    ratios: tuple
    floor: float
    passed: bool


@dataclass(frozen=True)
class LaplacianEstimate:
    value: complex
    noise_floor: float
    reliable: bool


def _richardson(samples, levels: int):
    """Extrapolate an O(h^2) difference quotient.  ``samples(h)`` returns the
    quotient at step h; returns (best, discrepancy of the last two columns)."""
    table = [[samples[0]]]
    for k in range(1, levels):
        row = [samples[k]]
        for j in range(1, k + 1):
            fac = 4.0**j
            row.append((fac * row[j - 1] - table[k - 1][j - 1]) / (fac - 1.0))
        table.append(row)
    best = table[-1][-1]
    if levels == 1:
        return best, abs(best) * 1e-8
    return best, abs(best - table[-1][-2])


def _eval_scalar(spec: ActivationSpec, pts) -> np.ndarray:
    out = np.asarray(spec.fn(np.asarray(pts, dtype=np.complex128)), dtype=np.complex128)
    if not np.all(np.isfinite(out.view(np.float64))):
        raise ProbeFailed(f"activation evaluation failed near {pts!r}")
    return out


def wirt_first(spec: ActivationSpec, z0: complex, prof: ToleranceProfile = ToleranceProfile()):
    """Numerical first Wirtinger derivatives at z0.

    Returns (d, dbar, est_error): central differences on the two real
    partials, Richardson-extrapolated, mapped through d = (Dx - i Dy)/2,
    dbar = (Dx + i Dy)/2.
    """
    z0 = complex(z0)
    levels = prof.richardson_levels
    h0 = prof.fd_step * max(1.0, abs(z0))
    hs = [h0 / 2.0**k for k in range(levels)]
    pts = []
    for h in hs:
        pts.extend([z0 + h, z0 - h, z0 + 1j * h, z0 - 1j * h])
    vals = _eval_scalar(spec, pts)
    fscale = max(1.0, float(np.max(np.abs(vals))))
    dx_samples, dy_samples = [], []
    for k, h in enumerate(hs):
        fp, fm, fip, fim = vals[4 * k : 4 * k + 4]
        dx_samples.append((fp - fm) / (2 * h))
        dy_samples.append((fip - fim) / (2 * h))
    dx, ex = _richardson(dx_samples, levels)
    dy, ey = _richardson(dy_samples, levels)
    roundoff = _EPS * fscale / hs[-1]
    est = max(0.5 * (ex + ey), roundoff)
    return (dx - 1j * dy) / 2, (dx + 1j * dy) / 2, float(est)


def second_partials_to_wirtinger(fxx, fxy, fyy):
    """Apply the exact conversion matrix from second partials to
    (d2, ddbar, dbar2)."""
    d2 = (fxx - 2j * fxy - fyy) / 4
    ddbar = (fxx + fyy) / 4
    dbar2 = (fxx + 2j * fxy - fyy) / 4
    return d2, ddbar, dbar2


def wirt_second(spec: ActivationSpec, z0: complex, prof: ToleranceProfile = ToleranceProfile()):
    """Numerical second Wirtinger derivatives at z0.

    Returns (d2, ddbar, dbar2, est_error).  Finite-difference second partials
    (fxx, fxy, fyy) are converted through the quarter matrix
    [[1,-2i,-1],[1,0,1],[1,2i,-1]].
    """
    z0 = complex(z0)
    levels = prof.richardson_levels
    h0 = np.sqrt(prof.fd_step) * max(1.0, abs(z0))
    hs = [h0 / 2.0**k for k in range(levels)]
    f0 = _eval_scalar(spec, [z0])[0]
    xx_s, yy_s, xy_s = [], [], []
    fscale = max(1.0, abs(f0))
    for h in hs:
        pts = [z0 + h, z0 - h, z0 + 1j * h, z0 - 1j * h,
               z0 + h + 1j * h, z0 + h - 1j * h, z0 - h + 1j * h, z0 - h - 1j * h]
        v = _eval_scalar(spec, pts)
        fscale = max(fscale, float(np.max(np.abs(v))))
        xx_s.append((v[0] - 2 * f0 + v[1]) / h**2)
        yy_s.append((v[2] - 2 * f0 + v[3]) / h**2)
        xy_s.append((v[4] - v[5] - v[6] + v[7]) / (4 * h**2))
    fxx, exx = _richardson(xx_s, levels)
    fyy, eyy = _richardson(yy_s, levels)
    fxy, exy = _richardson(xy_s, levels)
    roundoff = 8 * _EPS * fscale / hs[-1] ** 2
    est = max((exx + eyy + exy) / 3, roundoff)
    d2, ddbar, dbar2 = second_partials_to_wirtinger(fxx, fxy, fyy)
    return d2, ddbar, dbar2, float(est)


def first_derivs(spec: ActivationSpec, z0: complex, prof: ToleranceProfile = ToleranceProfile()):
    """(d, dbar, est_error), preferring the catalog's closed form when present."""
    if spec.analytic_first is not None and not spec.is_excluded(z0):
        d, dbar = spec.analytic_first(complex(z0))
        return complex(d), complex(dbar), 0.0
    return wirt_first(spec, z0, prof)


def second_derivs(spec: ActivationSpec, z0: complex, prof: ToleranceProfile = ToleranceProfile()):
    """(d2, ddbar, dbar2, est_error), preferring the closed form when present."""
    if spec.analytic_second is not None and not spec.is_excluded(z0):
        d2, ddbar, dbar2 = spec.analytic_second(complex(z0))
        return complex(d2), complex(ddbar), complex(dbar2), 0.0
    return wirt_second(spec, z0, prof)


def probe_point(spec: ActivationSpec, z0: complex, prof: ToleranceProfile = ToleranceProfile()) -> WirtingerProbe:
    d, dbar, e1 = first_derivs(spec, z0, prof)
    d2, ddbar, dbar2, e2 = second_derivs(spec, z0, prof)
    return WirtingerProbe(complex(z0), d, dbar, d2, ddbar, dbar2, max(e1, e2))


def laplacian_iterate(spec: ActivationSpec, z0: complex, order: int,
                      prof: ToleranceProfile = ToleranceProfile()) -> LaplacianEstimate:
    """Estimate laplacian^order at z0 with nested 5-point stencils.

    Each level amplifies roundoff by h^-2, so the step widens with the order
    and the estimate carries an explicit noise floor; `reliable` is False
    when the value is within 10x of that floor.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > prof.polyharmonic_max_order:
        raise ValueError(
            f"order {order} exceeds polyharmonic_max_order {prof.polyharmonic_max_order}"
        )
    h = _EPS ** (1.0 / (2 * order + 2)) * max(1.0, abs(z0))
    scale_box = [0.0]

    def rec(z, k):
        if k == 0:
            v = _eval_scalar(spec, [z])[0]
            scale_box[0] = max(scale_box[0], abs(v))
            return v
        return (rec(z + h, k - 1) + rec(z - h, k - 1) + rec(z + 1j * h, k - 1)
                + rec(z - 1j * h, k - 1) - 4 * rec(z, k - 1)) / h**2

    value = rec(complex(z0), order)
    fscale = max(1.0, scale_box[0])
    noise = 5.0**order * _EPS * fscale / h ** (2 * order)
    return LaplacianEstimate(complex(value), float(noise), bool(abs(value) > 10 * noise))


def taylor_remainder_probe(spec: ActivationSpec, z0: complex, order: int,
                           prof: ToleranceProfile = ToleranceProfile()) -> TaylorReport:
    """Check that the Taylor remainder of the given order actually vanishes.

    Evaluates Theta_k(w) = f(z0+w) - Taylor_k(w) on shrinking circles |w| = r
    and reports max |Theta_k| / r^k per radius.  Differentiability shows up
    as a decreasing ratio sequence; a ratio sequence that stalls or grows
    marks a point where the expansion is invalid.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    z0 = complex(z0)
    d, dbar, _ = first_derivs(spec, z0, prof)
    if order == 2:
        d2, ddbar, dbar2, _ = second_derivs(spec, z0, prof)
    f0 = _eval_scalar(spec, [z0])[0]
    angles = np.exp(2j * np.pi * np.arange(prof.taylor_points_per_circle)
                    / prof.taylor_points_per_circle)
    ratios = []
    scale = 1.0
    for r in prof.taylor_radii:
        w = r * angles
        fv = _eval_scalar(spec, z0 + w)
        scale = max(scale, float(np.max(np.abs(fv))))
        theta = fv - f0 - d * w - dbar * np.conj(w)
        if order == 2:
            theta = theta - 0.5 * d2 * w**2 - ddbar * w * np.conj(w) - 0.5 * dbar2 * np.conj(w) ** 2
        ratios.append(float(np.max(np.abs(theta)) / r**order))
    floor = 1e-8 * scale
    ok = all(rt <= floor for rt in ratios) or all(
        nxt <= max(0.9 * cur, floor) for cur, nxt in zip(ratios, ratios[1:])
    )
    return TaylorReport(z0, order, tuple(prof.taylor_radii), tuple(ratios), floor, ok)


def _probe_candidates(spec: ActivationSpec, prof: ToleranceProfile):
    """First-derivative data at every non-excluded grid point."""
    pts = sample_box(prof.probe_box, prof.probe_grid, seed=0)[:, 0]
    out = []
    for z0 in pts:
        z0 = complex(z0)
        if spec.is_excluded(z0):
            continue
        try:
            d, dbar, est = first_derivs(spec, z0, prof)
        except ProbeFailed:
            continue
        out.append((z0, d, dbar, est))
    return out


def find_active_point(spec: ActivationSpec, prof: ToleranceProfile = ToleranceProfile()) -> Optional[complex]:
    """Scan the probe grid for a point of real differentiability with
    non-vanishing derivative; returns the one maximizing max(|d|, |dbar|),
    or None when every candidate fails the remainder probe."""
    best, best_score = None, 0.0
    for z0, d, dbar, _ in _probe_candidates(spec, prof):
        score = max(abs(d), abs(dbar))
        if score <= prof.zero_tol or score <= best_score:
            continue
        if taylor_remainder_probe(spec, z0, 1, prof).passed:
            best, best_score = z0, score
    return best


def find_nonzero_second_point(spec: ActivationSpec, prof: ToleranceProfile = ToleranceProfile()):
    """Grid search for a nonzero second Wirtinger derivative.

    Preference order ddbar > d2 > dbar2 mirrors the square-block case order,
    so the mixed product (and hence mul2) is chosen whenever available.
    Returns (z0, which) or None (the R-affine case).
    """
    pts = sample_box(prof.probe_box, prof.probe_grid, seed=0)[:, 0]
    best = {"ddbar": (None, 0.0), "d2": (None, 0.0), "dbar2": (None, 0.0)}
    for z0 in pts:
        z0 = complex(z0)
        if spec.is_excluded(z0):
            continue
        try:
            d2, ddbar, dbar2, _ = second_derivs(spec, z0, prof)
        except ProbeFailed:
            continue
        for key, val in (("ddbar", ddbar), ("d2", d2), ("dbar2", dbar2)):
            if abs(val) > max(prof.zero_tol, best[key][1]):
                best[key] = (z0, abs(val))
    for key in ("ddbar", "d2", "dbar2"):
        if best[key][0] is not None:
            return best[key][0], key
    return None


VERDICTS = (
    "NonUniversalHolomorphic",
    "NonUniversalAntiholomorphic",
    "NonUniversalRAffine",
    "Inconclusive",
    "UniversalNonPoly_NMplus1",
    "UniversalNonPoly_2N2Mplus1",
    "UniversalPoly_NMplus4",
    "UniversalPoly_2N2Mplus5",
)


@dataclass(frozen=True)
class Classification:
    verdict: str
    witness_point: Optional[complex]
    evidence: str
    witness_probe: Optional[WirtingerProbe] = None

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict.startswith("Universal") and self.witness_point is None:
            raise ValueError("Universal verdicts require a witness point")

    def to_json_dict(self, prof: ToleranceProfile = ToleranceProfile()) -> dict:
        w = self.witness_point
        probes = []
        if self.witness_probe is not None:
            p = self.witness_probe
            probes.append({
                "z0": [p.z0.real, p.z0.imag],
                "d": [p.d.real, p.d.imag],
                "dbar": [p.dbar.real, p.dbar.imag],
                "d2": [p.d2.real, p.d2.imag],
                "ddbar": [p.ddbar.real, p.ddbar.imag],
                "dbar2": [p.dbar2.real, p.dbar2.imag],
                "est_error": p.est_error,
            })
        return {
            "verdict": self.verdict,
            "witness": None if w is None else [w.real, w.imag],
            "evidence": self.evidence,
            "probes": probes,
            "tolerances": {
                "zero_tol": prof.zero_tol,
                "fd_step": prof.fd_step,
                "richardson_levels": prof.richardson_levels,
                "polyharmonic_max_order": prof.polyharmonic_max_order,
            },
        }


def _is_polyharmonic(spec: ActivationSpec, prof: ToleranceProfile,
                     sample_points) -> tuple:
    """(is_polyharmonic, evidence string).  Analytic flag wins; the stencil
    heuristic only runs for unflagged activations."""
    if spec.poly_flag is not None:
        tag = "analytic flag"
        if spec.poly_flag.is_polyharmonic:
            return True, f"{tag}: polyharmonic of order {spec.poly_flag.order}"
        return False, f"{tag}: non-polyharmonic"
    pts = sample_points[: min(5, len(sample_points))]
    for order in range(1, prof.polyharmonic_max_order + 1):
        ests = [laplacian_iterate(spec, z0, order, prof) for z0 in pts]
        tol = max(prof.zero_tol, 10 * max(e.noise_floor for e in ests))
        if all(abs(e.value) <= tol for e in ests):
            return True, f"heuristic: laplacian^{order} ~ 0 at {len(pts)} probe points"
    return False, (
        f"heuristic: no vanishing iterated laplacian up to order {prof.polyharmonic_max_order}"
    )


def classify_activation(spec: ActivationSpec, n: int = 1, m: int = 1,
                        prof: ToleranceProfile = ToleranceProfile()) -> Classification:
    """Full decision tree.  The width numbers quoted in the verdicts refer to
    the sufficient hidden width for networks C^n -> C^m."""
    flags = spec.class_flags
    for flag, verdict in (
        ("holomorphic", "NonUniversalHolomorphic"),
        ("antiholomorphic", "NonUniversalAntiholomorphic"),
        ("r_affine", "NonUniversalRAffine"),
    ):
        if flag in flags:
            return Classification(verdict, None, f"analytic flag: {flag}")

    cands = _probe_candidates(spec, prof)
    tol = prof.zero_tol
    if not flags and cands:
        # numeric structural heuristics, documented as heuristics
        if all(abs(dbar) <= tol for _, _, dbar, _ in cands):
            return Classification(
                "NonUniversalHolomorphic", None,
                f"heuristic: |dbar| <= {tol} at all {len(cands)} grid points")
        if all(abs(d) <= tol for _, d, _, _ in cands):
            return Classification(
                "NonUniversalAntiholomorphic", None,
                f"heuristic: |d| <= {tol} at all {len(cands)} grid points")
        seconds = []
        affine = True
        for z0, _, _, _ in cands:
            try:
                d2, ddbar, dbar2, _ = second_derivs(spec, z0, prof)
            except ProbeFailed:
                affine = False
                break
            seconds.append((z0, d2, ddbar, dbar2))
            if max(abs(d2), abs(ddbar), abs(dbar2)) > tol:
                affine = False
                break
        if affine and seconds:
            return Classification(
                "NonUniversalRAffine", None,
                f"heuristic: all second Wirtinger derivatives <= {tol} on the grid")

    # differentiable point with nonzero derivative
    passing = []
    for z0, d, dbar, est in cands:
        if max(abs(d), abs(dbar)) <= tol:
            continue
        if taylor_remainder_probe(spec, z0, 1, prof).passed:
            passing.append((z0, d, dbar))
    if not passing:
        return Classification(
            "Inconclusive", None,
            "no probe point is real differentiable with nonzero derivative")

    lone = [(z0, d, dbar) for z0, d, dbar in passing
            if (abs(d) > tol) != (abs(dbar) > tol)]
    sample_pts = [z0 for z0, _, _ in passing]
    poly, poly_ev = _is_polyharmonic(spec, prof, sample_pts)

    if lone:
        z0, d, dbar = max(lone, key=lambda t: max(abs(t[1]), abs(t[2])))
        side = "d" if abs(d) > tol else "dbar"
        verdict = "UniversalPoly_NMplus4" if poly else "UniversalNonPoly_NMplus1"
        ev = (f"lone nonzero {side} at {z0}: d={d:.6g}, dbar={dbar:.6g}; {poly_ev}")
    else:
        z0, d, dbar = max(passing, key=lambda t: min(abs(t[1]), abs(t[2])))
        verdict = "UniversalPoly_2N2Mplus5" if poly else "UniversalNonPoly_2N2Mplus1"
        ev = (f"both derivatives nonzero at {z0}: d={d:.6g}, dbar={dbar:.6g}; {poly_ev}")
    return Classification(verdict, z0, ev, probe_point(spec, z0, prof))
