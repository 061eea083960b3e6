"""Shallow building blocks: explicit affine pairs around one activation layer.

Every constructor localizes the activation at a point z0 of differentiability
via the pre-map z -> z0 + h z and undoes the first (or second) order Taylor
data in the post-map, leaving the target elementary function plus a remainder
that vanishes as h -> 0:

    identity     1 neuron    (w - f(z0)) / (h d)                  ~ z
    conjugation  1 neuron    (w - f(z0)) / (h dbar)               ~ conj(z)
    pair         2 neurons   neurons at z0 + h z and z0 + i h z   ~ (z, conj z)
    square       4 neurons   one of z conj(z) / z^2 / conj(z)^2
    mul          8-12 neurons  polarization combination of squares,
                 one of z*w / z*conj(w) / conj(z*w)

Post-map coefficients scale as h^-1 (first order) and h^-2 (squares), which
is the conditioning price of small h; constructors record that scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .activations import ActivationSpec
from .core import CompactBox, ComplexAffineMap, Cvnn, GridSpec, eval_affine, sample_box
from .errors import ConstructionError
from .wirtinger import ToleranceProfile, first_derivs, second_derivs

__all__ = [
    "ShallowBlock",
    "MUL_KINDS",
    "mul_apply",
    "identity_block",
    "conj_block",
    "pair_block",
    "id_conj_pair_block",
    "square_block",
    "mul_block",
    "block_error",
    "auto_tune_h",
    "DEFAULT_H_SCHEDULE",
]

SQRT_I = np.exp(1j * np.pi / 4)  # the fixed square root of i

DEFAULT_H_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

#: polarization multiplication variants, keyed by which square is available
MUL_KINDS = ("mul1", "mul2", "mul3")  # z*w | z*conj(w) | conj(z*w)

_SQUARE_TO_MUL = {"zzbar": "mul2", "z2": "mul1", "zbar2": "mul3"}


def mul_apply(kind: str, z, w):
    if kind == "mul1":
        return z * w
    if kind == "mul2":
        return z * np.conj(w)
    if kind == "mul3":
        return np.conj(z * w)
    raise ValueError(f"unknown mul kind {kind!r}")


@dataclass(frozen=True)
class ShallowBlock:
    """One hidden layer with explicit pre/post affine maps.

    kind is one of identity | conjugation | pair | id_conj_pair |
    square_zzbar | square_z2 | square_zbar2 | mul1 | mul2 | mul3.
    ``post_scale`` records the predicted magnitude of the largest post-map
    matrix coefficient (h^-1 or h^-2 times the inverse derivative).
    """

    kind: str
    pre: ComplexAffineMap
    post: ComplexAffineMap
    width: int
    z0: tuple
    h: float
    post_scale: float
    two_point_residual: float = 0.0

    def to_cvnn(self, spec: ActivationSpec) -> Cvnn:
        return Cvnn((self.pre, self.post), spec.activation_id)

    def __call__(self, spec: ActivationSpec, z):
        hidden = spec.fn(eval_affine(self.pre, z))
        return eval_affine(self.post, hidden)


def _col(values) -> np.ndarray:
    return np.asarray(values, dtype=np.complex128).reshape(-1, 1)


def identity_block(spec: ActivationSpec, z0: complex, h: float,
                   prof: ToleranceProfile = ToleranceProfile()) -> ShallowBlock:
    """Width-1 approximation of the complex identity; needs d != 0 = dbar at z0."""
    z0 = complex(z0)
    d, dbar, _ = first_derivs(spec, z0, prof)
    if abs(d) <= prof.zero_tol or abs(dbar) > prof.zero_tol:
        raise ConstructionError(
            f"identity block needs |d| > tol >= |dbar| at z0={z0}: d={d:.3g}, dbar={dbar:.3g}")
    f0 = complex(spec(np.array([z0]))[0])
    c = 1.0 / (h * d)
    pre = ComplexAffineMap(_col([h]), [z0])
    post = ComplexAffineMap(_col([c]).T, [-f0 * c])
    return ShallowBlock("identity", pre, post, 1, (z0,), h, abs(c))


def conj_block(spec: ActivationSpec, z0: complex, h: float,
               prof: ToleranceProfile = ToleranceProfile()) -> ShallowBlock:
    """Width-1 approximation of complex conjugation; needs dbar != 0 = d at z0."""
    z0 = complex(z0)
    d, dbar, _ = first_derivs(spec, z0, prof)
    if abs(dbar) <= prof.zero_tol or abs(d) > prof.zero_tol:
        raise ConstructionError(
            f"conjugation block needs |dbar| > tol >= |d| at z0={z0}: d={d:.3g}, dbar={dbar:.3g}")
    f0 = complex(spec(np.array([z0]))[0])
    c = 1.0 / (h * dbar)
    pre = ComplexAffineMap(_col([h]), [z0])
    post = ComplexAffineMap(_col([c]).T, [-f0 * c])
    return ShallowBlock("conjugation", pre, post, 1, (z0,), h, abs(c))


def pair_block(spec: ActivationSpec, z0: complex, h: float,
               prof: ToleranceProfile = ToleranceProfile()) -> ShallowBlock:
    """Width-2 approximation of z -> (z, conj z); needs both derivatives nonzero.

    Neurons see z0 + h z and z0 + i h z; the two outputs combine them as

        ( i y1 + y2 - (1+i) f(z0)) / ( 2 i h d)     ~ z
        (-i y1 + y2 - (1-i) f(z0)) / (-2 i h dbar)  ~ conj z
    """
    z0 = complex(z0)
    d, dbar, _ = first_derivs(spec, z0, prof)
    if abs(d) <= prof.zero_tol or abs(dbar) <= prof.zero_tol:
        raise ConstructionError(
            f"pair block needs both derivatives nonzero at z0={z0}: d={d:.3g}, dbar={dbar:.3g}")
    f0 = complex(spec(np.array([z0]))[0])
    c1 = 1.0 / (2j * h * d)
    c2 = 1.0 / (-2j * h * dbar)
    pre = ComplexAffineMap(_col([h, 1j * h]), [z0, z0])
    post = ComplexAffineMap(
        np.array([[1j * c1, c1], [-1j * c2, c2]], dtype=np.complex128),
        [-(1 + 1j) * f0 * c1, -(1 - 1j) * f0 * c2],
    )
    scale = max(abs(c1), abs(c2))
    return ShallowBlock("pair", pre, post, 2, (z0,), h, scale)


def _scan_first(spec: ActivationSpec, prof: ToleranceProfile):
    from .wirtinger import _probe_candidates

    return _probe_candidates(spec, prof)


def id_conj_pair_block(spec: ActivationSpec, prof: ToleranceProfile, h: float,
                       target_tol: float = 1e-2) -> ShallowBlock:
    """Width-2 approximation of z -> (z, conj z), routing on the probe grid.

    If some point carries both nonzero derivatives, that point's pair block is
    used (best conditioning: maximize min(|d|, |dbar|)).  Otherwise one
    identity block at a lone-d point and one conjugation block at a lone-dbar
    point sit side by side.  In the two-point route the tolerance-level
    residual of the "zero" derivative enters the output as an O(residual/h)
    term; a warning is raised when that exceeds target_tol.
    """
    cands = _scan_first(spec, prof)
    tol = prof.zero_tol
    both = [(z0, d, dbar) for z0, d, dbar, _ in cands
            if abs(d) > tol and abs(dbar) > tol]
    if both:
        z0 = max(both, key=lambda t: min(abs(t[1]), abs(t[2])))[0]
        blk = pair_block(spec, z0, h, prof)
        return ShallowBlock("id_conj_pair", blk.pre, blk.post, 2, blk.z0, h, blk.post_scale)

    id_pts = [(z0, d, dbar) for z0, d, dbar, _ in cands
              if abs(d) > tol and abs(dbar) <= tol]
    conj_pts = [(z0, d, dbar) for z0, d, dbar, _ in cands
                if abs(dbar) > tol and abs(d) <= tol]
    if not id_pts or not conj_pts:
        raise ConstructionError(
            "no usable probe points for id/conj pair: activation appears "
            "holomorphic, antiholomorphic, or R-affine on the probe grid")
    z1, d1, r1 = max(id_pts, key=lambda t: abs(t[1]))
    z2, r2, dbar2 = max(conj_pts, key=lambda t: abs(t[2]))
    residual = max(abs(r1) / abs(d1), abs(r2) / abs(dbar2))
    if residual / h > target_tol:
        warnings.warn(
            f"two-point id/conj pair: residual derivative {residual:.3g} over h={h:.3g} "
            f"exceeds target tolerance {target_tol:.3g}", RuntimeWarning)
    f1 = complex(spec(np.array([z1]))[0])
    f2 = complex(spec(np.array([z2]))[0])
    c1 = 1.0 / (h * d1)
    c2 = 1.0 / (h * dbar2)
    pre = ComplexAffineMap(_col([h, h]), [z1, z2])
    post = ComplexAffineMap(
        np.array([[c1, 0], [0, c2]], dtype=np.complex128),
        [-f1 * c1, -f2 * c2],
    )
    return ShallowBlock("id_conj_pair", pre, post, 2, (complex(z1), complex(z2)), h,
                        max(abs(c1), abs(c2)), residual)


def square_block(spec: ActivationSpec, z0: complex, h: float,
                 prof: ToleranceProfile = ToleranceProfile()):
    """Width-4 approximation of one of z*conj(z), z^2, conj(z)^2 at z0.

    Which one depends on the second Wirtinger derivatives there, probed in
    the order ddbar > d2 > dbar2:

      ddbar != 0:            neurons at z0 +- h z, z0 +- i h z, post
                             (y1+y2+y3+y4 - 4 f0) / (4 h^2 ddbar)      ~ z conj(z)
      else d2 != 0:          neurons at z0 +- h z, z0 +- sqrt(i) h z, post
                             (y1+y2-i y3-i y4 + 2(-1+i) f0) / (2 h^2 d2)  ~ z^2
      else dbar2 != 0:       neurons at z0 +- h z (padded to 4), post
                             (y1+y2 - 2 f0) / (h^2 dbar2)               ~ conj(z)^2

    Returns (block, which) with which in {"zzbar", "z2", "zbar2"}.
    """
    z0 = complex(z0)
    d2, ddbar, dbar2, _ = second_derivs(spec, z0, prof)
    f0 = complex(spec(np.array([z0]))[0])
    tol = prof.zero_tol
    if abs(ddbar) > tol:
        c = 1.0 / (4 * h**2 * ddbar)
        pre = ComplexAffineMap(_col([h, -h, 1j * h, -1j * h]), [z0] * 4)
        post = ComplexAffineMap(np.array([[c, c, c, c]]), [-4 * f0 * c])
        return ShallowBlock("square_zzbar", pre, post, 4, (z0,), h, abs(c)), "zzbar"
    if abs(d2) > tol:
        c = 1.0 / (2 * h**2 * d2)
        pre = ComplexAffineMap(_col([h, -h, SQRT_I * h, -SQRT_I * h]), [z0] * 4)
        post = ComplexAffineMap(np.array([[c, c, -1j * c, -1j * c]]),
                                [2 * (-1 + 1j) * f0 * c])
        return ShallowBlock("square_z2", pre, post, 4, (z0,), h, abs(c)), "z2"
    if abs(dbar2) > tol:
        c = 1.0 / (h**2 * dbar2)
        pre = ComplexAffineMap(_col([h, -h, 0, 0]), [z0] * 4)
        post = ComplexAffineMap(np.array([[c, c, 0, 0]]), [-2 * f0 * c])
        return ShallowBlock("square_zbar2", pre, post, 4, (z0,), h, abs(c)), "zbar2"
    raise ConstructionError(
        f"all second Wirtinger derivatives vanish at z0={z0} "
        f"(locally R-affine): d2={d2:.3g}, ddbar={ddbar:.3g}, dbar2={dbar2:.3g}")


# polarization combinations: (input row over (z, w), coefficient)
_MUL_COMBOS = {
    "mul2": (((1, 1), 0.25 + 0.25j), ((1, -1), -0.25 + 0.25j), ((1, -1j), -0.5j)),
    "mul1": (((1, 1), 0.25), ((1, -1), -0.25)),
    "mul3": (((1, 1), 0.25), ((1, -1), -0.25)),
}


def mul_block(spec: ActivationSpec, z0: complex, h: float,
              prof: ToleranceProfile = ToleranceProfile()):
    """Two-input multiplication block via the polarization identities.

    The available square kind at z0 dictates the product that comes out:

      zzbar -> mul2:  (1/4+i/4)|z+w|^2 + (-1/4+i/4)|z-w|^2 - (i/2)|z-iw|^2 = z conj(w)
      z2    -> mul1:  ((z+w)^2 - (z-w)^2) / 4 = z w
      zbar2 -> mul3:  (conj(z+w)^2 - conj(z-w)^2) / 4 = conj(z w)

    Returns (block, kind) with 12 neurons for mul2 and 8 for mul1/mul3.
    """
    base, which = square_block(spec, z0, h, prof)
    kind = _SQUARE_TO_MUL[which]
    combos = _MUL_COMBOS[kind]
    sq_rows = base.pre.matrix[:, 0]
    sq_b = base.pre.bias
    sq_post = base.post.matrix[0]
    sq_bias = base.post.bias[0]
    pre_rows, pre_bias, post_coeffs = [], [], []
    bias = 0j
    for row, coef in combos:
        for k in range(4):
            pre_rows.append([sq_rows[k] * row[0], sq_rows[k] * row[1]])
            pre_bias.append(sq_b[k])
            post_coeffs.append(coef * sq_post[k])
        bias += coef * sq_bias
    pre = ComplexAffineMap(np.array(pre_rows, dtype=np.complex128), pre_bias)
    post = ComplexAffineMap(np.array([post_coeffs], dtype=np.complex128), [bias])
    width = len(pre_rows)
    scale = max(abs(c) for c in post_coeffs)
    return ShallowBlock(kind, pre, post, width, (z0,), h, scale), kind


def block_error(block: ShallowBlock, spec: ActivationSpec, target: Callable,
                box: CompactBox, grid: GridSpec, seed: int = 0) -> float:
    """Max Euclidean output error of the block against the target over the grid."""
    pts = sample_box(box, grid, seed)
    got = block(spec, pts)
    want = np.asarray(target(pts), dtype=np.complex128)
    if want.ndim == 1:
        want = want[:, None]
    if got.shape != want.shape:
        raise ValueError(f"target shape {want.shape} != block output {got.shape}")
    return float(np.max(np.linalg.norm(got - want, axis=1)))


def auto_tune_h(builder: Callable, spec: ActivationSpec, target: Callable,
                box: CompactBox, grid: GridSpec,
                schedule=DEFAULT_H_SCHEDULE):
    """Walk a descending h schedule, stopping once the measured error rises
    (float cancellation floor); returns (best_h, best_block, best_error).

    ``builder(h)`` returns the block (or (block, extra), extra ignored).
    """
    best = None
    prev_err = None
    for h in schedule:
        built = builder(h)
        block = built[0] if isinstance(built, tuple) else built
        err = block_error(block, spec, target, box, grid)
        if best is None or err < best[2]:
            best = (h, block, err)
        if prev_err is not None and err > prev_err:
            break
        prev_err = err
    return best
