"""Complex linear algebra core: affine maps, strict alternating networks,
compact boxes, and grid sampling.

A network here is the alternating composition of complex-affine maps and an
elementwise activation,

    V_L o act^(xW) o ... o act^(xW) o V_1 : C^n -> C^m,

stored as the tuple of affine maps plus an activation identifier.  Complex
scalars are double-precision pairs throughout (``numpy.complex128``); no
arbitrary precision.  All values are immutable after construction, so they
are safe to share between threads, and evaluation is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, EvaluationFailure

__all__ = [
    "ComplexAffineMap",
    "Cvnn",
    "CompactBox",
    "GridSpec",
    "eval_affine",
    "eval_cvnn",
    "fuse_affine",
    "fuse_adjacent",
    "width_of",
    "depth_of",
    "hidden_widths",
    "pad_hidden_width",
    "sample_box",
    "identity_affine",
    "cvnn_to_json",
    "cvnn_from_json",
]


def _as_complex_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionMismatch(f"matrix must be 2-d, got shape {a.shape}")
    return a


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a.view(np.float64))):
        raise ValueError(f"non-finite entries in {what}")


@dataclass(frozen=True)
class ComplexAffineMap:
    """A map z -> A z + b with A in C^(out x in), b in C^out."""

    matrix: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        m = _as_complex_matrix(self.matrix)
        b = np.asarray(self.bias, dtype=np.complex128)
        if b.ndim != 1:
            raise DimensionMismatch(f"bias must be 1-d, got shape {b.shape}")
        if b.shape[0] != m.shape[0]:
            raise DimensionMismatch(
                f"bias length {b.shape[0]} != matrix rows {m.shape[0]}"
            )
        _check_finite(m, "affine matrix")
        _check_finite(b, "affine bias")
        m = m.copy()
        b = b.copy()
        m.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, z):
        return eval_affine(self, z)


def identity_affine(dim: int) -> ComplexAffineMap:
    return ComplexAffineMap(np.eye(dim, dtype=np.complex128), np.zeros(dim, dtype=np.complex128))


def eval_affine(amap: ComplexAffineMap, z) -> np.ndarray:
    """Evaluate A z + b.  Accepts a single vector (in_dim,) or a batch (N, in_dim)."""
    zv = np.asarray(z, dtype=np.complex128)
    if zv.ndim == 1:
        if zv.shape[0] != amap.in_dim:
            raise DimensionMismatch(f"input length {zv.shape[0]} != in_dim {amap.in_dim}")
        return amap.matrix @ zv + amap.bias
    if zv.ndim == 2:
        if zv.shape[1] != amap.in_dim:
            raise DimensionMismatch(f"input width {zv.shape[1]} != in_dim {amap.in_dim}")
        return zv @ amap.matrix.T + amap.bias
    raise DimensionMismatch(f"input must be 1-d or 2-d, got shape {zv.shape}")


def fuse_affine(a: ComplexAffineMap, b: ComplexAffineMap) -> ComplexAffineMap:
    """Compose a o b into a single affine map (composition of affines is affine)."""
    if a.in_dim != b.out_dim:
        raise DimensionMismatch(f"cannot fuse: a.in_dim {a.in_dim} != b.out_dim {b.out_dim}")
    return ComplexAffineMap(a.matrix @ b.matrix, a.matrix @ b.bias + a.bias)


@dataclass(frozen=True)
class ActivationId:
    """Name plus parameters identifying a catalog activation."""

    name: str
    params: tuple = ()

    def as_dict(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class Cvnn:
    """Strict alternating network: affine maps with the activation applied
    elementwise to every hidden coordinate between consecutive maps.

    Hidden layer widths may differ; the width of the network is the max over
    all layer dimensions including input and output.  Depth is the number of
    affine maps (>= 2).
    """

    affine_maps: tuple
    activation: ActivationId

    def __post_init__(self):
        maps = tuple(self.affine_maps)
        if len(maps) < 2:
            raise DimensionMismatch("a network needs at least 2 affine maps")
        for a, b in zip(maps, maps[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionMismatch(
                    f"dimension chain broken: out_dim {a.out_dim} -> in_dim {b.in_dim}"
                )
        object.__setattr__(self, "affine_maps", maps)

    @property
    def input_dim(self) -> int:
        return self.affine_maps[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.affine_maps[-1].out_dim

    def __call__(self, z, activation_fn=None):
        return eval_cvnn(self, z, activation_fn)


def _resolve_activation(net: Cvnn, activation_fn) -> Callable:
    if activation_fn is not None:
        return activation_fn
    from .activations import get_activation

    return get_activation(net.activation.name, net.activation.as_dict())


def eval_cvnn(net: Cvnn, z, activation_fn=None) -> np.ndarray:
    """Evaluate the alternating composition.  ``activation_fn`` overrides the
    catalog lookup (it must be vectorized over complex arrays).

    Raises EvaluationFailure if an activation output is non-finite.
    """
    act = _resolve_activation(net, activation_fn)
    cur = np.asarray(z, dtype=np.complex128)
    with np.errstate(over="ignore", invalid="ignore"):
        for k, amap in enumerate(net.affine_maps):
            cur = eval_affine(amap, cur)
            if k < len(net.affine_maps) - 1:
                cur = np.asarray(act(cur), dtype=np.complex128)
                if not np.all(np.isfinite(cur.view(np.float64))):
                    raise EvaluationFailure(
                        f"activation produced non-finite values after affine map {k}"
                    )
    return cur


def width_of(net: Cvnn) -> int:
    """Max over all layer dimensions including input and output (unpadded)."""
    dims = [net.affine_maps[0].in_dim] + [m.out_dim for m in net.affine_maps]
    return max(dims)


def depth_of(net: Cvnn) -> int:
    return len(net.affine_maps)


def hidden_widths(net: Cvnn) -> tuple:
    return tuple(m.out_dim for m in net.affine_maps[:-1])


def fuse_adjacent(net: Cvnn) -> Cvnn:
    """No-op on a strict network (kept for symmetry with builders that emit
    unfused chains); re-validates the chain."""
    return Cvnn(net.affine_maps, net.activation)


def pad_hidden_width(net: Cvnn, width: int) -> Cvnn:
    """Pad every hidden layer to the given width with zero rows and columns.

    The padded neurons receive input 0 and their activation value is killed
    by zero columns in the next map, so the realized function is unchanged
    for any activation.  Width accounting reports the padded dims afterwards.
    """
    if width < width_of(net):
        raise DimensionMismatch(f"cannot pad to {width} below current width {width_of(net)}")
    maps = list(net.affine_maps)
    out = []
    for k, amap in enumerate(maps):
        rows = amap.out_dim if k == len(maps) - 1 else width
        cols = amap.in_dim if k == 0 else width
        m = np.zeros((rows, cols), dtype=np.complex128)
        b = np.zeros(rows, dtype=np.complex128)
        m[: amap.out_dim, : amap.in_dim] = amap.matrix
        b[: amap.out_dim] = amap.bias
        out.append(ComplexAffineMap(m, b))
    return Cvnn(tuple(out), net.activation)


@dataclass(frozen=True)
class CompactBox:
    """Axis-aligned compact box in C^n: per coordinate a real interval and an
    imaginary interval.  ``intervals`` is a tuple of (re_lo, re_hi, im_lo, im_hi)."""

    intervals: tuple

    def __post_init__(self):
        ivs = tuple(tuple(float(x) for x in iv) for iv in self.intervals)
        if not ivs:
            raise ValueError("box needs at least one coordinate")
        for re_lo, re_hi, im_lo, im_hi in ivs:
            if re_lo > re_hi or im_lo > im_hi:
                raise ValueError("interval lo must be <= hi")
        object.__setattr__(self, "intervals", ivs)

    @property
    def n(self) -> int:
        return len(self.intervals)

    @staticmethod
    def square(n: int, half_side: float, center: complex = 0j) -> "CompactBox":
        """[c-r, c+r] + i[c-r, c+r] in every coordinate."""
        c, r = complex(center), float(half_side)
        iv = (c.real - r, c.real + r, c.imag - r, c.imag + r)
        return CompactBox(tuple(iv for _ in range(n)))

    def radius(self) -> float:
        """Max Euclidean norm over the box (attained at a corner)."""
        sq = 0.0
        for re_lo, re_hi, im_lo, im_hi in self.intervals:
            sq += max(re_lo**2, re_hi**2) + max(im_lo**2, im_hi**2)
        return float(np.sqrt(sq))


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the sup over a box: either the full uniform lattice
    with ``points_per_axis`` points per real axis, or the same number of
    points drawn uniformly at random (seeded)."""

    points_per_axis: int
    sampling: str = "uniform-lattice"

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        if self.sampling not in ("uniform-lattice", "seeded-random"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


def sample_box(box: CompactBox, spec: GridSpec, seed: int = 0) -> np.ndarray:
    """Sample the box as an (N, n) complex array.

    Lattice mode returns the full tensor grid (points_per_axis per real axis,
    2n real axes), which always covers the corners.  Random mode draws the
    same number of points uniformly; identical seeds give identical output.
    """
    p = spec.points_per_axis
    n = box.n
    if spec.sampling == "uniform-lattice":
        axes = []
        for re_lo, re_hi, im_lo, im_hi in box.intervals:
            axes.append(np.linspace(re_lo, re_hi, p))
            axes.append(np.linspace(im_lo, im_hi, p))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.empty((p ** (2 * n), n), dtype=np.complex128)
        for j in range(n):
            pts[:, j] = mesh[2 * j].ravel() + 1j * mesh[2 * j + 1].ravel()
        return pts
    rng = np.random.default_rng(seed)
    count = p ** (2 * n)
    pts = np.empty((count, n), dtype=np.complex128)
    for j, (re_lo, re_hi, im_lo, im_hi) in enumerate(box.intervals):
        pts[:, j] = rng.uniform(re_lo, re_hi, count) + 1j * rng.uniform(im_lo, im_hi, count)
    return pts


# ---------------------------------------------------------------------------
# JSON serialization.  Floats survive a round trip bit-exactly: json emits the
# shortest decimal representation that parses back to the same double.
# ---------------------------------------------------------------------------


def _c2l(x: complex) -> list:
    return [float(np.real(x)), float(np.imag(x))]


def _l2c(x) -> complex:
    return complex(x[0], x[1])


def _param_value_to_json(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _param_value_from_json(v):
    if isinstance(v, list):
        return _l2c(v)
    return v


def _affine_to_dict(amap: ComplexAffineMap) -> dict:
    return {
        "rows": amap.out_dim,
        "cols": amap.in_dim,
        "matrix": [_c2l(x) for x in amap.matrix.ravel()],
        "bias": [_c2l(x) for x in amap.bias],
    }


def _affine_from_dict(d: dict) -> ComplexAffineMap:
    rows, cols = int(d["rows"]), int(d["cols"])
    flat = np.array([_l2c(x) for x in d["matrix"]], dtype=np.complex128)
    m = flat.reshape(rows, cols)
    b = np.array([_l2c(x) for x in d["bias"]], dtype=np.complex128)
    return ComplexAffineMap(m, b)


def cvnn_to_json(net: Cvnn) -> str:
    doc = {
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "activation": {
            "name": net.activation.name,
            "params": {k: _param_value_to_json(v) for k, v in net.activation.params},
        },
        "affine_maps": [_affine_to_dict(m) for m in net.affine_maps],
    }
    return json.dumps(doc, sort_keys=True)


def cvnn_from_json(text: str) -> Cvnn:
    doc = json.loads(text)
    act = doc["activation"]
    params = tuple(sorted((k, _param_value_from_json(v)) for k, v in act["params"].items()))
    maps = tuple(_affine_from_dict(d) for d in doc["affine_maps"])
    net = Cvnn(maps, ActivationId(act["name"], params))
    if net.input_dim != doc["input_dim"] or net.output_dim != doc["output_dim"]:
        raise DimensionMismatch("serialized dims are inconsistent with the maps")
    return net
