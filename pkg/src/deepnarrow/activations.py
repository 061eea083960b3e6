"""Catalog of concrete complex activation functions.

Each entry bundles a vectorized evaluator with whatever analytic side data is
known: closed-form first/second Wirtinger derivatives, a polyharmonicity flag
(the order m with laplacian^m == 0, or the statement that no such order
exists), structural class flags (holomorphic / antiholomorphic / R-affine),
and a predicate marking the non-differentiable locus.  The analytic flags are
authoritative where present; numerical probes are only a fallback.

Wirtinger derivative convention: d = (d/dx - i d/dy)/2, dbar = (d/dx + i d/dy)/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .core import ActivationId
from .errors import InvalidActivationParams, UnknownActivation

__all__ = [
    "ActivationSpec",
    "PolyharmonicFlag",
    "get_activation",
    "eval_activation",
    "available_activations",
    "conjugate_activation",
    "scale_activation",
    "custom_activation",
]


@dataclass(frozen=True)
class PolyharmonicFlag:
    """Analytic polyharmonicity statement: laplacian^order == 0, or none exists."""

    is_polyharmonic: bool
    order: Optional[int] = None


@dataclass(frozen=True)
class ActivationSpec:
    name: str
    params: tuple = ()
    fn: Callable = None
    analytic_first: Optional[Callable] = None    # z0 -> (d, dbar)
    analytic_second: Optional[Callable] = None   # z0 -> (d2, ddbar, dbar2)
    poly_flag: Optional[PolyharmonicFlag] = None
    class_flags: frozenset = frozenset()         # subset of {"holomorphic","antiholomorphic","r_affine"}
    exclusion: Optional[Callable] = None         # z0 -> bool, True on non-differentiable loci

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=np.complex128))

    @property
    def activation_id(self) -> ActivationId:
        return ActivationId(self.name, self.params)

    def is_excluded(self, z0: complex) -> bool:
        return bool(self.exclusion(complex(z0))) if self.exclusion is not None else False


def conjugate_activation(spec: ActivationSpec) -> ActivationSpec:
    """conj o spec.  Wirtinger data swaps and conjugates:
    d(conj f) = conj(dbar f), dbar(conj f) = conj(d f)."""
    inner_first = spec.analytic_first
    inner_second = spec.analytic_second

    def fn(z):
        return np.conj(spec.fn(z))

    first = None
    if inner_first is not None:
        def first(z0, _f=inner_first):
            d, dbar = _f(z0)
            return np.conj(dbar), np.conj(d)

    second = None
    if inner_second is not None:
        def second(z0, _f=inner_second):
            d2, ddbar, dbar2 = _f(z0)
            return np.conj(dbar2), np.conj(ddbar), np.conj(d2)

    flags = set()
    if "holomorphic" in spec.class_flags:
        flags.add("antiholomorphic")
    if "antiholomorphic" in spec.class_flags:
        flags.add("holomorphic")
    if "r_affine" in spec.class_flags:
        flags.add("r_affine")
    return ActivationSpec(
        name=f"conj:{spec.name}",
        params=spec.params,
        fn=fn,
        analytic_first=first,
        analytic_second=second,
        poly_flag=spec.poly_flag,
        class_flags=frozenset(flags),
        exclusion=spec.exclusion,
    )


def scale_activation(spec: ActivationSpec, c: complex) -> ActivationSpec:
    """c * spec for a nonzero constant c.  Preserves every class property."""
    c = complex(c)
    if c == 0:
        raise InvalidActivationParams("scale constant must be nonzero")

    first = None
    if spec.analytic_first is not None:
        def first(z0, _f=spec.analytic_first):
            d, dbar = _f(z0)
            return c * d, c * dbar

    second = None
    if spec.analytic_second is not None:
        def second(z0, _f=spec.analytic_second):
            return tuple(c * v for v in _f(z0))

    return ActivationSpec(
        name=f"scale({c!r}):{spec.name}",
        params=spec.params,
        fn=lambda z: c * spec.fn(z),
        analytic_first=first,
        analytic_second=second,
        poly_flag=spec.poly_flag,
        class_flags=spec.class_flags,
        exclusion=spec.exclusion,
    )


def custom_activation(name: str, fn: Callable, **kwargs) -> ActivationSpec:
    """Wrap a user callable; not reachable through the catalog by name."""
    return ActivationSpec(name=name, params=(), fn=fn, **kwargs)


# ---------------------------------------------------------------------------
# Catalog members
# ---------------------------------------------------------------------------


def _modrelu(params: Mapping) -> ActivationSpec:
    b = float(params.get("b", -1.0))
    if b >= 0:
        raise InvalidActivationParams(f"modrelu requires b < 0, got {b}")

    def fn(z):
        z = np.asarray(z, dtype=np.complex128)
        r = np.abs(z)
        out = np.zeros_like(z)
        mask = r + b > 0
        np.divide((r + b) * z, r, out=out, where=mask)
        return out

    def first(z0):
        r = abs(z0)
        if r + b < 0:
            return 0j, 0j
        # modrelu = z + b*z/|z| on the active region
        return 1 + b / (2 * r), -b * z0 * z0 / (2 * r**3)

    def excl(z0):
        return abs(abs(z0) + b) < 1e-12

    return ActivationSpec(
        name="modrelu",
        params=(("b", b),),
        fn=fn,
        analytic_first=first,
        poly_flag=PolyharmonicFlag(False),
        exclusion=excl,
    )


def _cardioid(params: Mapping) -> ActivationSpec:
    def fn(z):
        z = np.asarray(z, dtype=np.complex128)
        r = np.abs(z)
        out = np.zeros_like(z)
        mask = r > 0
        np.divide(0.5 * (r + np.real(z)) * z, r, out=out, where=mask)
        return out

    def first(z0):
        r = abs(z0)
        if r == 0:
            return 0j, 0j
        u = z0 / r
        return 0.5 + np.conj(u) / 8 + 3 * u / 8, -(u**3) / 8 + u / 8

    def excl(z0):
        return abs(z0) < 1e-12

    return ActivationSpec(
        name="cardioid",
        params=(),
        fn=fn,
        analytic_first=first,
        poly_flag=PolyharmonicFlag(False),
        exclusion=excl,
    )


def _holo_exp(params: Mapping) -> ActivationSpec:
    return ActivationSpec(
        name="exp",
        params=(),
        fn=np.exp,
        analytic_first=lambda z0: (np.exp(z0), 0j),
        analytic_second=lambda z0: (np.exp(z0), 0j, 0j),
        poly_flag=PolyharmonicFlag(True, 1),
        class_flags=frozenset({"holomorphic"}),
    )


def _antiholo_exp(params: Mapping) -> ActivationSpec:
    return ActivationSpec(
        name="antiholo_exp",
        params=(),
        fn=lambda z: np.exp(np.conj(z)),
        analytic_first=lambda z0: (0j, np.exp(np.conj(z0))),
        analytic_second=lambda z0: (0j, 0j, np.exp(np.conj(z0))),
        poly_flag=PolyharmonicFlag(True, 1),
        class_flags=frozenset({"antiholomorphic"}),
    )


def _r_affine(params: Mapping) -> ActivationSpec:
    a = complex(params.get("a", 1))
    b = complex(params.get("b", 0))
    c = complex(params.get("c", 0))
    flags = {"r_affine"}
    if b == 0:
        flags.add("holomorphic")
    if a == 0:
        flags.add("antiholomorphic")
    return ActivationSpec(
        name="r_affine",
        params=(("a", a), ("b", b), ("c", c)),
        fn=lambda z: a * z + b * np.conj(z) + c,
        analytic_first=lambda z0: (a, b),
        analytic_second=lambda z0: (0j, 0j, 0j),
        poly_flag=PolyharmonicFlag(True, 1),
        class_flags=frozenset(flags),
    )


def _re_square(params: Mapping) -> ActivationSpec:
    # RE(z)^2 = (z^2 + 2 z zbar + zbar^2)/4; laplacian == 2, so order 2.
    return ActivationSpec(
        name="re_square",
        params=(),
        fn=lambda z: np.real(z).astype(np.complex128) ** 2,
        analytic_first=lambda z0: (complex(np.real(z0)), complex(np.real(z0))),
        analytic_second=lambda z0: (0.5 + 0j, 0.5 + 0j, 0.5 + 0j),
        poly_flag=PolyharmonicFlag(True, 2),
    )


def _z_plus_zbar_sq(params: Mapping) -> ActivationSpec:
    # z + zbar^2 is harmonic: d = 1 everywhere, dbar = 2 zbar.
    return ActivationSpec(
        name="z_plus_zbar_sq",
        params=(),
        fn=lambda z: z + np.conj(z) ** 2,
        analytic_first=lambda z0: (1 + 0j, 2 * np.conj(z0)),
        analytic_second=lambda z0: (0j, 0j, 2 + 0j),
        poly_flag=PolyharmonicFlag(True, 1),
    )


def _abs_square(params: Mapping) -> ActivationSpec:
    return ActivationSpec(
        name="abs_square",
        params=(),
        fn=lambda z: (z * np.conj(z)).astype(np.complex128),
        analytic_first=lambda z0: (np.conj(z0), complex(z0)),
        analytic_second=lambda z0: (0j, 1 + 0j, 0j),
        poly_flag=PolyharmonicFlag(True, 2),
    )


def _exp_re(params: Mapping) -> ActivationSpec:
    # phi(RE z) with phi = exp; d = dbar = exp(x)/2, never polyharmonic.
    def first(z0):
        v = np.exp(np.real(z0)) / 2
        return complex(v), complex(v)

    def second(z0):
        v = np.exp(np.real(z0)) / 4
        return complex(v), complex(v), complex(v)

    return ActivationSpec(
        name="exp_re",
        params=(),
        fn=lambda z: np.exp(np.real(z)).astype(np.complex128),
        analytic_first=first,
        analytic_second=second,
        poly_flag=PolyharmonicFlag(False),
    )


def _tanh_re(params: Mapping) -> ActivationSpec:
    def first(z0):
        x = np.real(z0)
        v = (1 - np.tanh(x) ** 2) / 2
        return complex(v), complex(v)

    def second(z0):
        x = np.tanh(np.real(z0))
        v = (-2 * x * (1 - x**2)) / 4
        return complex(v), complex(v), complex(v)

    return ActivationSpec(
        name="tanh_re",
        params=(),
        fn=lambda z: np.tanh(np.real(z)).astype(np.complex128),
        analytic_first=first,
        analytic_second=second,
        poly_flag=PolyharmonicFlag(False),
    )


#: Truncation order of the cosine series standing in for a genuinely
#: nowhere-differentiable bump.  With (a, b) = (0.5, 7) the k-th term
#: oscillates at wavelength ~ 2 / 7^k, so the truncated sum is technically
#: smooth below that scale; probes are only meaningful above it.
_WEIERSTRASS_A = 0.5
_WEIERSTRASS_B = 7.0


def _nowhere_diff(params: Mapping) -> ActivationSpec:
    ktrunc = int(params.get("ktrunc", 20))
    if ktrunc < 1:
        raise InvalidActivationParams("ktrunc must be >= 1")
    ks = np.arange(ktrunc + 1)
    amps = _WEIERSTRASS_A**ks
    freqs = _WEIERSTRASS_B**ks * np.pi

    def wsum(x):
        return np.tensordot(amps, np.cos(np.multiply.outer(freqs, x)), axes=(0, 0))

    def fn(z):
        z = np.asarray(z, dtype=np.complex128)
        w = wsum(np.real(z)) + 1j * wsum(np.imag(z))
        return np.sin(z) + w * np.exp(-z)

    return ActivationSpec(
        name="nowhere_diff",
        params=(("ktrunc", ktrunc),),
        fn=fn,
        poly_flag=PolyharmonicFlag(False),
    )


_BUILDERS = {
    "modrelu": _modrelu,
    "cardioid": _cardioid,
    "card": _cardioid,
    "exp": _holo_exp,
    "holo_exp": _holo_exp,
    "antiholo_exp": _antiholo_exp,
    "r_affine": _r_affine,
    "re_square": _re_square,
    "z_plus_zbar_sq": _z_plus_zbar_sq,
    "abs_square": _abs_square,
    "exp_re": _exp_re,
    "tanh_re": _tanh_re,
    "nowhere_diff": _nowhere_diff,
}


def available_activations() -> tuple:
    return tuple(sorted(set(_BUILDERS) - {"card", "holo_exp"}))


def get_activation(name: str, params: Optional[Mapping] = None) -> ActivationSpec:
    """Look up a catalog activation.  A ``conj:`` prefix wraps the inner
    activation in complex conjugation (used by the conjugate-network
    lowerings and serialization)."""
    params = dict(params or {})
    if name.startswith("conj:"):
        return conjugate_activation(get_activation(name[len("conj:"):], params))
    builder = _BUILDERS.get(name)
    if builder is None:
        raise UnknownActivation(f"unknown activation {name!r}")
    return builder(params)


def eval_activation(spec: ActivationSpec, z):
    """Scalar or batch evaluation; total on C by construction."""
    z = np.asarray(z, dtype=np.complex128)
    out = spec.fn(z)
    if np.ndim(z) == 0:
        return complex(out)
    return out
