import numpy as np
import pytest

from deepnarrow.activations import (conjugate_activation, custom_activation,
                                    get_activation, scale_activation)
from deepnarrow.core import CompactBox, GridSpec
from deepnarrow.wirtinger import (Classification, ToleranceProfile,
                                  classify_activation, find_active_point,
                                  find_nonzero_second_point, laplacian_iterate,
                                  second_partials_to_wirtinger,
                                  taylor_remainder_probe, wirt_first, wirt_second)

from conftest import random_points

PROF = ToleranceProfile()


def test_wirt_first_cardioid_at_one():
    card = get_activation("cardioid")
    d, dbar, _ = wirt_first(card, 1.0, PROF)
    assert abs(d - 1) < 1e-6
    assert abs(dbar) < 1e-6


def test_wirt_first_z_square():
    spec = custom_activation("zsq", lambda z: z**2)
    d, dbar, _ = wirt_first(spec, 1 + 1j, PROF)
    assert abs(d - (2 + 2j)) < 1e-8
    assert abs(dbar) < 1e-8


def test_wirt_first_zzbar():
    spec = custom_activation("zzbar", lambda z: z * np.conj(z))
    d, dbar, _ = wirt_first(spec, 2 + 1j, PROF)
    assert abs(d - (2 - 1j)) < 1e-8
    assert abs(dbar - (2 + 1j)) < 1e-8


def test_wirt_second_re_square():
    spec = custom_activation("resq", lambda z: np.real(z).astype(complex) ** 2)
    for z0 in (0.3 - 0.8j, 1.5 + 0.1j):
        d2, ddbar, dbar2, _ = wirt_second(spec, z0, PROF)
        for val in (d2, ddbar, dbar2):
            assert abs(val - 0.5) < 1e-5


def test_wirt_second_z_square():
    spec = custom_activation("zsq", lambda z: z**2)
    d2, ddbar, dbar2, _ = wirt_second(spec, -0.4 + 0.9j, PROF)
    assert abs(d2 - 2) < 1e-5
    assert abs(ddbar) < 1e-5
    assert abs(dbar2) < 1e-5


def test_wirt_second_modrelu_all_nonzero():
    mr = get_activation("modrelu", {"b": -1})
    d2, ddbar, dbar2, _ = wirt_second(mr, 2.0, PROF)
    for val in (d2, ddbar, dbar2):
        assert abs(val) > PROF.zero_tol


def test_conversion_matrix_exact_on_polynomials():
    # analytic second partials pushed through the quarter matrix reproduce the
    # analytic second Wirtinger derivatives to machine precision
    cases = [
        # z^2 = (x+iy)^2: fxx=2, fxy=2i, fyy=-2 -> (2, 0, 0)
        ((2, 2j, -2), (2, 0, 0)),
        # z zbar = x^2+y^2: fxx=2, fxy=0, fyy=2 -> (0, 1, 0)
        ((2, 0, 2), (0, 1, 0)),
        # RE(z)^2: fxx=2, fxy=0, fyy=0 -> (1/2, 1/2, 1/2)
        ((2, 0, 0), (0.5, 0.5, 0.5)),
        # zbar^2: fxx=2, fxy=-2i, fyy=-2 -> (0, 0, 2)
        ((2, -2j, -2), (0, 0, 2)),
        # RE(z)^3 at x+iy: fxx=6x, fxy=0, fyy=0 -> (6x/4, 6x/4, 6x/4)
        ((6 * 0.7, 0, 0), (1.05, 1.05, 1.05)),
    ]
    for (fxx, fxy, fyy), want in cases:
        got = second_partials_to_wirtinger(fxx, fxy, fyy)
        for g, w in zip(got, want):
            assert abs(g - w) < 1e-12


def test_laplacian_zzbar():
    spec = custom_activation("zzbar", lambda z: z * np.conj(z))
    for z0 in (0j, 1 - 2j):
        est = laplacian_iterate(spec, z0, 1, PROF)
        assert abs(est.value - 4) < 1e-3
        est2 = laplacian_iterate(spec, z0, 2, PROF)
        assert abs(est2.value) < 1e-3


def test_laplacian_exp_re():
    spec = get_activation("exp_re")
    for order in (1, 2, 3):
        est = laplacian_iterate(spec, 0.0, order, PROF)
        assert abs(est.value - 1) < 2e-2
        assert abs(est.value) > PROF.zero_tol


def test_laplacian_order_bounds():
    spec = get_activation("exp_re")
    with pytest.raises(ValueError):
        laplacian_iterate(spec, 0.0, 0, PROF)
    with pytest.raises(ValueError):
        laplacian_iterate(spec, 0.0, PROF.polyharmonic_max_order + 1, PROF)


def test_taylor_probe_cardioid_decreasing():
    card = get_activation("cardioid")
    rep = taylor_remainder_probe(card, 1.0, 1, PROF)
    assert rep.passed
    assert all(b < a for a, b in zip(rep.ratios, rep.ratios[1:]))


def test_taylor_probe_quadratic_second_order_zero():
    spec = custom_activation("zsq", lambda z: z**2)
    rep = taylor_remainder_probe(spec, 0.0, 2, PROF)
    assert rep.passed
    assert all(r < 1e-9 for r in rep.ratios)


def test_taylor_probe_fails_on_modrelu_circle():
    mr = get_activation("modrelu", {"b": -1})
    rep = taylor_remainder_probe(mr, 1.0, 1, PROF)
    assert not rep.passed


def test_find_active_point_cardioid():
    card = get_activation("cardioid")
    z0 = find_active_point(card, PROF)
    assert z0 is not None
    d, dbar, _ = wirt_first(card, z0, PROF)
    assert abs(d) > PROF.zero_tol
    assert abs(dbar) <= PROF.zero_tol


def test_find_active_point_constant():
    spec = custom_activation("const", lambda z: np.full_like(z, 2 + 1j))
    assert find_active_point(spec, PROF) is None


def test_find_active_point_modrelu_outside_circle():
    mr = get_activation("modrelu", {"b": -1})
    prof = ToleranceProfile(probe_box=CompactBox(((1.2, 2.0, 1.2, 2.0),)))
    z0 = find_active_point(mr, prof)
    assert z0 is not None
    d, dbar, _ = wirt_first(mr, z0, prof)
    assert abs(d) > prof.zero_tol and abs(dbar) > prof.zero_tol


def test_find_nonzero_second_preference():
    rs = get_activation("re_square")
    found = find_nonzero_second_point(rs, PROF)
    assert found is not None and found[1] == "ddbar"
    zb = get_activation("z_plus_zbar_sq")
    found = find_nonzero_second_point(zb, PROF)
    assert found is not None and found[1] == "dbar2"
    aff = get_activation("r_affine", {"a": 2, "b": 1, "c": 0})
    assert find_nonzero_second_point(aff, PROF) is None


CLASSIFY_TABLE = [
    ("exp", {}, "NonUniversalHolomorphic"),
    ("antiholo_exp", {}, "NonUniversalAntiholomorphic"),
    ("r_affine", {"a": 2, "b": 1, "c": 1}, "NonUniversalRAffine"),
    ("cardioid", {}, "UniversalNonPoly_NMplus1"),
    ("modrelu", {"b": -1}, "UniversalNonPoly_2N2Mplus1"),
    ("re_square", {}, "UniversalPoly_2N2Mplus5"),
    ("abs_square", {}, "UniversalPoly_2N2Mplus5"),
    ("z_plus_zbar_sq", {}, "UniversalPoly_NMplus4"),
]


@pytest.mark.parametrize("name,params,verdict", CLASSIFY_TABLE)
def test_classifier_table(name, params, verdict):
    cls = classify_activation(get_activation(name, params), 1, 1, PROF)
    assert cls.verdict == verdict


def test_classifier_witness_present_for_universal():
    cls = classify_activation(get_activation("cardioid"), 1, 1, PROF)
    assert cls.witness_point is not None
    assert abs(np.imag(cls.witness_point)) < 1e-12 and np.real(cls.witness_point) > 0


def test_classifier_heuristic_without_flags():
    # a holomorphic function with no analytic flags: the grid heuristic fires
    spec = custom_activation("cosh", np.cosh)
    cls = classify_activation(spec, 1, 1, PROF)
    assert cls.verdict == "NonUniversalHolomorphic"
    assert "heuristic" in cls.evidence


def test_classifier_scale_invariance():
    for name, params, verdict in CLASSIFY_TABLE:
        spec = get_activation(name, params)
        for c in (2.0, 1j, 1 - 2j):
            scaled = scale_activation(spec, c)
            assert classify_activation(scaled, 1, 1, PROF).verdict == verdict


def test_numeric_matches_analytic_within_error_estimate(rng):
    # every catalog member with closed forms, 100 random probe points total
    names = [("cardioid", {}), ("re_square", {}), ("abs_square", {}),
             ("z_plus_zbar_sq", {}), ("exp_re", {}), ("tanh_re", {}),
             ("exp", {}), ("modrelu", {"b": -1})]
    checked = 0
    for name, params in names:
        spec = get_activation(name, params)
        pts = random_points(rng, 20, 1)[:, 0]
        for z0 in pts:
            if spec.is_excluded(z0) or (name == "cardioid" and abs(z0) < 0.3):
                continue
            if name == "modrelu" and abs(abs(z0) - 1) < 0.1:
                continue
            d_a, dbar_a = spec.analytic_first(complex(z0))
            d_n, dbar_n, est = wirt_first(spec, z0, PROF)
            tol = 10 * max(est, 1e-12)
            assert abs(d_a - d_n) < tol, (name, z0)
            assert abs(dbar_a - dbar_n) < tol, (name, z0)
            checked += 1
    assert checked >= 100


def test_conjugation_symmetry(rng):
    # d(conj o f)(z0) == conj(dbar f(z0)) and vice versa
    for name in ("cardioid", "exp_re", "z_plus_zbar_sq"):
        spec = get_activation(name)
        conj_spec = custom_activation("c", lambda z, s=spec: np.conj(s.fn(z)))
        for z0 in random_points(rng, 5, 1)[:, 0]:
            if spec.is_excluded(z0) or abs(z0) < 0.3:
                continue
            d, dbar, est = wirt_first(spec, z0, PROF)
            dc, dbarc, _ = wirt_first(conj_spec, z0, PROF)
            tol = 10 * max(est, 1e-12) + 1e-9
            assert abs(dc - np.conj(dbar)) < tol
            assert abs(dbarc - np.conj(d)) < tol


def test_classification_requires_witness_for_universal():
    with pytest.raises(ValueError):
        Classification("UniversalPoly_NMplus4", None, "x")
    with pytest.raises(ValueError):
        Classification("NotAVerdict", None, "x")


def test_classification_json_shape():
    cls = classify_activation(get_activation("cardioid"), 1, 1, PROF)
    doc = cls.to_json_dict(PROF)
    assert doc["verdict"] == "UniversalNonPoly_NMplus1"
    assert isinstance(doc["witness"], list) and len(doc["witness"]) == 2
    assert doc["probes"] and "tolerances" in doc
