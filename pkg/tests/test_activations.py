import numpy as np
import pytest

from deepnarrow.activations import (available_activations, conjugate_activation,
                                    eval_activation, get_activation,
                                    scale_activation)
from deepnarrow.errors import InvalidActivationParams, UnknownActivation
from deepnarrow.wirtinger import ToleranceProfile, taylor_remainder_probe, wirt_first

from conftest import random_points


def test_cardioid_values():
    card = get_activation("cardioid")
    assert eval_activation(card, 1.0) == 1.0
    # RE(i) = 0, so the factor is 1/2
    assert eval_activation(card, 1j) == 0.5j
    assert eval_activation(card, 0.0) == 0.0


def test_modrelu_values():
    mr = get_activation("modrelu", {"b": -1})
    assert eval_activation(mr, 2.0) == pytest.approx(1.0)
    assert eval_activation(mr, 0.5) == 0.0
    assert eval_activation(mr, 1.0) == 0.0  # continuous limit on the circle


def test_modrelu_requires_negative_b():
    with pytest.raises(InvalidActivationParams):
        get_activation("modrelu", {"b": 0.5})


def test_exp_re_value():
    spec = get_activation("exp_re")
    assert eval_activation(spec, 1 + 5j) == pytest.approx(np.e)


def test_r_affine_value():
    spec = get_activation("r_affine", {"a": 2, "b": 1, "c": 1})
    assert eval_activation(spec, 1j) == pytest.approx(1 + 1j)  # 2i - i + 1


def test_unknown_name():
    with pytest.raises(UnknownActivation):
        get_activation("swish")


def test_available_listing():
    names = available_activations()
    assert "cardioid" in names and "modrelu" in names and "nowhere_diff" in names


@pytest.mark.parametrize("name,params", [
    ("modrelu", {"b": -1}),
    ("cardioid", {}),
    ("exp", {}),
    ("antiholo_exp", {}),
    ("r_affine", {"a": 2, "b": 1, "c": 1}),
    ("re_square", {}),
    ("z_plus_zbar_sq", {}),
    ("abs_square", {}),
    ("exp_re", {}),
    ("tanh_re", {}),
    ("nowhere_diff", {"ktrunc": 8}),
])
def test_continuity_probe(name, params, rng):
    # |f(z') - f(z)| -> 0 along random sequences z' -> z, including across
    # the modrelu circle
    spec = get_activation(name, params)
    anchors = random_points(rng, 10, 1)[:, 0]
    if name == "modrelu":
        anchors = np.concatenate([anchors, [1.0 + 0j, 1j]])  # points on |z| = -b
    for z in anchors:
        deltas = random_points(rng, 12, 1)[:, 0]
        deltas /= np.abs(deltas)
        gaps = []
        for k in range(1, 9):
            step = 10.0 ** (-k)
            vals = spec.fn(z + step * deltas)
            gaps.append(np.max(np.abs(vals - spec.fn(np.array([z]))[0])))
        # continuity, not Lipschitz: the truncated rough member still has a
        # finite (large) modulus, so the bound is relative to the first gap
        assert gaps[-1] <= max(1e-6, 1e-2 * gaps[0])
        assert gaps[-1] <= gaps[0] + 1e-12


def test_cardioid_analytic_first_matches_numeric(rng):
    card = get_activation("cardioid")
    prof = ToleranceProfile()
    pts = random_points(rng, 25, 1)[:, 0]
    pts = pts[np.abs(pts) > 0.3]
    for z0 in pts:
        d_a, dbar_a = card.analytic_first(complex(z0))
        d_n, dbar_n, _ = wirt_first(card, z0, prof)
        assert abs(d_a - d_n) < 1e-5
        assert abs(dbar_a - dbar_n) < 1e-5


def test_nowhere_diff_fails_taylor_probe(rng):
    # documented heuristic at finite truncation: probe radii sit far above the
    # truncation scale b^-ktrunc
    spec = get_activation("nowhere_diff", {"ktrunc": 20})
    prof = ToleranceProfile()
    pts = random_points(rng, 20, 1)[:, 0]
    failures = sum(not taylor_remainder_probe(spec, z0, 1, prof).passed for z0 in pts)
    assert failures == 20


def test_conjugate_combinator_swaps_flags_and_derivatives():
    card = get_activation("cardioid")
    cc = conjugate_activation(card)
    assert cc.name == "conj:cardioid"
    z = 1.3 + 0.4j
    assert eval_activation(cc, z) == np.conj(eval_activation(card, z))
    d, dbar = card.analytic_first(z)
    dc, dbarc = cc.analytic_first(z)
    assert dc == np.conj(dbar) and dbarc == np.conj(d)
    holo = get_activation("exp")
    assert "antiholomorphic" in conjugate_activation(holo).class_flags


def test_conj_prefix_resolves_through_catalog():
    cc = get_activation("conj:modrelu", {"b": -1})
    assert eval_activation(cc, 2.0) == pytest.approx(1.0)
    assert cc.poly_flag is not None and not cc.poly_flag.is_polyharmonic


def test_scale_combinator():
    rs = get_activation("re_square")
    sc = scale_activation(rs, 2 - 1j)
    z = 0.7 + 0.2j
    assert eval_activation(sc, z) == pytest.approx((2 - 1j) * eval_activation(rs, z))
    assert sc.poly_flag == rs.poly_flag
    d, dbar = rs.analytic_first(z)
    ds, dbars = sc.analytic_first(z)
    assert ds == pytest.approx((2 - 1j) * d)
    with pytest.raises(InvalidActivationParams):
        scale_activation(rs, 0)
