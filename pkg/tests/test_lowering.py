import numpy as np
import pytest

from deepnarrow.activations import get_activation
from deepnarrow.core import eval_cvnn, hidden_widths, width_of
from deepnarrow.errors import StrategyMismatch
from deepnarrow.lowering import (STRATEGIES, assemble_pieces, default_strategy,
                                 eval_pieces, lower, lower_pieces,
                                 strategy_width_budget)
from deepnarrow.register import (PolyZZbar, eval_register, poly_to_register,
                                 shallow_to_register)
from deepnarrow.verifier import mul_kind_for, sup_error
from deepnarrow.wirtinger import ToleranceProfile, classify_activation
from deepnarrow.core import CompactBox, GridSpec

from conftest import random_points, random_shallow

PROF = ToleranceProfile()

CARD = get_activation("cardioid")
CONJ_CARD = get_activation("conj:cardioid")
MODRELU = get_activation("modrelu", {"b": -1})
RE_SQ = get_activation("re_square")
ABS_SQ = get_activation("abs_square")
ZB = get_activation("z_plus_zbar_sq")
CONJ_ZB = get_activation("conj:z_plus_zbar_sq")


def _test_poly(n, m):
    """Representative polynomial components: a conjugated cross term plus a
    plain square, one per output."""
    comps = []
    for j in range(m):
        terms = [(1 + 0j, tuple(1 if i == 0 else 0 for i in range(n)),
                  tuple(1 if i == min(1, n - 1) and n > 1 else 0 for i in range(n))),
                 (0.5 - 0.25j, tuple(0 for _ in range(n)),
                  tuple(2 if i == j % n else 0 for i in range(n)))]
        comps.append(PolyZZbar(n, tuple(terms)))
    return comps


STRATEGY_ACTIVATIONS = {
    "NonPoly_NMplus1": CARD,
    "NonPoly_Conj_NMplus1": CONJ_CARD,
    "NonPoly_2N2Mplus1": MODRELU,
    "Poly_Wide_2N2Mplus12": RE_SQ,
    "Poly_Narrow_2N2Mplus5": RE_SQ,
    "Poly_NMplus4": ZB,
}


@pytest.mark.parametrize("strategy", STRATEGIES)
@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_width_budgets_hard(rng, strategy, n, m):
    spec = STRATEGY_ACTIVATIONS[strategy]
    if strategy.startswith("NonPoly"):
        net = random_shallow(rng, n, m, 4, spec.activation_id)
        program = shallow_to_register(net)
    else:
        kind = mul_kind_for(spec, PROF)
        program = poly_to_register(_test_poly(n, m), kind)
    info = {}
    lowered = lower(program, spec, strategy, 1e-3, PROF, info=info)
    budget = strategy_width_budget(strategy, n, m)
    assert width_of(lowered) <= budget
    assert info["width"] <= budget


def test_nonpoly_nmplus1_converges_to_program(rng):
    net = random_shallow(rng, 2, 1, 4, CARD.activation_id)
    program = shallow_to_register(net)
    box = CompactBox.square(2, 1.0)
    grid = GridSpec(4)
    ref = lambda zs: eval_register(program, zs, CARD.fn)
    errs = []
    for h in (1e-3, 1e-4, 1e-5, 1e-6):
        low = lower(program, CARD, "NonPoly_NMplus1", h, PROF)
        errs.append(sup_error(ref, lambda zs: eval_cvnn(low, zs, CARD.fn), box, grid))
    assert errs[0] > errs[1] > errs[2] > errs[3]
    assert errs[3] < 1e-3


def test_nonpoly_2n2m_converges(rng):
    net = random_shallow(rng, 1, 1, 4, MODRELU.activation_id)
    program = shallow_to_register(net)
    box = CompactBox.square(1, 1.0)
    ref = lambda zs: eval_register(program, zs, MODRELU.fn)
    errs = []
    for h in (1e-3, 1e-5):
        low = lower(program, MODRELU, "NonPoly_2N2Mplus1", h, PROF)
        errs.append(sup_error(ref, lambda zs: eval_cvnn(low, zs, MODRELU.fn),
                              box, GridSpec(9)))
    assert errs[1] < errs[0] and errs[1] < 1e-3


def test_nonpoly_conj_strategy(rng):
    # activation conj(cardioid) has a lone-dbar point; the program is fitted
    # with sigma = cardioid and realized with conjugation-block layers
    net = random_shallow(rng, 1, 2, 3, CARD.activation_id)
    program = shallow_to_register(net)
    box = CompactBox.square(1, 1.0)
    ref = lambda zs: eval_register(program, zs, CARD.fn)
    errs = []
    for h in (1e-3, 1e-5):
        low = lower(program, CONJ_CARD, "NonPoly_Conj_NMplus1", h, PROF)
        assert width_of(low) <= 4
        errs.append(sup_error(ref, lambda zs: eval_cvnn(low, zs, CONJ_CARD.fn),
                              box, GridSpec(9)))
    assert errs[1] < errs[0] and errs[1] < 1e-3


@pytest.mark.parametrize("strategy,spec,hs,tol", [
    ("Poly_Wide_2N2Mplus12", ABS_SQ, (1e-2, 1e-4), 1e-3),
    ("Poly_Narrow_2N2Mplus5", RE_SQ, (1e-3, 1e-5), 1e-3),
    ("Poly_NMplus4", ZB, (1e-3, 1e-5), 1e-2),
    ("Poly_NMplus4", CONJ_ZB, (1e-3, 1e-5), 1e-2),
])
def test_poly_strategies_converge(strategy, spec, hs, tol):
    kind = mul_kind_for(spec if spec is not CONJ_ZB else ZB, PROF)
    p = PolyZZbar(1, ((1 + 0j, (1,), (0,)), (1 + 0j, (0,), (2,))))
    program = poly_to_register([p], kind)
    box = CompactBox.square(1, 1.0)
    ref = lambda zs: p(zs)[:, None]
    errs = []
    for h in hs:
        low = lower(program, spec, strategy, h, PROF)
        errs.append(sup_error(ref, lambda zs: eval_cvnn(low, zs, spec.fn),
                              box, GridSpec(11)))
    assert errs[-1] < errs[0]
    assert errs[-1] < tol


def test_lower_family_mismatch(rng):
    net = random_shallow(rng, 1, 1, 3, CARD.activation_id)
    program = shallow_to_register(net)
    with pytest.raises(StrategyMismatch):
        lower(program, RE_SQ, "Poly_Narrow_2N2Mplus5", 1e-3, PROF)
    p = poly_to_register([PolyZZbar(1, ((1, (1,), (0,)),))], "mul2")
    with pytest.raises(StrategyMismatch):
        lower(p, CARD, "NonPoly_NMplus1", 1e-3, PROF)
    with pytest.raises(StrategyMismatch):
        lower(p, CARD, "NoSuchStrategy", 1e-3, PROF)


def test_lower_mul_kind_mismatch():
    # re_square affords mul2; a program planned for mul1 must be refused
    p = poly_to_register([PolyZZbar(1, ((1, (2,), (0,)),))], "mul1")
    with pytest.raises(StrategyMismatch):
        lower(p, RE_SQ, "Poly_Narrow_2N2Mplus5", 1e-3, PROF)


def test_lower_precondition_mismatch(rng):
    net = random_shallow(rng, 1, 1, 3, MODRELU.activation_id)
    program = shallow_to_register(net)
    # modrelu has no lone-derivative point: the width-(n+m+1) route must refuse
    with pytest.raises(StrategyMismatch):
        lower(program, MODRELU, "NonPoly_NMplus1", 1e-3, PROF)


def test_fusion_invariance(rng):
    # evaluating the unfused affine/stage chain equals the fused network
    net = random_shallow(rng, 2, 1, 3, CARD.activation_id)
    program = shallow_to_register(net)
    pieces, _ = lower_pieces(program, CARD, "NonPoly_NMplus1", 1e-4, PROF)
    fused = assemble_pieces(pieces, CARD.activation_id)
    zs = random_points(rng, 60, 2)
    a = eval_pieces(pieces, CARD, zs)
    b = eval_cvnn(fused, zs, CARD.fn)
    assert np.max(np.abs(a - b)) < 1e-12 * (1 + np.max(np.abs(a)))

    p = PolyZZbar(1, ((1 + 0j, (0,), (2,)),))
    program = poly_to_register([p], "mul2")
    pieces, _ = lower_pieces(program, RE_SQ, "Poly_Narrow_2N2Mplus5", 1e-2, PROF)
    fused = assemble_pieces(pieces, RE_SQ.activation_id)
    zs = random_points(rng, 60, 1, scale=0.5)
    a = eval_pieces(pieces, RE_SQ, zs)
    b = eval_cvnn(fused, zs, RE_SQ.fn)
    # agreement is float-exact relative to the chain conditioning (the
    # unfused chain reorders sums whose terms scale like the post coefficients)
    kappa = max(float(np.max(np.abs(obj.post.matrix))) for kind, obj in pieces
                if kind == "stage")
    assert np.max(np.abs(a - b)) < 1e-12 * kappa * (1 + np.max(np.abs(a)))


def test_depth_reported_not_bounded():
    p = PolyZZbar(1, ((1 + 0j, (0,), (2,)),))
    program = poly_to_register([p], "mul2")
    info = {}
    lower(program, RE_SQ, "Poly_Narrow_2N2Mplus5", 1e-3, PROF, info=info)
    assert info["depth"] > 10  # each product expands into inner layers
    assert info["max_post_coeff"] > 1


def test_hidden_widths_within_budget_per_layer():
    p = PolyZZbar(1, ((1 + 0j, (1,), (0,)), (1 + 0j, (0,), (2,))))
    program = poly_to_register([p], "mul2")
    low = lower(program, RE_SQ, "Poly_Narrow_2N2Mplus5", 1e-4, PROF)
    assert max(hidden_widths(low)) <= strategy_width_budget("Poly_Narrow_2N2Mplus5", 1, 1)


def test_h_map_overrides():
    p = PolyZZbar(1, ((1 + 0j, (0,), (2,)),))
    program = poly_to_register([p], "mul2")
    low = lower(program, RE_SQ, "Poly_Narrow_2N2Mplus5", 1e-4, PROF,
                h_map={"square": 0.5})
    box = CompactBox.square(1, 1.0)
    err = sup_error(lambda zs: p(zs)[:, None],
                    lambda zs: eval_cvnn(low, zs, RE_SQ.fn), box, GridSpec(9))
    assert err < 1e-2  # square blocks are exact for quadratic activations


def test_default_strategy_mapping():
    cls = classify_activation(CARD, 1, 1, PROF)
    assert default_strategy(cls.verdict, cls.witness_probe, PROF) == "NonPoly_NMplus1"
    cls = classify_activation(CONJ_CARD, 1, 1, PROF)
    assert default_strategy(cls.verdict, cls.witness_probe, PROF) == "NonPoly_Conj_NMplus1"
    cls = classify_activation(MODRELU, 1, 1, PROF)
    assert default_strategy(cls.verdict, cls.witness_probe, PROF) == "NonPoly_2N2Mplus1"
    cls = classify_activation(RE_SQ, 1, 1, PROF)
    assert default_strategy(cls.verdict, cls.witness_probe, PROF) == "Poly_Narrow_2N2Mplus5"
    cls = classify_activation(ZB, 1, 1, PROF)
    assert default_strategy(cls.verdict, cls.witness_probe, PROF) == "Poly_NMplus4"
    with pytest.raises(StrategyMismatch):
        default_strategy("NonUniversalHolomorphic", None, PROF)
