import numpy as np
import pytest

from deepnarrow.activations import get_activation
from deepnarrow.core import CompactBox, GridSpec, eval_cvnn, width_of
from deepnarrow.fitting import FitConfig
from deepnarrow.register import PolyZZbar, eval_register
from deepnarrow.verifier import (DEFAULT_SWEEP_SCHEDULE, SweepReport, SweepRow,
                                 affine_closure_demo, affine_subspace_floor_demo,
                                 ball_volume, end_to_end_nonpoly, end_to_end_poly,
                                 fit_deep_random, h_sweep, kernel_invariance_demo,
                                 l1_error_mc, mul_kind_for, named_target,
                                 nowhere_diff_demo, sup_error)
from deepnarrow.blocks import identity_block, square_block
from deepnarrow.wirtinger import ToleranceProfile

PROF = ToleranceProfile()
BOX = CompactBox.square(1, 1.0)


def test_sup_error_identical_functions():
    f = lambda zs: zs
    assert sup_error(f, f, BOX, GridSpec(5)) == 0.0


def test_sup_error_constant_offset():
    f = lambda zs: zs
    g = lambda zs: zs + 0.1
    assert sup_error(f, g, BOX, GridSpec(5)) == pytest.approx(0.1)


def test_l1_error_mc_ball_volume_oracle():
    # indicator of the radius-0.1 ball in C^2 (= R^4): closed-form volume
    # pi^2 r^4 / 2, Monte Carlo within 5% at 1e6 samples
    f = lambda zs: (np.linalg.norm(zs, axis=1) <= 0.1).astype(complex)
    g = lambda zs: np.zeros(zs.shape[0], complex)
    box = CompactBox.square(2, 0.2)
    est = l1_error_mc(f, g, box, 1_000_000, seed=3)
    want = ball_volume(0.1, 4)
    assert want == pytest.approx(np.pi**2 * 0.1**4 / 2)
    assert abs(est.value - want) / want < 0.05
    assert abs(est.value - want) < 4 * est.stderr


def test_l1_error_mc_deterministic():
    f = lambda zs: zs[:, 0]
    g = lambda zs: np.zeros(zs.shape[0], complex)
    a = l1_error_mc(f, g, BOX, 1000, seed=5)
    b = l1_error_mc(f, g, BOX, 1000, seed=5)
    assert a == b


def test_h_sweep_identity_block_decreasing():
    card = get_activation("cardioid")
    report = h_sweep(
        lambda h: identity_block(card, 1.0, h, PROF).to_cvnn(card),
        DEFAULT_SWEEP_SCHEDULE, BOX, GridSpec(9),
        lambda zs: zs, card, metadata={"case": "identity-card"})
    errs = [r.sup_error for r in report.rows]
    for cur, nxt in zip(errs, errs[1:]):
        if cur < 1e-9:
            break
        assert nxt < cur
    assert report.best_row().sup_error < 1e-6


def test_h_sweep_square_block_exact_every_h():
    rs = get_activation("re_square")
    report = h_sweep(
        lambda h: square_block(rs, 0.0, h, PROF)[0].to_cvnn(rs),
        (1e-1, 1e-2, 1e-3), BOX, GridSpec(9),
        lambda zs: zs * np.conj(zs), rs)
    assert all(r.sup_error < 1e-10 for r in report.rows)


def test_h_sweep_square_block_smooth_nonquadratic_rate():
    # selection resolves the kind first (exp_re has all three second
    # derivatives nonzero, the mixed one wins); then error(h/2) <= 0.75 error(h)
    spec = get_activation("exp_re")
    blk, which = square_block(spec, 0.0, 0.05, PROF)
    assert which == "zzbar"
    hs = [1e-1 * 2.0**-k for k in range(6)]
    report = h_sweep(
        lambda h: square_block(spec, 0.0, h, PROF)[0].to_cvnn(spec),
        hs, BOX, GridSpec(9), lambda zs: zs * np.conj(zs), spec)
    errs = [r.sup_error for r in report.rows]
    for cur, nxt in zip(errs, errs[1:]):
        if cur < 1e-9:
            break
        assert nxt <= 0.75 * cur


def test_sweep_report_csv_schema():
    report = SweepReport([SweepRow(0.1, 0.5, 10.0, 4, 3)], {"activation": "x"})
    text = report.to_csv(timestamp=False)
    lines = text.strip().split("\n")
    assert lines[0] == "# activation=x"
    assert lines[1] == "h,sup_error,max_post_coeff,depth,width"
    assert lines[2] == "0.1,0.5,10.0,4,3"
    stamped = report.to_csv(timestamp=True)
    assert stamped.startswith("# generated=")


def test_end_to_end_poly_re_square_narrow():
    rs = get_activation("re_square")
    p = PolyZZbar(1, ((1 + 0j, (1,), (0,)), (1 + 0j, (0,), (2,))))
    f = lambda zs: p(zs)[:, None]
    net, report = end_to_end_poly(f, rs, 1, 1, 2, "Poly_Narrow_2N2Mplus5", BOX,
                                  fit_grid=GridSpec(9), prof=PROF)
    assert width_of(net) <= 9
    assert report.best_row().sup_error < 1e-2
    assert report.metadata["mul_kind"] == "mul2"
    # target in the basis: the polynomial stage is exact, all error is lowering
    assert report.extras["fit_sup_error"] < 1e-10


def test_end_to_end_poly_z_in_basis_any_poly_strategy():
    rs = get_activation("re_square")
    f = lambda zs: zs[:, :1]
    net, report = end_to_end_poly(f, rs, 1, 1, 1, "Poly_Wide_2N2Mplus12", BOX,
                                  fit_grid=GridSpec(9), prof=PROF)
    assert report.best_row().sup_error < 1e-3


def test_end_to_end_poly_bivariate_width():
    ab = get_activation("abs_square")
    f = lambda zs: (zs[:, 0] * np.conj(zs[:, 1]))[:, None]
    box2 = CompactBox.square(2, 1.0)
    net, report = end_to_end_poly(f, ab, 2, 1, 2, "Poly_Narrow_2N2Mplus5", box2,
                                  fit_grid=GridSpec(4), prof=PROF)
    assert width_of(net) <= 2 * 2 + 2 * 1 + 5
    assert report.best_row().sup_error < 1e-2


def test_end_to_end_nonpoly_cardioid():
    card = get_activation("cardioid")
    fn, _ = named_target("zzbar")
    cfg = FitConfig(num_features=300, weight_scale=1.0, ridge=1e-6,
                    grid=GridSpec(21), seed=0)
    net, report = end_to_end_nonpoly(fn, card, 1, 1, cfg, "NonPoly_NMplus1", BOX)
    assert width_of(net) <= 3
    best = report.best_row()
    assert best.sup_error <= report.extras["fit_sup_error"] + 1e-2


def test_end_to_end_nonpoly_modrelu_width():
    mr = get_activation("modrelu", {"b": -1})
    fn, _ = named_target("zzbar")
    cfg = FitConfig(num_features=100, weight_scale=1.0, ridge=1e-6,
                    grid=GridSpec(15), seed=0)
    net, report = end_to_end_nonpoly(fn, mr, 1, 1, cfg, "NonPoly_2N2Mplus1", BOX)
    assert width_of(net) <= 5
    assert report.best_row().sup_error <= report.extras["fit_sup_error"] + 1e-2


def test_composition_slack_triangle_inequality():
    # measured total <= ideal-stage error + measured lowering error + 1e-9,
    # all on the same verification grid
    card = get_activation("cardioid")
    fn, _ = named_target("zzbar")
    cfg = FitConfig(num_features=80, weight_scale=1.0, ridge=1e-6,
                    grid=GridSpec(15), seed=1)
    net, report = end_to_end_nonpoly(fn, card, 1, 1, cfg, "NonPoly_NMplus1", BOX)
    program = report.extras["program"]
    eval_grid = GridSpec(30)
    best = report.best_row()
    lowering_err = sup_error(lambda zs: eval_register(program, zs, card.fn),
                             lambda zs: eval_cvnn(net, zs, card.fn), BOX, eval_grid)
    fit_err_fine = report.extras["fit_sup_error_fine"]
    assert best.sup_error <= fit_err_fine + lowering_err + 1e-9


def test_verification_grid_finer_than_fit_grid():
    card = get_activation("cardioid")
    fn, _ = named_target("zzbar")
    cfg = FitConfig(num_features=40, grid=GridSpec(9), seed=0)
    _, report = end_to_end_nonpoly(fn, card, 1, 1, cfg, "NonPoly_NMplus1", BOX,
                                   schedule=(1e-4,))
    # the report's errors are measured on 2x the fit grid per axis
    assert report.extras["fit_sup_error_fine"] >= 0.0
    assert report.metadata["features"] == 40


def test_kernel_invariance_demo_width_2n_minus_1():
    spec = get_activation("tanh_re")
    rep = kernel_invariance_demo(spec, 2, seed=0, mc_samples=50_000)
    assert rep.nullspace_found
    assert rep.invariance_residual < 1e-9
    assert rep.l1_threshold == pytest.approx(0.8 * np.pi**2 * 0.1**4 / 2)
    assert rep.l1_estimate.value >= rep.l1_threshold - 3 * rep.l1_estimate.stderr
    assert rep.passed


def test_kernel_invariance_demo_full_width_not_applicable():
    spec = get_activation("tanh_re")
    rep = kernel_invariance_demo(spec, 2, width=4, seed=0, mc_samples=1000)
    assert not rep.nullspace_found
    assert "full rank" in rep.note


def test_affine_subspace_floor_demo():
    rep = affine_subspace_floor_demo(seeds=(0, 1, 2))
    assert rep.vertex_floor >= 0.5 - 2e-2
    assert rep.degenerate_floor < 1e-2
    assert all(err >= 0.45 for err in rep.net_errors)
    assert rep.passed


def test_affine_closure_demo():
    rep = affine_closure_demo()
    assert rep.affinity_residual < 1e-9
    assert rep.passed


def test_fit_deep_random_deterministic():
    spec = get_activation("exp")
    fn, m = named_target("zbar")
    cfg = FitConfig(num_features=16, weight_scale=0.5, ridge=1e-8, box=BOX,
                    grid=GridSpec(9), seed=0)
    _, e1 = fit_deep_random(fn, spec, 1, m, 16, 3, cfg)
    _, e2 = fit_deep_random(fn, spec, 1, m, 16, 3, cfg)
    assert e1 == e2


def test_nowhere_diff_demo():
    rep = nowhere_diff_demo()
    assert rep.passed
    h, k, err = rep.best
    assert err < 1e-2 and k <= 50
    assert h in DEFAULT_SWEEP_SCHEDULE


def test_mul_kind_for():
    assert mul_kind_for(get_activation("re_square"), PROF) == "mul2"
    assert mul_kind_for(get_activation("z_plus_zbar_sq"), PROF) == "mul3"
