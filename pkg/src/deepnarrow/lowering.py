"""Lowering register programs to strict narrow networks.

Every program layer becomes one or more hidden layers in which each register
slot crosses through a small building block and the single compute slot does
real work.  The width budgets, for input dimension n and output dimension m:

  NonPoly_NMplus1        n+m+1      registers via width-1 identity blocks,
                                     compute slot applies the raw activation
  NonPoly_Conj_NMplus1   n+m+1      the same structure written against
                                     sigma = conj o act; every sigma layer is
                                     realized as an act layer followed by a
                                     width-preserving conjugation-block layer
  NonPoly_2N2Mplus1      2n+2m+1    registers via 2-neuron pair blocks
                                     (first output), compute raw
  Poly_Wide_2N2Mplus12   2n+2m+12   input pairs (z, conj z) via 2-neuron
                                     blocks, multiplication block inline
  Poly_Narrow_2N2Mplus5  2n+2m+5    the multiplication block is first
                                     rewritten as a width-4 inner register
                                     program (its duplicated in-register is
                                     dropped), then id/conj slots are realized
                                     by 2-neuron blocks
  Poly_NMplus4           n+m+4      width-1 identity blocks everywhere plus a
                                     single conjugation register refreshed on
                                     demand by one 2-neuron pair block

Adjacent affine maps are always fused, keeping the strict alternating form.
Each strategy checks its derivative preconditions against probe data and
raises StrategyMismatch when they fail.  Width bounds are asserted on the
result, with zero tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .activations import ActivationSpec, conjugate_activation
from .blocks import (ShallowBlock, identity_block, id_conj_pair_block,
                     mul_block, pair_block)
from .core import ComplexAffineMap, Cvnn, eval_affine, fuse_affine, width_of
from .errors import StrategyMismatch
from .register import FlushLayer, MulLayer, RegisterProgram, RhoLayer
from .wirtinger import ToleranceProfile, find_nonzero_second_point, first_derivs
from .wirtinger import _probe_candidates

__all__ = [
    "STRATEGIES",
    "strategy_width_budget",
    "lower",
    "lower_pieces",
    "assemble_pieces",
    "eval_pieces",
    "default_strategy",
]

STRATEGIES = (
    "NonPoly_NMplus1",
    "NonPoly_Conj_NMplus1",
    "NonPoly_2N2Mplus1",
    "Poly_Wide_2N2Mplus12",
    "Poly_Narrow_2N2Mplus5",
    "Poly_NMplus4",
)

_BUDGETS = {
    "NonPoly_NMplus1": lambda n, m: n + m + 1,
    "NonPoly_Conj_NMplus1": lambda n, m: n + m + 1,
    "NonPoly_2N2Mplus1": lambda n, m: 2 * n + 2 * m + 1,
    "Poly_Wide_2N2Mplus12": lambda n, m: 2 * n + 2 * m + 12,
    "Poly_Narrow_2N2Mplus5": lambda n, m: 2 * n + 2 * m + 5,
    "Poly_NMplus4": lambda n, m: n + m + 4,
}

_SQUARE_TO_MUL = {"zzbar": "mul2", "z2": "mul1", "zbar2": "mul3"}


def strategy_width_budget(strategy: str, n: int, m: int) -> int:
    return _BUDGETS[strategy](n, m)


# ---------------------------------------------------------------------------
# Stage machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stage:
    """One hidden layer: pre maps state -> neurons, post maps neurons -> state."""

    pre: ComplexAffineMap
    post: ComplexAffineMap


class _StageBuilder:
    """Collects hidden units wired to affine functionals of the state."""

    def __init__(self, in_dim: int):
        self.in_dim = in_dim
        self._rows = []
        self._biases = []

    def slot(self, idx: int):
        w = np.zeros(self.in_dim, dtype=np.complex128)
        w[idx] = 1
        return w, 0j

    def const(self, value: complex):
        return np.zeros(self.in_dim, dtype=np.complex128), complex(value)

    def unit(self, weights, bias) -> int:
        self._rows.append(np.asarray(weights, dtype=np.complex128))
        self._biases.append(complex(bias))
        return len(self._rows) - 1

    def block_units(self, block: ShallowBlock, inputs) -> list:
        """Instantiate a block's neurons on the given input functionals."""
        pre_m, pre_b = block.pre.matrix, block.pre.bias
        idxs = []
        for r in range(pre_m.shape[0]):
            w = np.zeros(self.in_dim, dtype=np.complex128)
            b = pre_b[r]
            for j, (wj, bj) in enumerate(inputs):
                w = w + pre_m[r, j] * wj
                b = b + pre_m[r, j] * bj
            idxs.append(self.unit(w, b))
        return idxs

    @staticmethod
    def block_output(block: ShallowBlock, unit_idxs, out_row: int):
        combo = [(unit_idxs[r], block.post.matrix[out_row, r])
                 for r in range(len(unit_idxs))]
        return combo, complex(block.post.bias[out_row])

    def finish(self, outputs) -> Stage:
        """outputs: list of (combo, bias) with combo = [(unit, coef), ...]."""
        h = len(self._rows)
        pre = ComplexAffineMap(np.vstack(self._rows), np.asarray(self._biases))
        post_m = np.zeros((len(outputs), h), dtype=np.complex128)
        post_b = np.zeros(len(outputs), dtype=np.complex128)
        for o, (combo, bias) in enumerate(outputs):
            for unit, coef in combo:
                post_m[o, unit] += coef
            post_b[o] = bias
        return Stage(pre, ComplexAffineMap(post_m, post_b))


def _affine(rows, biases) -> ComplexAffineMap:
    return ComplexAffineMap(np.asarray(rows, dtype=np.complex128),
                            np.asarray(biases, dtype=np.complex128))


def _identity_rows(dim):
    return np.eye(dim, dtype=np.complex128)


# ---------------------------------------------------------------------------
# Realizers: how a stage written against sigma-neurons becomes actual layers
# ---------------------------------------------------------------------------


def _direct_realizer(stage: Stage) -> list:
    return [stage]


def _make_conj_realizer(spec: ActivationSpec, z0c: complex, hc: float,
                        prof: ToleranceProfile) -> Callable:
    """Each sigma-neuron layer becomes an activation layer followed by one
    conjugation-block layer of the same width (sigma = conj o activation).

    The conjugation block's Taylor remainder at a unit's nominal output y0
    (its value at zero stage input) is a constant; since the consuming sigma
    posts divide by h, that constant would not vanish with h.  It is computed
    exactly from two activation evaluations and folded into the block bias,
    leaving only the O(h)-decaying input-dependent remainder.
    """
    d, dbar, _ = first_derivs(spec, z0c, prof)
    if abs(dbar) <= prof.zero_tol or abs(d) > prof.zero_tol:
        raise StrategyMismatch(
            f"conjugate realization needs a lone-dbar point; at {z0c}: d={d:.3g}, dbar={dbar:.3g}")
    f0 = complex(spec(np.array([z0c]))[0])
    cc = 1.0 / (hc * dbar)

    def realize(stage: Stage) -> list:
        h = stage.pre.out_dim
        eye = _identity_rows(h)
        pass_through = _affine(eye, np.zeros(h))
        y0 = np.asarray(spec(stage.pre.bias), dtype=np.complex128)
        theta0 = (np.asarray(spec(z0c + hc * y0), dtype=np.complex128)
                  - f0 - dbar * np.conj(hc * y0)) * cc
        conj_pre = _affine(hc * eye, np.full(h, z0c, dtype=np.complex128))
        conj_post = _affine(cc * eye, -f0 * cc - theta0)
        return [Stage(stage.pre, pass_through),
                Stage(conj_pre, fuse_affine(stage.post, conj_post))]

    return realize


# ---------------------------------------------------------------------------
# Block kit: templates shared by all slots of one lowering
# ---------------------------------------------------------------------------


@dataclass
class _Kit:
    sigma: ActivationSpec
    prof: ToleranceProfile
    h: float
    realize: Callable
    id_blk: Optional[ShallowBlock] = None     # width-1 identity
    pair_blk: Optional[ShallowBlock] = None   # width-2 (z, conj z)
    mul_blk: Optional[ShallowBlock] = None
    mul_kind: Optional[str] = None

    def id_cross(self, builder: _StageBuilder, inp):
        """Cheapest identity crossing: width-1 block when available, else the
        first output of the 2-neuron pair."""
        if self.id_blk is not None:
            units = builder.block_units(self.id_blk, [inp])
            return builder.block_output(self.id_blk, units, 0)
        units = builder.block_units(self.pair_blk, [inp])
        return builder.block_output(self.pair_blk, units, 0)

    def pair_cross(self, builder: _StageBuilder, inp):
        """(z, conj z) from one plain input; 2 neurons."""
        units = builder.block_units(self.pair_blk, [inp])
        return (builder.block_output(self.pair_blk, units, 0),
                builder.block_output(self.pair_blk, units, 1))


def _healthy_square_point(sigma: ActivationSpec, prof: ToleranceProfile):
    """Square-block point selection for lowering.

    The kind priority matches find_nonzero_second_point, but among points
    whose winning second derivative is within 2x of the best, prefer small
    |f(z0)|, |d|, |dbar|: the inner register expansion carries partial sums
    whose magnitude is driven by exactly those loads.
    """
    from .core import sample_box
    from .wirtinger import second_derivs

    pts = sample_box(prof.probe_box, prof.probe_grid, seed=0)[:, 0]
    rows = []
    for z0 in pts:
        z0 = complex(z0)
        if sigma.is_excluded(z0):
            continue
        try:
            d2, ddbar, dbar2, _ = second_derivs(sigma, z0, prof)
            d, dbar, _ = first_derivs(sigma, z0, prof)
        except Exception:
            continue
        f0 = abs(complex(sigma(np.array([z0]))[0]))
        rows.append((z0, {"ddbar": abs(ddbar), "d2": abs(d2), "dbar2": abs(dbar2)},
                     f0 + abs(d) + abs(dbar)))
    for key in ("ddbar", "d2", "dbar2"):
        vals = [r[1][key] for r in rows]
        if not vals or max(vals) <= prof.zero_tol:
            continue
        best = max(vals)
        shortlist = [r for r in rows if r[1][key] >= 0.5 * best]
        return min(shortlist, key=lambda r: r[2])[0]
    return None


def _scan_points(sigma: ActivationSpec, prof: ToleranceProfile):
    """Best probe points per derivative pattern: (lone-d, lone-dbar, both).

    Within 2x of the best conditioning score, points with small |sigma(z0)|
    are preferred: the activation magnitude at the localization point sets
    the cancellation load of every block built there.
    """
    tol = prof.zero_tol
    lone_d, lone_db, both = [], [], []
    for z0, d, dbar, _ in _probe_candidates(sigma, prof):
        mag = abs(complex(sigma(np.array([z0]))[0]))
        if abs(d) > tol and abs(dbar) <= tol:
            lone_d.append((z0, abs(d), mag))
        elif abs(dbar) > tol and abs(d) <= tol:
            lone_db.append((z0, abs(dbar), mag))
        elif abs(d) > tol and abs(dbar) > tol:
            both.append((z0, min(abs(d), abs(dbar)), mag))

    def pick(lst):
        if not lst:
            return None
        best = max(t[1] for t in lst)
        shortlist = [t for t in lst if t[1] >= 0.5 * best]
        return min(shortlist, key=lambda t: t[2])[0]

    return pick(lone_d), pick(lone_db), pick(both)


def _h_for(h_map, role, h):
    return h if h_map is None else float(h_map.get(role, h))


def _build_kit(spec: ActivationSpec, strategy: str, h: float,
               prof: ToleranceProfile, h_map=None) -> _Kit:
    needs_sigma = strategy == "NonPoly_Conj_NMplus1"
    lone_d, lone_db, both = _scan_points(spec, prof)

    if strategy == "Poly_NMplus4" and lone_d is None:
        needs_sigma = True
    if needs_sigma:
        if lone_db is None:
            raise StrategyMismatch(
                f"{strategy}: no probe point with lone nonzero dbar for the activation")
        sigma = conjugate_activation(spec)
        realize = _make_conj_realizer(spec, lone_db, _h_for(h_map, "conj", h), prof)
        s_lone_d, s_lone_db, s_both = lone_db, lone_d, both
    else:
        sigma = spec
        realize = _direct_realizer
        s_lone_d, s_lone_db, s_both = lone_d, lone_db, both

    kit = _Kit(sigma=sigma, prof=prof, h=h, realize=realize)

    if strategy in ("NonPoly_NMplus1", "NonPoly_Conj_NMplus1"):
        if s_lone_d is None:
            raise StrategyMismatch(
                f"{strategy}: needs a point with nonzero d and vanishing dbar")
        kit.id_blk = identity_block(sigma, s_lone_d, _h_for(h_map, "id", h), prof)
        return kit

    if strategy == "NonPoly_2N2Mplus1":
        if s_both is None:
            raise StrategyMismatch(
                f"{strategy}: needs a point with both Wirtinger derivatives nonzero")
        kit.pair_blk = pair_block(sigma, s_both, _h_for(h_map, "pair", h), prof)
        return kit

    # Polynomial strategies need the multiplication block.  The serialized
    # variants (Narrow, NMplus4) cross the running accumulator through
    # first-order blocks whose per-layer drift is O(h); pairing that drift
    # with the square block's h^-2 post-scale would leave an h-independent
    # error floor, so the square scale is slaved to sqrt(h) there (the proof
    # fixes the multiplication approximant first and shrinks the identity
    # blocks afterwards; sqrt coupling keeps the sweep one-dimensional).
    sq = _healthy_square_point(sigma, prof)
    if sq is None:
        raise StrategyMismatch(f"{strategy}: activation is R-affine on the probe grid")
    sq_default = h if strategy == "Poly_Wide_2N2Mplus12" else float(np.sqrt(h))
    kit.mul_blk, kit.mul_kind = mul_block(sigma, sq, _h_for(h_map, "square", sq_default), prof)

    if strategy == "Poly_NMplus4":
        if s_lone_d is None:
            raise StrategyMismatch(
                f"{strategy}: needs a point with exactly one nonzero first derivative")
        kit.id_blk = identity_block(sigma, s_lone_d, _h_for(h_map, "id", h), prof)
        kit.pair_blk = id_conj_pair_block(sigma, prof, _h_for(h_map, "pair", h))
        return kit

    # Wide / Narrow: registers via the routed (z, conj z) block
    kit.pair_blk = id_conj_pair_block(sigma, prof, _h_for(h_map, "pair", h))
    return kit


# ---------------------------------------------------------------------------
# Strategy bodies
# ---------------------------------------------------------------------------


def _emit(pieces: list, kit: _Kit, stage: Stage):
    for realized in kit.realize(stage):
        pieces.append(("stage", realized))


def _emit_affine(pieces: list, amap: ComplexAffineMap):
    pieces.append(("affine", amap))


def _lower_shallow(program: RegisterProgram, kit: _Kit, wide: bool) -> list:
    n, m = program.input_dim, program.output_dim
    s = n + m + 1
    iu = n
    a0, b0 = program.init_load
    init = np.zeros((s, n), dtype=np.complex128)
    init[:n, :] = _identity_rows(n)
    init[iu, :] = np.asarray(a0)
    init_b = np.zeros(s, dtype=np.complex128)
    init_b[iu] = b0
    pieces = []
    _emit_affine(pieces, _affine(init, init_b))

    for lay in program.layers:
        builder = _StageBuilder(s)
        outputs = []
        for i in range(n):
            inp = builder.slot(i)
            outputs.append(kit.pair_cross(builder, inp)[0] if wide
                           else kit.id_cross(builder, inp))
        raw = builder.unit(*builder.slot(iu))
        outputs.append(([(raw, 1.0)], 0j))
        for j in range(m):
            inp = builder.slot(n + 1 + j)
            outputs.append(kit.pair_cross(builder, inp)[0] if wide
                           else kit.id_cross(builder, inp))
        _emit(pieces, kit, builder.finish(outputs))

        trans = np.zeros((s, s), dtype=np.complex128)
        trans_b = np.zeros(s, dtype=np.complex128)
        for i in range(n):
            trans[i, i] = 1
        if lay.reload is not None:
            a, b = lay.reload
            trans[iu, :n] = np.asarray(a)
            trans_b[iu] = b
        for j in range(m):
            trans[n + 1 + j, n + 1 + j] = 1
            trans[n + 1 + j, iu] = lay.flush[j]
        _emit_affine(pieces, _affine(trans, trans_b))

    end = np.zeros((m, s), dtype=np.complex128)
    for j in range(m):
        end[j, n + 1 + j] = 1
    _emit_affine(pieces, _affine(end, np.asarray(program.end_bias)))
    return pieces


@dataclass
class _InnerLadder:
    """Inner register view of the multiplication block.

    Neuron k has preactivation row rows[k] over (x1, x2) plus bias, output
    weight coeffs[k], and the block output is sum_k coeffs[k] y_k + bias0.
    The running accumulator is kept rescaled by lam and with the constant
    sigma(z0) load subtracted per step, so that the values crossing the
    identity blocks stay O(1) even though coeffs scale like h^-2; the exact
    affine compensation happens on exit.
    """

    rows: np.ndarray
    biases: np.ndarray
    coeffs: np.ndarray
    bias0: complex
    rho0: complex
    lam: float


def _mul_ladder(kit: _Kit) -> _InnerLadder:
    blk = kit.mul_blk
    coeffs = blk.post.matrix[0]
    rho0 = complex(kit.sigma(np.array([blk.pre.bias[0]]))[0])
    lam = 1.0 / max(1.0, float(np.max(np.abs(coeffs))))
    return _InnerLadder(blk.pre.matrix, blk.pre.bias, coeffs,
                        complex(blk.post.bias[0]), rho0, lam)


def _ladder_transition(ladder: _InnerLadder, k: int, s: int, i_acc: int,
                       i_cmp: int, op_idx: int, iw: int) -> ComplexAffineMap:
    """Affine map after inner stage k: accumulate the (rescaled, centered)
    neuron output and reload the next preactivation, or on the last step
    write the block value back into the w slot with the exact compensation
    for the rescale and centering."""
    k_units = len(ladder.biases)
    if k + 1 < k_units:
        s_sub = s + 2
        trans = np.zeros((s_sub, s_sub), dtype=np.complex128)
        trans[:s, :s] = _identity_rows(s)
        trans_b = np.zeros(s_sub, dtype=np.complex128)
        trans[i_acc, i_acc] = 1
        trans[i_acc, i_cmp] = ladder.lam * ladder.coeffs[k]
        trans_b[i_acc] = -ladder.lam * ladder.coeffs[k] * ladder.rho0
        trans[i_cmp, op_idx] = ladder.rows[k + 1, 0]
        trans[i_cmp, iw] = ladder.rows[k + 1, 1]
        trans_b[i_cmp] = ladder.biases[k + 1]
        return _affine(trans, trans_b)
    exit_m = np.zeros((s, s + 2), dtype=np.complex128)
    exit_m[:s, :s] = _identity_rows(s)
    exit_b = np.zeros(s, dtype=np.complex128)
    exit_m[iw, iw] = 0
    exit_m[iw, i_acc] = 1.0 / ladder.lam
    exit_m[iw, i_cmp] = ladder.coeffs[k_units - 1]
    exit_b[iw] = ladder.bias0 + ladder.rho0 * np.sum(ladder.coeffs[: k_units - 1])
    return _affine(exit_m, exit_b)


def _lower_poly_wide_or_narrow(program: RegisterProgram, kit: _Kit, narrow: bool) -> list:
    n, m = program.input_dim, program.output_dim
    s = 2 * n + m + 1
    iw = 2 * n
    iv = 2 * n + 1
    pieces = []
    # T_init: (z, conj z, 1, 0) built by one hidden layer of n pair blocks
    builder = _StageBuilder(n)
    z_outs, zb_outs = [], []
    for i in range(n):
        a, b = kit.pair_cross(builder, builder.slot(i))
        z_outs.append(a)
        zb_outs.append(b)
    outputs = z_outs + zb_outs + [([], 1 + 0j)] + [([], 0j)] * m
    _emit_affine(pieces, _affine(_identity_rows(n), np.zeros(n)))
    _emit(pieces, kit, builder.finish(outputs))
    _emit_affine(pieces, _affine(_identity_rows(s), np.zeros(s)))

    ladder = _mul_ladder(kit)
    k_units = len(ladder.biases)

    for lay in program.layers:
        if isinstance(lay, FlushLayer):
            trans = _identity_rows(s).copy()
            trans_b = np.zeros(s, dtype=np.complex128)
            trans[iw, iw] = 0
            trans_b[iw] = 1
            trans[iv + lay.dst, iw] = lay.coeff
            _emit_affine(pieces, _affine(trans, trans_b))
            continue
        side, i = lay.operand
        op_idx = i if side == "z" else n + i

        if not narrow:
            builder = _StageBuilder(s)
            z_outs, zb_outs = [], []
            for k in range(n):
                a, b = kit.pair_cross(builder, builder.slot(k))
                z_outs.append(a)
                zb_outs.append(b)
            units = builder.block_units(kit.mul_blk,
                                        [builder.slot(op_idx), builder.slot(iw)])
            w_out = builder.block_output(kit.mul_blk, units, 0)
            v_outs = [kit.id_cross(builder, builder.slot(iv + j)) for j in range(m)]
            outputs = z_outs + zb_outs + [w_out] + v_outs
            _emit(pieces, kit, builder.finish(outputs))
            continue

        # narrow: run the multiplication as an inner register program over
        # (x1 = operand [read from the registers], x2 = w, compute, accumulator)
        s_sub = s + 2
        i_acc, i_cmp = s, s + 1
        enter = np.zeros((s_sub, s), dtype=np.complex128)
        enter[:s, :] = _identity_rows(s)
        enter_b = np.zeros(s_sub, dtype=np.complex128)
        enter[i_cmp, op_idx] = ladder.rows[0, 0]
        enter[i_cmp, iw] = ladder.rows[0, 1]
        enter_b[i_cmp] = ladder.biases[0]
        _emit_affine(pieces, _affine(enter, enter_b))

        for k in range(k_units):
            builder = _StageBuilder(s_sub)
            z_outs, zb_outs = [], []
            for q in range(n):
                a, b = kit.pair_cross(builder, builder.slot(q))
                z_outs.append(a)
                zb_outs.append(b)
            w_out = kit.id_cross(builder, builder.slot(iw))
            v_outs = [kit.id_cross(builder, builder.slot(iv + j)) for j in range(m)]
            acc_out = kit.id_cross(builder, builder.slot(i_acc))
            raw = builder.unit(*builder.slot(i_cmp))
            outputs = (z_outs + zb_outs + [w_out] + v_outs
                       + [acc_out] + [([(raw, 1.0)], 0j)])
            _emit(pieces, kit, builder.finish(outputs))
            _emit_affine(pieces, _ladder_transition(ladder, k, s, i_acc, i_cmp,
                                                    op_idx, iw))

    end = np.zeros((m, s), dtype=np.complex128)
    for j in range(m):
        end[j, iv + j] = 1
    _emit_affine(pieces, _affine(end, np.asarray(program.end_bias)))
    return pieces


def _lower_poly_nm4(program: RegisterProgram, kit: _Kit) -> list:
    n, m = program.input_dim, program.output_dim
    s = n + m + 2
    ig, iw, iv = n, n + 1, n + 2
    pieces = []

    builder = _StageBuilder(n)
    z_outs = [kit.id_cross(builder, builder.slot(i)) for i in range(n)]
    outputs = z_outs + [([], 0j), ([], 1 + 0j)] + [([], 0j)] * m
    _emit_affine(pieces, _affine(_identity_rows(n), np.zeros(n)))
    _emit(pieces, kit, builder.finish(outputs))
    _emit_affine(pieces, _affine(_identity_rows(s), np.zeros(s)))

    ladder = _mul_ladder(kit)
    k_units = len(ladder.biases)
    conj_src = None

    for lay in program.layers:
        if isinstance(lay, FlushLayer):
            trans = _identity_rows(s).copy()
            trans_b = np.zeros(s, dtype=np.complex128)
            trans[iw, iw] = 0
            trans_b[iw] = 1
            trans[iv + lay.dst, iw] = lay.coeff
            _emit_affine(pieces, _affine(trans, trans_b))
            continue
        side, i = lay.operand
        if side == "zbar" and conj_src != i:
            # refresh the single conjugation register from input i
            builder = _StageBuilder(s)
            outputs = []
            pair_out = None
            for q in range(n):
                if q == i:
                    zi, gi = kit.pair_cross(builder, builder.slot(q))
                    outputs.append(zi)
                    pair_out = gi
                else:
                    outputs.append(kit.id_cross(builder, builder.slot(q)))
            outputs.append(pair_out)
            outputs.append(kit.id_cross(builder, builder.slot(iw)))
            outputs += [kit.id_cross(builder, builder.slot(iv + j)) for j in range(m)]
            _emit(pieces, kit, builder.finish(outputs))
            conj_src = i
        op_idx = i if side == "z" else ig

        s_sub = s + 2
        i_acc, i_cmp = s, s + 1
        enter = np.zeros((s_sub, s), dtype=np.complex128)
        enter[:s, :] = _identity_rows(s)
        enter_b = np.zeros(s_sub, dtype=np.complex128)
        enter[i_cmp, op_idx] = ladder.rows[0, 0]
        enter[i_cmp, iw] = ladder.rows[0, 1]
        enter_b[i_cmp] = ladder.biases[0]
        _emit_affine(pieces, _affine(enter, enter_b))

        for k in range(k_units):
            builder = _StageBuilder(s_sub)
            outputs = [kit.id_cross(builder, builder.slot(q)) for q in range(n)]
            outputs.append(kit.id_cross(builder, builder.slot(ig)))
            outputs.append(kit.id_cross(builder, builder.slot(iw)))
            outputs += [kit.id_cross(builder, builder.slot(iv + j)) for j in range(m)]
            outputs.append(kit.id_cross(builder, builder.slot(i_acc)))
            raw = builder.unit(*builder.slot(i_cmp))
            outputs.append(([(raw, 1.0)], 0j))
            _emit(pieces, kit, builder.finish(outputs))
            _emit_affine(pieces, _ladder_transition(ladder, k, s, i_acc, i_cmp,
                                                    op_idx, iw))

    end = np.zeros((m, s), dtype=np.complex128)
    for j in range(m):
        end[j, iv + j] = 1
    _emit_affine(pieces, _affine(end, np.asarray(program.end_bias)))
    return pieces


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def assemble_pieces(pieces: list, activation_id) -> Cvnn:
    """Fuse the alternating affine/stage chain into a strict network."""
    pending = None
    maps = []
    for kind, obj in pieces:
        if kind == "affine":
            pending = obj if pending is None else fuse_affine(obj, pending)
        else:
            maps.append(obj.pre if pending is None else fuse_affine(obj.pre, pending))
            pending = obj.post
    if pending is None:
        raise StrategyMismatch("no affine maps produced")
    maps.append(pending)
    if len(maps) < 2:
        raise StrategyMismatch("lowering produced a purely affine map; nothing to lower")
    return Cvnn(tuple(maps), activation_id)


def eval_pieces(pieces: list, spec: ActivationSpec, z) -> np.ndarray:
    """Evaluate the unfused chain (oracle for fusion invariance)."""
    cur = np.asarray(z, dtype=np.complex128)
    for kind, obj in pieces:
        if kind == "affine":
            cur = eval_affine(obj, cur)
        else:
            cur = eval_affine(obj.post, spec.fn(eval_affine(obj.pre, cur)))
    return cur


def lower_pieces(program: RegisterProgram, spec: ActivationSpec, strategy: str,
                 h: float, prof: ToleranceProfile = ToleranceProfile(),
                 h_map=None):
    """Strategy dispatch; returns (pieces, kit) without fusing."""
    if strategy not in STRATEGIES:
        raise StrategyMismatch(f"unknown strategy {strategy!r}")
    if strategy.startswith("NonPoly") and program.family != "shallow":
        raise StrategyMismatch(f"{strategy} needs a shallow-family program")
    if strategy.startswith("Poly") and program.family != "poly":
        raise StrategyMismatch(f"{strategy} needs a poly-family program")
    kit = _build_kit(spec, strategy, h, prof, h_map)
    if program.family == "poly" and program.mul_kind != kit.mul_kind:
        raise StrategyMismatch(
            f"program was planned for {program.mul_kind} but the activation "
            f"affords {kit.mul_kind}")
    if strategy in ("NonPoly_NMplus1", "NonPoly_Conj_NMplus1"):
        pieces = _lower_shallow(program, kit, wide=False)
    elif strategy == "NonPoly_2N2Mplus1":
        pieces = _lower_shallow(program, kit, wide=True)
    elif strategy == "Poly_Wide_2N2Mplus12":
        pieces = _lower_poly_wide_or_narrow(program, kit, narrow=False)
    elif strategy == "Poly_Narrow_2N2Mplus5":
        pieces = _lower_poly_wide_or_narrow(program, kit, narrow=True)
    else:
        pieces = _lower_poly_nm4(program, kit)
    return pieces, kit


def lower(program: RegisterProgram, spec: ActivationSpec, strategy: str,
          h: float, prof: ToleranceProfile = ToleranceProfile(),
          h_map=None, info: Optional[dict] = None) -> Cvnn:
    """Lower a register program to a strict narrow network at localization
    scale h.  The evaluation error against the ideal program vanishes as
    h -> 0 on any fixed box (down to the float cancellation floor)."""
    pieces, kit = lower_pieces(program, spec, strategy, h, prof, h_map)
    net = assemble_pieces(pieces, spec.activation_id)
    budget = strategy_width_budget(strategy, program.input_dim, program.output_dim)
    w = width_of(net)
    if w > budget:
        raise AssertionError(
            f"width bound violated: {strategy} produced width {w} > budget {budget}")
    if info is not None:
        info["pieces"] = pieces
        info["width"] = w
        info["budget"] = budget
        info["depth"] = len(net.affine_maps)
        info["sigma"] = kit.sigma.name
        info["mul_kind"] = kit.mul_kind
        info["max_post_coeff"] = float(max(np.max(np.abs(m.matrix)) for m in net.affine_maps))
    return net


def default_strategy(verdict: str, witness_probe, prof: ToleranceProfile = ToleranceProfile()) -> str:
    """Map a classification verdict to the lowering strategy it certifies."""
    if verdict == "UniversalNonPoly_NMplus1":
        if witness_probe is not None and abs(witness_probe.d) > prof.zero_tol:
            return "NonPoly_NMplus1"
        return "NonPoly_Conj_NMplus1"
    if verdict == "UniversalNonPoly_2N2Mplus1":
        return "NonPoly_2N2Mplus1"
    if verdict == "UniversalPoly_NMplus4":
        return "Poly_NMplus4"
    if verdict == "UniversalPoly_2N2Mplus5":
        return "Poly_Narrow_2N2Mplus5"
    raise StrategyMismatch(f"verdict {verdict!r} does not certify a lowering strategy")
