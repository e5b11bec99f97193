"""Phase-space volume functionals for the counting estimates.

Everything here reduces to Lebesgue measures on the classical phase space:
the volume of the sublevel set {a0 < E} (the leading counting term), thin
energy shells {|a0 - E'| <= h}, the remainder functional built from the worst
shell near E, the h^delta0-thickened near-critical set, directional slice
measures through near-critical points, and exact 1-D polynomial sublevel
measures.

For second-order symbols the fiber in the first momentum coordinate is a
quadratic polynomial, so its sublevel measure has a closed form.  All Monte
Carlo estimators integrate that exact fiber measure over the remaining
coordinates, which removes the indicator-function variance in the thin-shell
regime and makes the relative error h-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from ._fitting import ExponentFit, fit_loglog
from .symbols import SymbolModel, find_critical_points

__all__ = [
    "VolumeEstimate",
    "RemainderFunctional",
    "PolySublevelQuery",
    "SublevelLemmaReport",
    "ContainmentFault",
    "weyl_volume",
    "shell_volume",
    "remainder_functional",
    "near_critical_volume",
    "direction_frame",
    "directional_measure",
    "poly_sublevel_measure",
    "verify_sublevel_lemma",
]

BOUNDARY_MARGIN = 0.02
N_BATCHES = 32
NEWTON_TOL = 1e-12
STURM_MAX_DEGREE = 12
_QUADRATIC_TOL = 1e-8


class ContainmentFault(RuntimeError):
    """The target set reaches the sampling box boundary; enlarge the box."""


class DegenerateDirectionFault(RuntimeError):
    pass


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    std_error: float
    method: str  # monte_carlo | tensor_grid | exact_1d
    sample_count: int

    def __post_init__(self):
        if self.value < -1e-12 or self.std_error < 0:
            raise ValueError("volume and its error must be nonnegative")
        if self.method == "exact_1d" and self.std_error != 0.0:
            raise ValueError("exact_1d estimates carry no sampling error")


@dataclass(frozen=True)
class RemainderFunctional:
    energy: float
    epsilon: float
    h: float
    value: float
    argmax_energy: float
    grid_size: int

    def __post_init__(self):
        if self.value < self.h - 1e-15:
            raise ValueError("remainder functional is bounded below by h")
        half = self.h ** (1.0 - self.epsilon)
        if abs(self.argmax_energy - self.energy) > half * (1 + 1e-12):
            raise ValueError("argmax energy escaped the sup window")


@dataclass(frozen=True)
class PolySublevelQuery:
    coefficients: tuple
    threshold: float
    measure: float
    intervals: tuple


# -- quadratic momentum fibers ------------------------------------------------


def _fiber_coefficients(model: SymbolModel, base: np.ndarray):
    """Quadratic coefficients (A, B, C) of t -> a0(x, t, xi_rest).

    `base` holds phase points whose first momentum slot is ignored.  The
    symbol is quadratic in that slot for second-order operators, so three
    evaluations determine the fiber polynomial; a fourth evaluation guards
    the assumption.
    """
    d = model.dimension
    pts = np.array(base, dtype=float)
    pts[:, d] = 0.0
    f0 = model.value(pts)
    pts[:, d] = 1.0
    fp = model.value(pts)
    pts[:, d] = -1.0
    fm = model.value(pts)
    A = 0.5 * (fp + fm) - f0
    B = 0.5 * (fp - fm)
    probe = min(8, pts.shape[0])
    pts2 = pts[:probe].copy()
    pts2[:, d] = 2.0
    resid = np.abs(model.value(pts2) - (4 * A[:probe] + 2 * B[:probe] + f0[:probe]))
    scale = 1.0 + np.abs(f0[:probe])
    if np.any(resid > _QUADRATIC_TOL * scale):
        raise ValueError(
            "symbol is not quadratic in the first momentum coordinate"
        )
    if A.min() <= 0:
        raise ValueError(
            "nonpositive leading fiber coefficient contradicts ellipticity"
        )
    return A, B, f0


def _fiber_sublevel(A, B, C, level, L):
    """Measure and max |endpoint| of {t in [-L, L] : A t^2 + B t + C < level},
    with A > 0 elementwise."""
    disc = B * B - 4.0 * A * (C - level)
    sq = np.sqrt(np.maximum(disc, 0.0))
    lo = (-B - sq) / (2.0 * A)
    hi = (-B + sq) / (2.0 * A)
    clo = np.clip(lo, -L, L)
    chi = np.clip(hi, -L, L)
    meas = np.where(disc > 0.0, np.maximum(chi - clo, 0.0), 0.0)
    reach = np.where(meas > 0.0, np.maximum(np.abs(clo), np.abs(chi)), 0.0)
    return meas, reach


def _batch_stats(batch_means: np.ndarray, factor: float, n_total: int, method: str):
    value = factor * float(batch_means.mean())
    se = factor * float(batch_means.std(ddof=1)) / math.sqrt(len(batch_means))
    return VolumeEstimate(max(value, 0.0), se, method, n_total)


def _base_cloud(model: SymbolModel, budget: int, seed: int):
    """Stratified phase points; the first momentum slot is a placeholder.

    The non-fiber coordinates are jittered on a tensor grid of equal cells
    (one point per cell, fresh jitter per batch), which beats plain uniform
    sampling by an order of magnitude on the Lipschitz fiber measures
    integrated here.  Returns (points, per_batch).
    """
    d = model.dimension
    ndim = 2 * d - 1
    per_target = max(budget // N_BATCHES, 256)
    k = max(int(round(per_target ** (1.0 / ndim))), 2)
    per = k**ndim
    rng = np.random.Generator(np.random.Philox(key=seed))
    axes = [np.arange(k)] * ndim
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, ndim)
    pts = np.zeros((N_BATCHES * per, 2 * d))
    scale = np.array([model.box_x] * d + [model.box_xi] * (d - 1))
    cols = list(range(d)) + list(range(d + 1, 2 * d))
    for b in range(N_BATCHES):
        unit = (mesh + rng.random((per, ndim))) / k
        pts[b * per : (b + 1) * per, cols] = (2.0 * unit - 1.0) * scale
    return pts, per


def _check_containment(model: SymbolModel, pts, active, reach):
    """Fault if any point carrying fiber mass sits within 2% of the box
    boundary, or if a fiber interval reaches 98% of the momentum range."""
    if not np.any(active):
        return
    d = model.dimension
    sub = pts[active]
    mx = np.abs(sub[:, :d]).max(axis=1)
    cols = [j for j in range(d, 2 * d) if j != d]
    mxi = np.abs(sub[:, cols]).max(axis=1) if cols else np.zeros(len(sub))
    if (
        mx.max() > (1.0 - BOUNDARY_MARGIN) * model.box_x
        or (cols and mxi.max() > (1.0 - BOUNDARY_MARGIN) * model.box_xi)
        or reach[active].max() > (1.0 - BOUNDARY_MARGIN) * model.box_xi
    ):
        raise ContainmentFault(
            "sublevel/shell set reaches within 2% of the sampling box; "
            "enlarge box_x/box_xi"
        )


def weyl_volume(
    model: SymbolModel, energy: float, budget: int = 2**18, seed: int = 0
) -> VolumeEstimate:
    """vol{v : a0(v) < E}, the leading term of the counting asymptotics.

    d = 1 integrates the exact momentum-fiber measure over x on a tensor
    grid; d >= 2 averages the same fiber measure over Monte Carlo samples of
    the remaining coordinates (32 batches, counter-based RNG).
    """
    d, L = model.dimension, model.box_xi
    if d == 1:
        n = max(budget, 2**14)
        xs = (np.arange(n) + 0.5) / n * (2 * model.box_x) - model.box_x
        pts = np.zeros((n, 2))
        pts[:, 0] = xs
        A, B, C = _fiber_coefficients(model, pts)
        meas, reach = _fiber_sublevel(A, B, C, energy, L)
        _check_containment(model, pts, meas > 0, reach)
        dx = 2 * model.box_x / n
        value = float(meas.sum() * dx)
        # refinement gap of the midpoint rule as the error proxy
        coarse = float(meas[::2].sum() * 2 * dx)
        return VolumeEstimate(value, abs(value - coarse), "tensor_grid", n)

    pts, per = _base_cloud(model, budget, seed)
    A, B, C = _fiber_coefficients(model, pts)
    meas, reach = _fiber_sublevel(A, B, C, energy, L)
    _check_containment(model, pts, meas > 0, reach)
    base_vol = model.box_volume() / (2.0 * model.box_xi)  # all but the fiber
    means = meas.reshape(N_BATCHES, per).mean(axis=1)
    return _batch_stats(means, base_vol, per * N_BATCHES, "monte_carlo")


def shell_volume(
    model: SymbolModel,
    e_prime: float,
    width: float,
    budget: int = 2**18,
    seed: int = 0,
) -> VolumeEstimate:
    """vol{v : |a0(v) - E'| <= width} via exact momentum fibers."""
    d, L = model.dimension, model.box_xi
    if d == 1:
        n = max(budget, 2**14)
        xs = (np.arange(n) + 0.5) / n * (2 * model.box_x) - model.box_x
        pts = np.zeros((n, 2))
        pts[:, 0] = xs
        A, B, C = _fiber_coefficients(model, pts)
        m_hi, r_hi = _fiber_sublevel(A, B, C, e_prime + width, L)
        m_lo, _ = _fiber_sublevel(A, B, C, e_prime - width, L)
        meas = m_hi - m_lo
        _check_containment(model, pts, meas > 0, r_hi)
        dx = 2 * model.box_x / n
        value = float(meas.sum() * dx)
        coarse = float(meas[::2].sum() * 2 * dx)
        return VolumeEstimate(value, abs(value - coarse), "tensor_grid", n)

    pts, per = _base_cloud(model, budget, seed)
    A, B, C = _fiber_coefficients(model, pts)
    m_hi, r_hi = _fiber_sublevel(A, B, C, e_prime + width, L)
    m_lo, _ = _fiber_sublevel(A, B, C, e_prime - width, L)
    meas = m_hi - m_lo
    _check_containment(model, pts, meas > 0, r_hi)
    base_vol = model.box_volume() / (2.0 * model.box_xi)
    means = meas.reshape(N_BATCHES, per).mean(axis=1)
    return _batch_stats(means, base_vol, per * N_BATCHES, "monte_carlo")


def remainder_functional(
    model: SymbolModel,
    energy: float,
    epsilon: float,
    h: float,
    budget: int = 2**18,
    seed: int = 0,
) -> RemainderFunctional:
    """h plus the worst shell volume over E' in [E - h^(1-eps), E + h^(1-eps)].

    The E'-grid has ceil(4 h^(-eps)) + 1 points, so its spacing is at most
    h/2 and no width-h shell can slip between grid points.  One sample cloud
    (and its fiber coefficients) is shared by every E', which makes the
    discrete sup exact up to the common Monte Carlo error.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if h <= 0:
        raise ValueError("h must be positive")
    half = h ** (1.0 - epsilon)
    n_grid = int(math.ceil(4.0 * h ** (-epsilon))) + 1
    grid = np.linspace(energy - half, energy + half, n_grid)

    d, L = model.dimension, model.box_xi
    if d == 1:
        n = max(budget, 2**14)
        pts = np.zeros((n, 2))
        pts[:, 0] = (np.arange(n) + 0.5) / n * (2 * model.box_x) - model.box_x
        weight = 2 * model.box_x / n
    else:
        pts, per = _base_cloud(model, budget, seed)
        n = per * N_BATCHES
        weight = model.box_volume() / (2.0 * model.box_xi) / n
    A, B, C = _fiber_coefficients(model, pts)

    best_vol, best_e = -1.0, grid[0]
    for e_prime in grid:
        m_hi, r_hi = _fiber_sublevel(A, B, C, e_prime + h, L)
        m_lo, _ = _fiber_sublevel(A, B, C, e_prime - h, L)
        meas = m_hi - m_lo
        _check_containment(model, pts, meas > 0, r_hi)
        vol = float(meas.sum() * weight)
        if vol > best_vol:
            best_vol, best_e = vol, float(e_prime)
    return RemainderFunctional(
        energy=energy,
        epsilon=epsilon,
        h=h,
        value=h + best_vol,
        argmax_energy=best_e,
        grid_size=n_grid,
    )


# -- near-critical sets --------------------------------------------------------


def near_critical_volume(
    model: SymbolModel,
    h: float,
    delta0: float,
    cbar: float,
    energy: float,
    energy_window: float = 0.25,
    budget: int = 2**16,
    cloud_size: int = 2**14,
    seed: int = 0,
) -> VolumeEstimate:
    """Volume of the h^delta0-thickening of {|grad a0| <= cbar h^delta0}
    intersected with {|a0 - E| <= energy_window}.

    The inner set concentrates around critical points of the symbol, so the
    estimator localizes: it rejection-samples an inner point cloud in small
    boxes around the located critical points, then Monte Carlo integrates the
    thickened indicator (nearest-cloud distance < h^delta0) over slightly
    enlarged boxes.
    """
    if cbar <= 1.0:
        raise ValueError("cbar must exceed 1")
    eps = h**delta0
    centers = find_critical_points(model, energy, energy_window)
    if len(centers) == 0:
        return VolumeEstimate(0.0, 0.0, "monte_carlo", 0)

    rng = np.random.Generator(np.random.Philox(key=seed))
    two_d = 2 * model.dimension
    boxes = []
    for report in centers:
        center = np.asarray(report.location, dtype=float)
        sigma_min = float(
            np.linalg.svd(report.hessian, compute_uv=False).min()
        )
        sigma_min = max(sigma_min, 1e-6)
        inner_r = 1.5 * cbar * eps / sigma_min
        boxes.append((center, inner_r, inner_r + 1.2 * eps))

    # inner cloud: accepted points of the near-critical set itself
    cloud = []
    for center, inner_r, _ in boxes:
        cand = center + rng.uniform(-inner_r, inner_r, size=(cloud_size, two_d))
        gn = np.linalg.norm(model.gradient(cand), axis=1)
        ok = (gn <= cbar * eps) & (
            np.abs(model.value(cand) - energy) <= energy_window
        )
        cloud.append(cand[ok])
    cloud = np.concatenate(cloud, axis=0)
    if len(cloud) == 0:
        return VolumeEstimate(0.0, 0.0, "monte_carlo", 0)
    tree = cKDTree(cloud)

    per = max(budget // N_BATCHES, 128)
    total = per * N_BATCHES
    value, var = 0.0, 0.0
    for center, _, outer_r in boxes:
        cand = center + rng.uniform(-outer_r, outer_r, size=(total, two_d))
        dist, _ = tree.query(cand, k=1)
        hit = (dist < eps).astype(float).reshape(N_BATCHES, per)
        box_vol = (2.0 * outer_r) ** two_d
        means = hit.mean(axis=1)
        value += box_vol * float(means.mean())
        var += (box_vol * float(means.std(ddof=1)) / math.sqrt(N_BATCHES)) ** 2
    return VolumeEstimate(value, math.sqrt(var), "monte_carlo", total * len(boxes))


# -- directional slice measures -------------------------------------------------


def direction_frame(model: SymbolModel, vbar: np.ndarray):
    """Three slicing directions at a point where the symbol Hessian has
    rank >= 2.

    e1, e2 are the normalized Hessian rows of the two most transversal
    mixed-derivative gradients (their defining pairings theta_k are then the
    row norms); both get a guaranteed position component.  e3 is a pure
    momentum direction completing a linearly independent triple.
    Returns (E, j_indices, thetas) with E of shape (3, 2d).
    """
    vbar = np.asarray(vbar, dtype=float)
    d = model.dimension
    hess = model.hessian(vbar[None, :])[0]
    norms = np.linalg.norm(hess, axis=1)
    if (norms > 1e-9).sum() < 2:
        raise DegenerateDirectionFault("symbol Hessian rank < 2 at vbar")
    j1 = int(np.argmax(norms))
    u1 = hess[j1] / norms[j1]
    perp = hess - np.outer(hess @ u1, u1)
    perp_norms = np.linalg.norm(perp, axis=1)
    perp_norms[j1] = 0.0
    j2 = int(np.argmax(perp_norms))
    if perp_norms[j2] < 1e-9 * max(1.0, norms[j1]):
        raise DegenerateDirectionFault("all Hessian rows are parallel")

    def with_position_part(e, row):
        # the first two directions must not be purely momentum
        if np.linalg.norm(e[:d]) < 1e-8:
            probe = np.zeros(2 * d)
            probe[0] = 1e-3 * math.copysign(1.0, row[0] if row[0] != 0 else 1.0)
            e = e + probe
            e = e / np.linalg.norm(e)
        return e

    e1 = with_position_part(u1, hess[j1])
    e2 = with_position_part(hess[j2] / norms[j2], hess[j2])
    theta1 = float(e1 @ hess[j1])
    theta2 = float(e2 @ hess[j2])
    if min(theta1, theta2) <= 0:
        raise DegenerateDirectionFault("nonpositive direction pairing")

    # pure momentum direction maximizing independence from (e1, e2)
    best, best_vol = None, -1.0
    for i in range(d):
        e3 = np.zeros(2 * d)
        e3[d + i] = 1.0
        vol = abs(np.linalg.det(np.stack([e1, e2, e3]) @ np.stack([e1, e2, e3]).T))
        if vol > best_vol:
            best, best_vol = e3, vol
    if best_vol < 1e-12:
        raise DegenerateDirectionFault("no independent momentum direction")
    return np.stack([e1, e2, best]), (j1, j2), (theta1, theta2)


def _slice_measure(member, s_max: float, n_dense: int = 10_000) -> float:
    """1-D measure of {s in [-s_max, s_max] : member(s)} by dense sampling
    plus bisection refinement at each membership flip."""
    s = np.linspace(-s_max, s_max, n_dense)
    inside = member(s)
    ds = s[1] - s[0]
    measure = float(inside.sum()) * ds
    flips = np.nonzero(inside[:-1] != inside[1:])[0]
    for i in flips:
        lo, hi = s[i], s[i + 1]
        lo_in = bool(inside[i])
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if bool(member(np.array([mid]))[0]) == lo_in:
                lo = mid
            else:
                hi = mid
        crossing = 0.5 * (lo + hi)
        # replace the cell's coarse contribution by the refined split
        coarse = ds if lo_in else 0.0
        refined = crossing - s[i] if lo_in else s[i + 1] - crossing
        measure += refined - coarse
    return max(measure, 0.0)


def directional_measure(
    model: SymbolModel,
    vbar,
    k: int,
    v,
    h: float,
    delta0: float,
    cbar: float = 2.0,
    eps_vbar: float = 0.5,
    r0: float | None = None,
) -> tuple[float, float]:
    """Measure of {s : v + s e_k in B(vbar, eps) and |grad a0| <= cbar h^delta0}.

    Expected scaling: h^delta0 along e1, e2 and h^(delta0/(2 m0 - 1)) along
    the momentum direction e3.  eps_vbar shrinks geometrically until the
    slice derivative of the pairing u_k stays above theta_k / 2, which is the
    monotonicity that turns the slice into a single short interval; the final
    radius is returned alongside the measure.
    """
    if k not in (1, 2, 3):
        raise ValueError("direction index k must be 1, 2 or 3")
    vbar = np.asarray(vbar, dtype=float)
    v = np.asarray(v, dtype=float)
    frame, (j1, j2), (theta1, theta2) = direction_frame(model, vbar)
    e_k = frame[k - 1]

    eps = float(eps_vbar)
    if k in (1, 2):
        j_k = (j1, j2)[k - 1]
        theta = (theta1, theta2)[k - 1]
        hess_row = lambda pts: model.hessian(pts)[:, j_k, :]  # noqa: E731
        for _ in range(60):
            s = np.linspace(-eps, eps, 64)
            pts = vbar[None, :] + s[:, None] * e_k[None, :]
            du = hess_row(pts) @ e_k
            if du.min() > theta / 2.0:
                break
            eps *= 0.7
        else:
            raise DegenerateDirectionFault(
                "slice monotonicity unattainable at vbar"
            )

    tol = cbar * h**delta0

    def member(s):
        pts = v[None, :] + np.asarray(s)[:, None] * e_k[None, :]
        in_ball = np.linalg.norm(pts - vbar[None, :], axis=1) < eps
        out = np.zeros(len(pts), dtype=bool)
        if in_ball.any():
            gn = np.linalg.norm(model.gradient(pts[in_ball]), axis=1)
            out[in_ball] = gn <= tol
        return out

    if np.linalg.norm(v - vbar) > eps + 2.0 * eps:
        return 0.0, eps
    return _slice_measure(member, 2.0 * eps), eps


# -- exact polynomial sublevel measures -----------------------------------------


def _poly_eval_fr(coeffs, s):
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * s + c
    return acc


def _poly_deriv_fr(coeffs):
    return [c * k for k, c in enumerate(coeffs)][1:]


def _poly_divmod_fr(num, den):
    num = list(num)
    out = [Fraction(0)] * max(len(num) - len(den) + 1, 0)
    while len(num) >= len(den) and any(num):
        if num[-1] == 0:
            num.pop()
            continue
        shift = len(num) - len(den)
        q = num[-1] / den[-1]
        out[shift] = q
        for i, c in enumerate(den):
            num[shift + i] -= q * c
        num.pop()
    while num and num[-1] == 0:
        num.pop()
    return out, num


def _squarefree_fr(coeffs):
    # divide out gcd(p, p') so Sturm root counting sees simple roots only
    def gcd(a, b):
        while b:
            _, r = _poly_divmod_fr(a, b)
            a, b = b, r
        return a

    g = gcd(list(coeffs), _poly_deriv_fr(coeffs))
    if len(g) <= 1:
        return list(coeffs)
    q, _ = _poly_divmod_fr(list(coeffs), g)
    return q


def _sturm_chain(coeffs):
    chain = [list(coeffs), _poly_deriv_fr(coeffs)]
    while len(chain[-1]) > 0:
        _, r = _poly_divmod_fr(chain[-2], chain[-1])
        if not r:
            break
        chain.append([-c for c in r])
    return chain


def _sign_changes(chain, s):
    signs = []
    for p in chain:
        val = _poly_eval_fr(p, s)
        if val != 0:
            signs.append(1 if val > 0 else -1)
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def _sturm_roots(coeffs, lo: float, hi: float):
    """All real roots in (lo, hi) by Sturm bisection on exact rationals."""
    sf = _squarefree_fr(coeffs)
    if len(sf) <= 1:
        return []
    chain = _sturm_chain(sf)
    lo_f, hi_f = Fraction(lo), Fraction(hi)
    # nudge the endpoints off exact roots
    tiny = Fraction(1, 10**9) * max(1, abs(hi_f - lo_f))
    while _poly_eval_fr(sf, lo_f) == 0:
        lo_f -= tiny
    while _poly_eval_fr(sf, hi_f) == 0:
        hi_f += tiny

    out = []
    stack = [(lo_f, hi_f, _sign_changes(chain, lo_f) - _sign_changes(chain, hi_f))]
    while stack:
        a, b, n = stack.pop()
        if n == 0:
            continue
        if n == 1 and float(b - a) < 1e-6:
            out.append(0.5 * float(a + b))
            continue
        mid = (a + b) / 2
        while _poly_eval_fr(sf, mid) == 0:
            mid += (b - a) / 10**6
        sc = _sign_changes(chain, mid)
        stack.append((a, mid, _sign_changes(chain, a) - sc))
        stack.append((mid, b, sc - _sign_changes(chain, b)))
    return sorted(out)


def _newton_polish(coeffs_f: np.ndarray, root: float) -> float:
    dcoeffs = np.polyder(coeffs_f)
    x = root
    for _ in range(60):
        fx = np.polyval(coeffs_f, x)
        dfx = np.polyval(dcoeffs, x)
        if dfx == 0:
            break
        step = fx / dfx
        x -= step
        if abs(step) < NEWTON_TOL:
            break
    return x


def _real_roots(coeffs, lo: float, hi: float):
    """Real roots of the ascending-coefficient polynomial in [lo, hi]:
    Sturm sequences up to degree 12, companion-matrix eigenvalues beyond,
    Newton-polished to 1e-12 either way."""
    degree = len(coeffs) - 1
    margin = 1e-9 * max(1.0, hi - lo)
    desc = np.array(coeffs[::-1], dtype=float)
    if degree <= STURM_MAX_DEGREE:
        raw = _sturm_roots([Fraction(c) for c in coeffs], lo - margin, hi + margin)
    else:
        raw = [float(r.real) for r in np.roots(desc) if abs(r.imag) < 1e-9]
    polished = sorted(_newton_polish(desc, r) for r in raw)
    out = []
    for r in polished:
        if lo - margin <= r <= hi + margin and (
            not out or r - out[-1] > 1e-11
        ):
            out.append(min(max(r, lo), hi))
    return out


def poly_sublevel_measure(coeffs, tau: float, interval) -> PolySublevelQuery:
    """Exact Lebesgue measure of {s in I : |F(s)| < tau} for a real
    polynomial F given by ascending coefficients."""
    if tau <= 0:
        raise ValueError("threshold tau must be positive")
    coeffs = [float(c) for c in coeffs]
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
    if len(coeffs) - 1 < 1:
        raise ValueError("degree must be at least 1")
    lo, hi = float(interval[0]), float(interval[1])
    if hi <= lo:
        raise ValueError("empty interval")

    cuts = set(_real_roots([coeffs[0] - tau] + coeffs[1:], lo, hi))
    cuts |= set(_real_roots([coeffs[0] + tau] + coeffs[1:], lo, hi))
    grid = sorted({lo, hi} | cuts)
    desc = np.array(coeffs[::-1])

    intervals, measure = [], 0.0
    for a, b in zip(grid, grid[1:]):
        if b - a <= 0:
            continue
        if abs(float(np.polyval(desc, 0.5 * (a + b)))) < tau:
            measure += b - a
            if intervals and abs(intervals[-1][1] - a) < 1e-11:
                intervals[-1] = (intervals[-1][0], b)
            else:
                intervals.append((a, b))
    return PolySublevelQuery(
        coefficients=tuple(coeffs),
        threshold=tau,
        measure=measure,
        intervals=tuple(intervals),
    )


@dataclass(frozen=True)
class SublevelLemmaReport:
    trials: int
    violations: tuple
    constants: dict
    max_ratio: float

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def verify_sublevel_lemma(
    random_seed: int = 0,
    trials: int = 200,
    m_max: int = 5,
    delta0: float = 0.4,
    h_grid=(1e-1, 1e-2, 1e-3, 1e-4),
    interval=None,
) -> SublevelLemmaReport:
    """Property check: measure{|F| < h^delta0} <= C_m h^(delta0/m) for every
    polynomial normalized so its top derivative at 0 is at least 1.

    C_m is calibrated per degree at the largest h over all trials and must
    then dominate every smaller h; any excess is reported as a violation.
    The bound is a whole-line statement, so by default each polynomial is
    measured on its own Cauchy root bound interval (a fixed interval would
    clip the sublevel set at large h and deflate the calibration).
    """
    rng = np.random.Generator(np.random.Philox(key=random_seed))
    h_grid = sorted(float(h) for h in h_grid)
    h_max = h_grid[-1]
    polys = []
    for _ in range(trials):
        m = int(rng.integers(1, m_max + 1))
        c = rng.uniform(-1.0, 1.0, size=m + 1)
        # enforce |F^(m)(0)| = |m! c_m| >= 1
        lead = c[m] * math.factorial(m)
        if abs(lead) < 1.0:
            c[m] = math.copysign(1.0, lead if lead != 0 else 1.0) / math.factorial(m)
        polys.append((m, c))

    def trial_interval(c):
        if interval is not None:
            return interval
        # Cauchy bound for F +- tau with tau <= 1: no sublevel set is clipped
        radius = 2.0 + (float(np.abs(c[:-1]).max()) + 1.0) / abs(c[-1])
        return (-radius, radius)

    measures = {
        (i, h): poly_sublevel_measure(c, h**delta0, trial_interval(c)).measure
        for i, (m, c) in enumerate(polys)
        for h in h_grid
    }
    def extremal(m, tau):
        # scaled Chebyshev polynomial with the smallest admissible leading
        # coefficient 1/m!: it attains the sharp sublevel bound
        # 4 (tau m! / 2)^(1/m) and its measure/tau^(1/m) ratio is
        # h-independent, so calibrating on it dominates every admissible
        # polynomial at every h
        lam = (2.0 ** (m - 1) * math.factorial(m) * tau) ** (1.0 / m)
        cheb = np.polynomial.chebyshev.cheb2poly([0.0] * m + [1.0])
        scale = lam ** np.arange(m + 1, dtype=float)
        return cheb / scale * lam**m * 2.0 ** (1 - m) / math.factorial(m)

    constants = {}
    tau_max = h_max**delta0
    for m in range(1, m_max + 1):
        ext = extremal(m, tau_max)
        vals = [
            poly_sublevel_measure(ext, tau_max, trial_interval(ext)).measure
            / h_max ** (delta0 / m)
        ]
        vals += [
            measures[(i, h_max)] / h_max ** (delta0 / m)
            for i, (mi, _) in enumerate(polys)
            if mi == m
        ]
        constants[m] = max(vals)

    violations = []
    max_ratio = 0.0
    for i, (m, c) in enumerate(polys):
        for h in h_grid:
            bound = constants[m] * h ** (delta0 / m)
            mu = measures[(i, h)]
            if bound > 0:
                max_ratio = max(max_ratio, mu / bound)
            if mu > bound * (1.0 + 1e-9) + 1e-12:
                violations.append((i, m, h, mu, bound))
    return SublevelLemmaReport(
        trials=trials,
        violations=tuple(violations),
        constants=constants,
        max_ratio=max_ratio,
    )
