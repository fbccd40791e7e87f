"""Fejer far-field sums and adaptive Gauss-Kronrod Chebyshev weights.

For a target ``r`` near a source patch the integral of kernel times density
is replaced by ``sum_m a_m beta_m`` where ``a_m`` are the Chebyshev
coefficients of the patch density (in ``theta``) and

    beta_m = int_0^1 H(r, r(theta')) T_m(2 theta' - 1) dtheta'.

The weights are computed by a vectorized adaptive G7/K15 scheme that runs
many independent integrals ("jobs") at once. Each job carries a relation
code that decides how ``r - r(theta')`` is formed:

* ``SAME``: target on the source patch, difference from the patch chord with
  an accurate parameter difference;
* ``ANCHORED``: the difference ``a - offset(s')`` where ``a`` is the target
  position relative to the source patch origin. For targets on a patch that
  shares a corner with the source (or field points given relative to that
  corner) ``a`` is known to full relative precision.
"""
from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .chebcov import cheb_vandermonde, cov_diff, cov_eval, cov_invert
from .discretization import Discretization, distance_to_piece
from .geometry import LinePatch
from .kernels import evaluate_kernels

__all__ = [
    "GkEngine",
    "GkResult",
    "WeightTable",
    "gk_integrate",
    "gk_batch",
    "precompute_weights",
    "near_jobs",
    "offsurface_weights",
    "far_apply",
    "near_apply",
    "save_table",
    "load_table",
    "table_key",
]

# QUADPACK qk15 abscissae/weights on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:7], [0.0], _XGK[6::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:7], [_WGK[7]], _WGK[6::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[13, 11, 9]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]

_EPS = np.finfo(float).eps
_UFLOW = np.finfo(float).tiny

SAME, ANCHORED = 0, 1


@dataclass(frozen=True)
class GkEngine:
    rtol: float = 1e-12
    atol: float = 1e-12
    limit: int = 2000
    max_points: int = 60000  # quadrature points per vectorized evaluation

    def __post_init__(self):
        if not (self.rtol >= 0 and self.atol >= 0 and self.rtol + self.atol > 0):
            raise ValueError("tolerances must be non-negative and not both zero")
        if self.limit < 1:
            raise ValueError("limit must be positive")


@dataclass
class GkResult:
    values: np.ndarray  # (jobs, components)
    errors: np.ndarray  # (jobs, components)
    converged: np.ndarray  # (jobs,)
    intervals: np.ndarray  # (jobs,)


def _rule(f, jobs, a, b, max_points):
    """Apply the G7/K15 pair on intervals ``[a, b]`` of the given jobs."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    res = resg = rabs = rasc = None
    step = max(1, max_points // 15)
    outs = []
    for lo in range(0, len(a), step):
        sl = slice(lo, lo + step)
        x = mid[sl, None] + half[sl, None] * NODES[None, :]
        fx = f(np.repeat(jobs[sl], 15), x.ravel())
        fx = fx.reshape(x.shape + (fx.shape[-1],))
        h = half[sl, None]
        rk = np.einsum("p,ipc->ic", KRONROD_WEIGHTS, fx)
        rg = np.einsum("p,ipc->ic", GAUSS_WEIGHTS, fx)
        ra = np.einsum("p,ipc->ic", KRONROD_WEIGHTS, np.abs(fx))
        mean = 0.5 * rk
        rs = np.einsum("p,ipc->ic", KRONROD_WEIGHTS, np.abs(fx - mean[:, None, :]))
        outs.append((rk * h, rg * h, ra * np.abs(h), rs * np.abs(h)))
    res = np.concatenate([o[0] for o in outs])
    resg = np.concatenate([o[1] for o in outs])
    rabs = np.concatenate([o[2] for o in outs])
    rasc = np.concatenate([o[3] for o in outs])
    err = np.abs(res - resg)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = rasc * np.minimum(1.0, (200.0 * err / rasc) ** 1.5)
    err = np.where((rasc != 0) & (err != 0), scaled, err)
    floor = 50.0 * _EPS * rabs
    err = np.where(rabs > _UFLOW / (50.0 * _EPS), np.maximum(floor, err), err)
    return res, err, rabs


def _tolerance(engine, I, A, groups):
    # per-component tolerance; ``groups`` components share one magnitude scale
    J, C = I.shape
    scale = np.abs(I).reshape(J, groups, C // groups).max(axis=2)
    scale = np.repeat(scale, C // groups, axis=1)
    return np.maximum(np.maximum(engine.atol, engine.rtol * scale), 100.0 * _EPS * A)


def gk_batch(f, breaks, ncomp, engine: GkEngine = GkEngine(), groups=None) -> GkResult:
    """Adaptive G7/K15 integration of many vector-valued integrals at once.

    ``f(job_index, x)`` receives flat arrays of job indices and abscissae and
    returns an array of shape ``(len(x), ncomp)``. ``breaks[j]`` is the
    sorted list of breakpoints of job ``j`` (its first and last entries are
    the integration limits).

    The tolerance of component ``c`` is ``max(atol, rtol * scale_c)`` where
    the scale is the largest ``|I|`` among the components of its group
    (``groups`` equal consecutive blocks; default one group per component).
    Errors at the rounding floor ``~ eps * int |f|`` are accepted.

    Every round bisects, in every unconverged job, the intervals whose
    error relative to the tolerance exceeds the fraction ``1 / n_intervals``.
    Jobs that reach ``engine.limit`` intervals are flagged as not converged.
    """
    groups = ncomp if groups is None else int(groups)
    if ncomp % groups:
        raise ValueError("groups must divide the number of components")
    J = len(breaks)
    ja, aa, bb = [], [], []
    for j, br in enumerate(breaks):
        br = np.asarray(br, dtype=float)
        ja.append(np.full(len(br) - 1, j))
        aa.append(br[:-1])
        bb.append(br[1:])
    ja = np.concatenate(ja) if J else np.zeros(0, int)
    aa = np.concatenate(aa) if J else np.zeros(0)
    bb = np.concatenate(bb) if J else np.zeros(0)
    if not len(ja):
        z = np.zeros((0, ncomp))
        return GkResult(z.astype(complex), z, np.zeros(0, bool), np.zeros(0, int))
    res, err, rabs = _rule(f, ja, aa, bb, engine.max_points)
    while True:
        S = sparse.csr_matrix((np.ones(len(ja)), (ja, np.arange(len(ja)))), shape=(J, len(ja)))
        I = S @ res
        E = S @ err
        tol = _tolerance(engine, I, S @ rabs, groups)
        nint = np.bincount(ja, minlength=J)
        ok = np.all(E <= tol, axis=1)
        done = ok | (nint >= engine.limit)
        if np.all(done):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.max(err / tol[ja], axis=1)
        width_ok = (bb - aa) > 8.0 * _EPS * np.maximum(np.abs(aa), np.abs(bb))
        split = ~done[ja] & (scaled * nint[ja] > 1.0) & width_ok
        if not np.any(split):
            break
        keep = ~split
        m = 0.5 * (aa[split] + bb[split])
        nj = np.concatenate([ja[split], ja[split]])
        na = np.concatenate([aa[split], m])
        nb = np.concatenate([m, bb[split]])
        nres, nerr, nabs = _rule(f, nj, na, nb, engine.max_points)
        ja = np.concatenate([ja[keep], nj])
        aa = np.concatenate([aa[keep], na])
        bb = np.concatenate([bb[keep], nb])
        res = np.concatenate([res[keep], nres])
        err = np.concatenate([err[keep], nerr])
        rabs = np.concatenate([rabs[keep], nabs])
    # deterministic final summation: order intervals by (job, left end)
    order = np.lexsort((aa, ja))
    S = sparse.csr_matrix((np.ones(len(ja)), (ja[order], np.arange(len(ja)))), shape=(J, len(ja)))
    I = S @ res[order]
    E = S @ err[order]
    tol = _tolerance(engine, I, S @ rabs[order], groups)
    return GkResult(I, E, np.all(E <= tol, axis=1), np.bincount(ja, minlength=J))


def gk_integrate(f, a, b, engine: GkEngine = GkEngine(), points=()):
    """Integrate a vectorized scalar (or vector) function over ``[a, b]``.

    Returns ``(value, error_estimate, converged)``.
    """
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("finite limits required")
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    br = np.unique(np.concatenate([[a, b], [p for p in points if a < p < b]]))
    probe = np.asarray(f(np.array([0.5 * (a + b)])))
    scalar = probe.ndim == 1 and probe.shape[0] == 1
    ncomp = 1 if scalar else probe.shape[-1]

    def g(_, x):
        v = np.asarray(f(x))
        return v.reshape(len(x), ncomp)

    out = gk_batch(g, [br], ncomp, engine)
    val = sign * out.values[0]
    errv = out.errors[0]
    if scalar:
        val, errv = val[0], errv[0]
        if np.isrealobj(probe):
            val = float(np.real(val))
    return val, errv, bool(out.converged[0])


# --- piece geometry in vectorized form ------------------------------------

class _PatchArrays:
    """Vectorized evaluators over pieces; straight bases are gathered, curved bases grouped."""

    def __init__(self, disc: Discretization):
        self.pieces = disc.pieces
        self.bases = disc.boundary.patches
        self.base = np.array([pc.base_index for pc in self.pieces])
        self.a = np.array([pc.a for pc in self.pieces])
        self.h = np.array([pc.h for pc in self.pieces])
        nb = len(self.bases)
        self.is_line = np.array([isinstance(b, LinePatch) for b in self.bases])
        self.edge = np.zeros((nb, 2))
        self.lnorm = np.zeros((nb, 2))
        for b, p in enumerate(self.bases):
            if self.is_line[b]:
                self.edge[b] = p.edge
                self.lnorm[b] = p.normal(np.array(0.5))
        self.cov = [None] * nb
        for pc in self.pieces:
            self.cov[pc.base_index] = pc.cov
        self.graded = np.array([c.kind != "identity" for c in self.cov])
        self.curves = [b for b in range(nb) if not self.is_line[b]]

    def _groups(self, base):
        for b in self.curves:
            sel = np.nonzero(base == b)[0]
            if len(sel):
                yield b, sel

    def big_theta(self, src, theta):
        return self.a[src] + self.h[src] * theta

    def param(self, src, theta):
        """``(s, ds/dtheta)`` on the base patches of the given pieces."""
        T = np.clip(self.big_theta(src, theta), 0.0, 1.0)
        s = T.copy()
        ds = np.ones_like(T)
        g = self.graded[self.base[src]]
        if np.any(g):
            # all graded patches share one CovSpec
            cov = self.cov[int(self.base[src][g][0])]
            s[g], ds[g] = cov_eval(cov, T[g])
        return s, ds * self.h[src]

    def param_diff(self, base, T1, T2, dT):
        d = dT.copy()
        g = self.graded[base]
        if np.any(g):
            cov = self.cov[int(base[g][0])]
            d[g] = cov_diff(cov, T1[g], T2[g], dT[g])
        return d

    def offset(self, base, s):
        out = s[:, None] * self.edge[base]
        for b, sel in self._groups(base):
            out[sel] = self.bases[b].offset(s[sel])
        return out

    def chord(self, base, s1, s2, ds):
        out = ds[:, None] * self.edge[base]
        for b, sel in self._groups(base):
            out[sel] = self.bases[b].chord(s1[sel], s2[sel], ds[sel])
        return out

    def normal_gap(self, base, s1, s2, ds):
        out = np.zeros(len(base))
        for b, sel in self._groups(base):
            out[sel] = self.bases[b].normal_gap(s1[sel], s2[sel], ds[sel])
        return out

    def normal(self, base, s):
        out = self.lnorm[base].copy()
        for b, sel in self._groups(base):
            out[sel] = self.bases[b].normal(s[sel])
        return out

    def line_element(self, base, s):
        out = np.hypot(self.edge[base, 0], self.edge[base, 1])
        for b, sel in self._groups(base):
            out[sel] = self.bases[b].line_element(s[sel])
        return out


@dataclass
class Jobs:
    """Near-interaction integrals: one per (target, source piece) pair."""

    src: np.ndarray  # source piece
    code: np.ndarray  # SAME (same base patch) or ANCHORED
    anchor: np.ndarray  # (n, 2) target minus source base origin (ANCHORED)
    tnormal: np.ndarray  # (n, 2)
    theta_t: np.ndarray  # local target parameter (SAME)
    da: np.ndarray  # a_target - a_source (SAME)
    s_t: np.ndarray  # base parameter of the target (SAME)
    collinear: np.ndarray  # force zero normal gap
    breaks: list
    target: np.ndarray = None  # target index (node or field point)

    def __len__(self):
        return len(self.src)


class _Integrand:
    def __init__(self, pa: _PatchArrays, jobs: Jobs, k, kernels, Q, jacobian):
        self.pa, self.jobs, self.k, self.kernels, self.Q = pa, jobs, k, tuple(kernels), Q
        self.jacobian = jacobian
        self.ncomp = len(self.kernels) * Q

    def __call__(self, j, theta):
        pa, jb = self.pa, self.jobs
        src = jb.src[j]
        base = pa.base[src]
        s, dsdth = pa.param(src, theta)
        same = jb.code[j] == SAME
        diff = np.empty((len(j), 2))
        gap_t = np.empty(len(j))
        if np.any(same):
            ii = np.nonzero(same)[0]
            jj = j[ii]
            sp = src[ii]
            dT = jb.da[jj] + pa.h[sp] * (jb.theta_t[jj] - theta[ii])
            T1 = pa.big_theta(sp, theta[ii]) + dT
            dpar = pa.param_diff(base[ii], T1, pa.big_theta(sp, theta[ii]), dT)
            st = jb.s_t[jj]
            diff[ii] = pa.chord(base[ii], st, s[ii], dpar)
            gap_t[ii] = pa.normal_gap(base[ii], st, s[ii], dpar)
        if not np.all(same):
            ii = np.nonzero(~same)[0]
            jj = j[ii]
            diff[ii] = jb.anchor[jj] - pa.offset(base[ii], s[ii])
            gap_t[ii] = np.where(jb.collinear[jj], 0.0, np.sum(diff[ii] * jb.tnormal[jj], axis=1))
        dist = np.hypot(diff[:, 0], diff[:, 1])
        need_src = any(n in ("weighted_single_layer", "double_layer") for n in self.kernels)
        ndot = gap_s = None
        if need_src:
            ns = pa.normal(base, s)
            ndot = np.sum(jb.tnormal[j] * ns, axis=1)
            gap_s = np.sum(diff * ns, axis=1)
        K = np.stack(evaluate_kernels(self.k, self.kernels, dist, gap_t, gap_s, ndot), axis=1)
        if self.jacobian:
            K = K * (pa.line_element(base, s) * dsdth)[:, None]
        T = cheb_vandermonde(theta, self.Q)
        return (K[:, :, None] * T[:, None, :]).reshape(len(j), self.ncomp)


@dataclass
class WeightTable:
    """Chebyshev weights ``beta[job, kernel, m]`` for near interactions."""

    k: float
    kernels: tuple
    Q: int
    target: np.ndarray  # (jobs,) target node index
    src: np.ndarray  # (jobs,) source piece
    beta: np.ndarray  # (jobs, kernels, Q)
    flags: np.ndarray  # (jobs,) True where GK did not converge
    jacobian: bool = False
    meta: dict = field(default_factory=dict)

    def kernel_index(self, name):
        return self.kernels.index(name)

    def entry(self, target, src):
        hit = np.nonzero((self.target == target) & (self.src == src))[0]
        if not len(hit):
            raise KeyError(f"no near entry for target {target}, piece {src}")
        return int(hit[0])


def _corner_break(pa, q, radius):
    # local parameter on piece q whose distance to the base origin is about ``radius``
    b = pa.base[q]
    speed = float(np.hypot(*pa.bases[b].deriv(np.array(0.0))))
    s = radius / speed
    if not 0.0 < s < 1.0:
        return None
    T = float(cov_invert(pa.cov[b], np.array(s))) if pa.graded[b] else s
    th = (T - pa.a[q]) / pa.h[q]
    return th if 0.0 < th < 1.0 else None


def _breaks(tb):
    return np.array([0.0, 1.0]) if tb is None else np.array([0.0, tb, 1.0])


def _near_mask(disc, points):
    dist = np.empty((len(points), disc.M))
    for q, pc in enumerate(disc.pieces):
        dist[:, q] = distance_to_piece(points, pc)
    return dist < disc.prox[None, :]


def near_jobs(disc: Discretization):
    """On-surface near interactions: target node on or within ``prox`` of a piece."""
    pa = _PatchArrays(disc)
    M, Q = disc.M, disc.Q
    pos = disc.flat("pos")
    nrm = disc.flat("normal")
    tq = np.repeat(np.arange(M), Q)
    tj = np.tile(np.arange(Q), M)
    near = _near_mask(disc, pos)
    near[np.arange(disc.N), tq] = True
    ti, src = np.nonzero(near)
    n = len(ti)
    code = np.full(n, ANCHORED)
    anchor = np.zeros((n, 2))
    theta_t = np.zeros(n)
    da = np.zeros(n)
    s_t = np.zeros(n)
    breaks = []
    for a in range(n):
        i, qs = ti[a], src[a]
        qt, j = tq[i], tj[i]
        if disc.same_base(qt, qs):
            code[a] = SAME
            theta_t[a] = disc.theta[j]
            da[a] = pa.a[qt] - pa.a[qs]
            s_t[a] = disc.s[qt, j]
            breaks.append(np.array([0.0, disc.theta[j], 1.0]) if qt == qs else _breaks(None))
            continue
        base_s = disc.pieces[qs].base
        if disc.shares_corner(qt, qs):
            anchor[a] = disc.pieces[qt].base.offset(np.array(disc.s[qt, j]))
            tb = _corner_break(pa, qs, float(np.hypot(*anchor[a])))
        else:
            anchor[a] = pos[i] - base_s.point(np.array(0.0))
            tb = None
        breaks.append(_breaks(tb))
    collinear = disc.collinear[tq[ti], src]
    return Jobs(src=src, code=code, anchor=anchor, tnormal=nrm[ti], theta_t=theta_t, da=da, s_t=s_t,
                collinear=collinear, breaks=breaks, target=ti), pa


def precompute_weights(disc: Discretization, k: float, kernels=("adjoint_double_layer", "weighted_single_layer",
                       "single_layer", "regularizer"), engine: GkEngine = GkEngine(), jacobian=False,
                       jobs=None) -> WeightTable:
    """Near-singular Chebyshev weights for every on-surface near interaction.

    With ``jacobian=True`` the line element ``L(s') ds'/dtheta'`` is kept in
    the integrand (used by formulations whose unknown is the plain density).
    """
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    if jobs is None:
        jobs, pa = near_jobs(disc)
    else:
        pa = _PatchArrays(disc)
    f = _Integrand(pa, jobs, k, kernels, disc.Q, jacobian)
    out = gk_batch(f, jobs.breaks, f.ncomp, engine, groups=len(kernels))
    beta = out.values.reshape(len(jobs), len(kernels), disc.Q)
    return WeightTable(k=float(k), kernels=tuple(kernels), Q=disc.Q, target=jobs.target, src=jobs.src,
                       beta=beta, flags=~out.converged, jacobian=jacobian,
                       meta={"rtol": engine.rtol, "atol": engine.atol, "limit": engine.limit})


def offsurface_weights(disc: Discretization, k, points, kernels=("single_layer", "double_layer"),
                       engine: GkEngine = GkEngine(), corner=None, offsets=None, jacobian=False):
    """On-demand Chebyshev weights for field points within ``prox`` of a piece.

    ``corner``/``offsets`` optionally give the points as a corner id plus
    exact offsets from that corner; pieces anchored at that corner then
    form differences without cancellation.

    Returns ``(WeightTable, near_mask)`` with ``near_mask[point, piece]``.
    """
    pa = _PatchArrays(disc)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    near = _near_mask(disc, pts)
    ti, src = np.nonzero(near)
    n = len(ti)
    anchor = np.zeros((n, 2))
    breaks = []
    for a in range(n):
        i, qs = ti[a], src[a]
        tb = None
        if corner is not None and disc.pieces[qs].anchor == corner:
            anchor[a] = np.asarray(offsets, dtype=float)[i]
            tb = _corner_break(pa, qs, float(np.hypot(*anchor[a])))
        else:
            anchor[a] = pts[i] - disc.pieces[qs].base.point(np.array(0.0))
        breaks.append(_breaks(tb))
    jobs = Jobs(src=src, code=np.full(n, ANCHORED), anchor=anchor, tnormal=np.zeros((n, 2)),
                theta_t=np.zeros(n), da=np.zeros(n), s_t=np.zeros(n), collinear=np.zeros(n, bool),
                breaks=breaks, target=ti)
    f = _Integrand(pa, jobs, k, kernels, disc.Q, jacobian)
    out = gk_batch(f, breaks, f.ncomp, engine, groups=len(kernels))
    table = WeightTable(k=float(k), kernels=tuple(kernels), Q=disc.Q, target=ti, src=src,
                        beta=out.values.reshape(n, len(kernels), disc.Q), flags=~out.converged, jacobian=jacobian)
    return table, near


def far_apply(disc: Discretization, k, target, patch, kernel, psi, target_normal=None):
    """Fejer sum ``sum_j H(r, r(theta_j)) psi_j w_j`` over one source patch."""
    r = np.asarray(target, dtype=float)
    diff = r[None, :] - disc.pos[patch]
    d = np.hypot(diff[:, 0], diff[:, 1])
    tn = np.zeros(2) if target_normal is None else np.asarray(target_normal, dtype=float)
    ns = disc.normal[patch]
    K = evaluate_kernels(k, (kernel,), d, diff @ tn, np.sum(diff * ns, axis=1), ns @ tn)[0]
    return np.sum(K * np.asarray(psi) * disc.weights)


def near_apply(table: WeightTable, entry: int, kernel, coeffs):
    """``sum_m a_m beta_m`` for one table entry."""
    return table.beta[entry, table.kernel_index(kernel)] @ np.asarray(coeffs)


# --- binary cache -----------------------------------------------------------

_MAGIC = b"CBWT"
_VERSION = 1


def table_key(disc: Discretization, k, kernels, engine: GkEngine, jacobian=False) -> str:
    """Content hash of everything a weight table depends on."""
    h = hashlib.sha256()
    h.update(repr((disc.boundary.name, sorted(disc.boundary.params.items()), disc.Q, disc.cov, disc.use_cov,
                   tuple(kernels), float(k), engine.rtol, engine.atol, engine.limit, bool(jacobian))).encode())
    for a in (disc.pos, disc.s, disc.prox):
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()


def save_table(path, table: WeightTable, key: str):
    """Little-endian record: magic, version, key, sizes, then the arrays."""
    names = ",".join(table.kernels).encode()
    n = len(table.target)
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    buf.write(bytes.fromhex(key))
    buf.write(struct.pack("<dIIII?", table.k, table.Q, n, len(table.kernels), len(names), table.jacobian))
    buf.write(names)
    buf.write(np.asarray(table.target, "<i8").tobytes())
    buf.write(np.asarray(table.src, "<i8").tobytes())
    buf.write(np.asarray(table.flags, "u1").tobytes())
    buf.write(np.asarray(table.beta, "<c16").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_table(path, key: str = None) -> WeightTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise ValueError("not a weight-table file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported weight-table version {version}")
    stored = raw[8:40].hex()
    if key is not None and stored != key:
        raise ValueError("weight-table key mismatch")
    off = 40
    k, Q, n, nk, ln, jac = struct.unpack_from("<dIIII?", raw, off)
    off += struct.calcsize("<dIIII?")
    kernels = tuple(raw[off:off + ln].decode().split(","))
    off += ln
    target = np.frombuffer(raw, "<i8", n, off).astype(int)
    off += 8 * n
    src = np.frombuffer(raw, "<i8", n, off).astype(int)
    off += 8 * n
    flags = np.frombuffer(raw, "u1", n, off).astype(bool)
    off += n
    beta = np.frombuffer(raw, "<c16", n * nk * Q, off).reshape(n, nk, Q).copy()
    return WeightTable(k=k, kernels=kernels, Q=Q, target=target, src=src, beta=beta, flags=flags, jacobian=bool(jac))
