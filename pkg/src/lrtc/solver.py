"""Block proximal solver for double nuclear norm tensor completion.

Every mode ``n`` of the unknown tensor ``Y`` is factored as
``Y_(n) ~ A_n X_n`` and both factors carry a nuclear-norm penalty.  Model 1
minimizes

    sum_n  alpha_n/2 ||Y_(n) - A_n X_n||_F^2 + tau_n ||X_n||_* + lam_n ||A_n||_*

subject to ``P_Omega(Y) = P_Omega(F)``.  Model 2 adds ``mu * TV(X_3)``, the
isotropic total variation of the mode-3 encoding read as ``I1 x I2`` images.

One outer iteration updates the blocks ``X``, ``A`` and ``Y`` in turn, each
through a proximal step.  The nuclear norms are split off with auxiliaries
``Z_n = X_n`` and ``J_n = A_n`` and handled by augmented Lagrangian sweeps.
A sweep is kept only if it does not raise the block's proximal surrogate,
which makes the objective trace monotone.  The TV term of model 2 is
handled by a short inner ADMM in the transposed, Fourier-diagonalized
layout.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from math import prod

import numpy as np

from . import kernels
from .tensor import ObservationMask, check_tensor, fold, project, unfold

log = logging.getLogger(__name__)

__all__ = [
    "NumericalError",
    "SolverConfig",
    "SolverState",
    "Trace",
    "init_state",
    "objective",
    "update_z",
    "update_x_plain",
    "update_x3_tv",
    "update_j",
    "update_a",
    "update_y",
    "update_multipliers",
    "step",
    "run",
    "suggest_ranks",
]


class NumericalError(ArithmeticError):
    """Raised when an update produces NaN or Inf."""

    def __init__(self, update, iteration):
        self.update = update
        self.iteration = iteration
        super().__init__(f"non-finite values produced by {update} at iteration {iteration}")


def _per_mode(value, n, name):
    if np.ndim(value) == 0:
        return (float(value),) * n
    value = tuple(float(v) for v in value)
    if len(value) != n:
        raise ValueError(f"{name} needs {n} entries, got {len(value)}")
    return value


@dataclass
class SolverConfig:
    """Parameters of both models, with defaults set to the reference experiment values.

    Scalars given for per-mode parameters (``alpha``, ``tau``, ``lam``,
    ``rho``) are broadcast over all modes; ``alpha`` defaults to ``1/N``.
    """

    ranks: tuple
    model: int = 1
    alpha: object = None
    tau: object = 0.1
    lam: object = 0.1
    mu: float = 0.5
    beta: float = 10.0
    rho: object = 0.1
    tol: float = 1e-5
    max_outer: int = 1000
    max_inner: int = 10
    inner_tol: float = 1e-4
    adaptive_penalty: bool = False
    penalty_growth: float = 1.5
    penalty_max: float = 1e6
    dual_step: str = "scaled"
    descent_check: bool = True
    max_sweeps: int = 25
    seed: int = 0

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        n = len(self.ranks)
        if n < 2 or any(r < 1 for r in self.ranks):
            raise ValueError(f"invalid ranks {self.ranks}")
        if self.model not in (1, 2):
            raise ValueError(f"model must be 1 or 2, got {self.model}")
        if self.model == 2 and n < 3:
            raise ValueError("model 2 needs a tensor of order >= 3")
        self.alpha = _per_mode(1.0 / n if self.alpha is None else self.alpha, n, "alpha")
        self.tau = _per_mode(self.tau, n, "tau")
        self.lam = _per_mode(self.lam, n, "lam")
        self.rho = _per_mode(self.rho, n, "rho")
        if any(a <= 0 for a in self.alpha) or abs(sum(self.alpha) - 1.0) > 1e-12:
            raise ValueError("alpha must be positive and sum to 1")
        if any(t < 0 for t in self.tau + self.lam):
            raise ValueError("tau and lam must be non-negative")
        if any(r <= 0 for r in self.rho):
            raise ValueError("rho must be positive")
        if self.mu < 0 or self.beta <= 0:
            raise ValueError("mu must be >= 0 and beta > 0")
        if self.tol < 0 or self.max_outer < 1 or self.max_inner < 1 or self.max_sweeps < 1:
            raise ValueError("invalid stopping parameters")
        if self.dual_step not in ("scaled", "unit"):
            raise ValueError("dual_step must be 'scaled' or 'unit'")
        if self.penalty_growth < 1 or self.penalty_max <= 0:
            raise ValueError("invalid adaptive penalty schedule")

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolverState:
    """Iterate ``(X, A, Y)`` with auxiliaries, multipliers and TV-loop state."""

    A: list
    X: list
    Z: list
    J: list
    GX: list
    GA: list
    Y: np.ndarray
    rho: np.ndarray
    # TV inner loop, stored in (I1, I2, S, r3) image layout
    U: tuple = None
    Lam: tuple = None
    iteration: int = 0
    rejected: int = 0

    def copy(self):
        cp = lambda seq: [m.copy() for m in seq]
        return SolverState(
            A=cp(self.A), X=cp(self.X), Z=cp(self.Z), J=cp(self.J),
            GX=cp(self.GX), GA=cp(self.GA), Y=self.Y.copy(), rho=self.rho.copy(),
            U=None if self.U is None else tuple(u.copy() for u in self.U),
            Lam=None if self.Lam is None else tuple(l.copy() for l in self.Lam),
            iteration=self.iteration, rejected=self.rejected,
        )


@dataclass
class Trace:
    """Per-iteration convergence record."""

    objective: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    feasibility: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    converged: bool = False

    COLUMNS = ("iter", "objective", "rel_change", "max_feasibility_residual", "seconds")

    def __len__(self):
        return len(self.objective)

    def append(self, obj, change, feas, secs):
        self.objective.append(float(obj))
        self.rel_change.append(float(change))
        self.feasibility.append(float(feas))
        self.seconds.append(float(secs))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for k in range(len(self)):
            w.writerow([k + 1, repr(self.objective[k]), repr(self.rel_change[k]),
                        repr(self.feasibility[k]), repr(self.seconds[k])])
        return buf.getvalue()


def _tv_layout(dims):
    """Grid and block count of the mode-3 encoding images."""
    return (dims[0], dims[1]), int(prod(dims[3:]))


def init_state(f, mask, config):
    """Seeded uniform factors, ``Z = X``, ``J = A``, zero multipliers, ``Y = P_Omega(F)``."""
    f = check_tensor(f, "observed tensor")
    dims = f.shape
    if len(dims) != len(config.ranks):
        raise ValueError(f"{len(config.ranks)} ranks given for an order-{len(dims)} tensor")
    if tuple(dims) != mask.dims:
        raise ValueError(f"dimension mismatch: tensor {dims} vs mask {mask.dims}")
    for d, r in zip(dims, config.ranks):
        if r > d:
            raise ValueError(f"rank {r} exceeds dimension {d}")
    rng = np.random.default_rng(config.seed)
    total = prod(dims)
    A, X = [], []
    for n, (d, r) in enumerate(zip(dims, config.ranks)):
        A.append(rng.random((d, r)))
        X.append(rng.random((r, total // d)))
    state = SolverState(
        A=A, X=X,
        Z=[x.copy() for x in X], J=[a.copy() for a in A],
        GX=[np.zeros_like(x) for x in X], GA=[np.zeros_like(a) for a in A],
        Y=project(f, mask), rho=np.array(config.rho, dtype=np.float64),
    )
    if config.model == 2:
        grid, blocks = _tv_layout(dims)
        ops = kernels.build_diff_operators(*grid)
        img = kernels.as_images(X[2].T, grid, blocks)
        state.U = (ops.d1(img), ops.d2(img))
        state.Lam = (np.zeros_like(img), np.zeros_like(img))
    return state


def objective(state, config):
    """Model objective at the current ``(X, A, Y)``."""
    total = 0.0
    for n in range(len(state.A)):
        resid = unfold(state.Y, n) - state.A[n] @ state.X[n]
        total += 0.5 * config.alpha[n] * float(np.sum(resid**2))
        if config.tau[n]:
            total += config.tau[n] * kernels.nuclear_norm(state.X[n])
        if config.lam[n]:
            total += config.lam[n] * kernels.nuclear_norm(state.A[n])
    if config.model == 2 and config.mu:
        grid, blocks = _tv_layout(state.Y.shape)
        total += config.mu * kernels.tv_value(state.X[2], grid, blocks)
    return total


def update_z(n, state, config, x=None):
    """``Z_n = SVT_{tau/rho}(X_n + Gamma^X_n / rho)``; `x` overrides ``X_n``."""
    rho = state.rho[n]
    x = state.X[n] if x is None else x
    return kernels.svt(x + state.GX[n] / rho, config.tau[n] / rho)


def update_j(n, state, config, a=None):
    rho = state.rho[n]
    a = state.A[n] if a is None else a
    return kernels.svt(a + state.GA[n] / rho, config.lam[n] / rho)


def _prox_center(new_aux, mult, old, rho):
    # The proximal term and the augmented penalty merge into rho * ||V - O||^2.
    return 0.5 * (new_aux - mult / rho + old)


def update_x_plain(n, state, config, z_new=None):
    """Closed-form ``X_n`` step; `z_new` defaults to ``state.Z[n]``.

    Minimizes ``alpha/2 ||Y_(n) - A_n X||^2 + rho ||X - O_n||^2`` with
    ``O_n = (Z_n - Gamma_n / rho + X_n) / 2``.
    """
    z = state.Z[n] if z_new is None else z_new
    a, rho, alpha = state.A[n], state.rho[n], config.alpha[n]
    center = _prox_center(z, state.GX[n], state.X[n], rho)
    lhs = alpha * (a.T @ a) + 2.0 * rho * np.eye(a.shape[1])
    rhs = alpha * (a.T @ unfold(state.Y, n)) + 2.0 * rho * center
    return np.linalg.solve(lhs, rhs)


def update_x3_tv(state, config, z_new=None, max_inner=None, inner_tol=None):
    """TV-regularized mode-3 encoding step by inner ADMM.

    Solves ``alpha_3/2 ||Y_(3) - A_3 X||^2 + rho_3 ||X - O_3||^2 + mu TV(X)``
    in the transposed layout; dividing by ``alpha_3`` gives the Sylvester
    form with proximal weight ``2 rho_3 / alpha_3`` and TV weight
    ``mu / alpha_3``.  Returns ``(X_3, U, Lam)``, the last two in image layout.
    """
    n = 2
    max_inner = config.max_inner if max_inner is None else max_inner
    inner_tol = config.inner_tol if inner_tol is None else inner_tol
    z = state.Z[n] if z_new is None else z_new
    a3, rho3, alpha = state.A[n], state.rho[n], config.alpha[n]
    grid, blocks = _tv_layout(state.Y.shape)
    ops = kernels.build_diff_operators(*grid)

    rho_s = 2.0 * rho3 / alpha
    mu_s = config.mu / alpha
    beta = config.beta
    center = _prox_center(z, state.GX[n], state.X[n], rho3)
    base = rho_s * center.T + unfold(state.Y, n).T @ a3

    u1, u2 = (u.copy() for u in state.U)
    l1, l2 = (l.copy() for l in state.Lam)
    xh = state.X[n].T
    for p in range(max_inner):
        rhs_img = kernels.as_images(base, grid, blocks) + ops.d1t(beta * u1 - l1) + ops.d2t(beta * u2 - l2)
        xh_new = kernels.sylvester_fft_solve(
            a3.T, kernels.from_images(rhs_img), beta, rho_s, ops, blocks)
        img = kernels.as_images(xh_new, grid, blocks)
        g1, g2 = ops.d1(img), ops.d2(img)
        u1, u2 = kernels.shrink2d(g1 + l1 / beta, g2 + l2 / beta, mu_s / beta)
        l1 = l1 + beta * (g1 - u1)
        l2 = l2 + beta * (g2 - u2)
        change = np.linalg.norm(xh_new - xh) / max(np.linalg.norm(xh), 1e-300)
        xh = xh_new
        if change <= inner_tol:
            break
    return xh.T.copy(), (u1, u2), (l1, l2)


def update_a(n, state, config, j_new=None, x_new=None):
    """Closed-form ``A_n`` step using the freshly updated ``X_n``.

    Minimizes ``alpha/2 ||Y_(n) - A X_n||^2 + rho ||A - O_n^A||^2``.
    """
    j = state.J[n] if j_new is None else j_new
    x = state.X[n] if x_new is None else x_new
    rho, alpha = state.rho[n], config.alpha[n]
    center = _prox_center(j, state.GA[n], state.A[n], rho)
    lhs = alpha * (x @ x.T) + 2.0 * rho * np.eye(x.shape[0])
    rhs = alpha * (unfold(state.Y, n) @ x.T) + 2.0 * rho * center
    # A lhs = rhs with lhs symmetric
    return np.linalg.solve(lhs, rhs.T).T


def update_y(state, config, f, mask):
    """Proximal ``Y`` step with the observed entries pinned to ``F``."""
    dims = state.Y.shape
    if tuple(np.shape(f)) != tuple(dims) or mask.dims != tuple(dims):
        raise ValueError("dimension mismatch between iterate, data and mask")
    acc = np.zeros(dims)
    for n in range(len(dims)):
        rho = state.rho[n]
        prod_n = fold(state.A[n] @ state.X[n], n, dims)
        acc += config.alpha[n] * (prod_n + rho * state.Y) / (1.0 + rho)
    flat = acc.ravel(order="F")
    flat[mask.indices] = np.asarray(f, dtype=np.float64).ravel(order="F")[mask.indices]
    return flat.reshape(dims, order="F")


def _dual_step(n, state, config):
    return state.rho[n] if config is None or config.dual_step == "scaled" else 1.0


def update_multipliers(n, state, config=None):
    """Dual ascent on ``X_n = Z_n`` and ``A_n = J_n``."""
    step = _dual_step(n, state, config)
    gx = state.GX[n] + step * (state.X[n] - state.Z[n])
    ga = state.GA[n] + step * (state.A[n] - state.J[n])
    return gx, ga


def x_block_value(n, x, state, config, center=None):
    """Proximal surrogate of the ``X_n`` block, centred at ``center``."""
    center = state.X[n] if center is None else center
    resid = unfold(state.Y, n) - state.A[n] @ x
    val = 0.5 * config.alpha[n] * float(np.sum(resid**2))
    val += 0.5 * state.rho[n] * float(np.sum((x - center) ** 2))
    if config.tau[n]:
        val += config.tau[n] * kernels.nuclear_norm(x)
    if config.model == 2 and n == 2 and config.mu:
        grid, blocks = _tv_layout(state.Y.shape)
        val += config.mu * kernels.tv_value(x, grid, blocks)
    return val


def a_block_value(n, a, state, config, center=None):
    """Proximal surrogate of the ``A_n`` block, centred at ``center``."""
    center = state.A[n] if center is None else center
    resid = unfold(state.Y, n) - a @ state.X[n]
    val = 0.5 * config.alpha[n] * float(np.sum(resid**2))
    val += 0.5 * state.rho[n] * float(np.sum((a - center) ** 2))
    if config.lam[n]:
        val += config.lam[n] * kernels.nuclear_norm(a)
    return val


def _finite(name, value, k):
    arrays = value if isinstance(value, (tuple, list)) else (value,)
    for v in arrays:
        if not np.all(np.isfinite(v)):
            raise NumericalError(name, k)


def _x_block(n, state, config, k):
    # ALM sweeps (Z_n, X_n, Gamma^X_n) on the X_n proximal subproblem.
    x_prev = state.X[n]
    ref = x_block_value(n, x_prev, state, config) if config.descent_check else None
    x = x_prev
    sweeps = config.max_sweeps if config.descent_check else 1
    for _ in range(sweeps):
        z = update_z(n, state, config, x=x)
        _finite(f"update_z[{n}]", z, k)
        state.Z[n] = z
        if config.model == 2 and n == 2:
            x, state.U, state.Lam = update_x3_tv(state, config)
            _finite("update_x3_tv", (x,) + state.U + state.Lam, k)
        else:
            x = update_x_plain(n, state, config)
            _finite(f"update_x_plain[{n}]", x, k)
        state.GX[n] = state.GX[n] + _dual_step(n, state, config) * (x - z)
        if ref is None or x_block_value(n, x, state, config) <= ref:
            state.X[n] = x
            return True
    return False


def _a_block(n, state, config, k):
    # ALM sweeps (J_n, A_n, Gamma^A_n) on the A_n proximal subproblem.
    a_prev = state.A[n]
    ref = a_block_value(n, a_prev, state, config) if config.descent_check else None
    a = a_prev
    sweeps = config.max_sweeps if config.descent_check else 1
    for _ in range(sweeps):
        j = update_j(n, state, config, a=a)
        _finite(f"update_j[{n}]", j, k)
        state.J[n] = j
        a = update_a(n, state, config)
        _finite(f"update_a[{n}]", a, k)
        state.GA[n] = state.GA[n] + _dual_step(n, state, config) * (a - j)
        if ref is None or a_block_value(n, a, state, config) <= ref:
            state.A[n] = a
            return True
    return False


def step(state, f, mask, config):
    """One outer iteration, updating `state` in place; returns the previous ``Y``.

    Block order is ``X`` (all modes), ``A`` (all modes), then ``Y``.  Each
    mode's multiplier is updated right after its own factor, which is the
    same as updating all multipliers last since nothing in between reads
    them.  With ``descent_check`` a sweep is accepted only if it does not
    increase the block's proximal surrogate; otherwise further sweeps run,
    and the factor is left unchanged if none succeeds.
    """
    k = state.iteration + 1
    N = len(state.A)
    for n in range(N):
        if not _x_block(n, state, config, k):
            state.rejected += 1
    for n in range(N):
        if not _a_block(n, state, config, k):
            state.rejected += 1
    y_old = state.Y
    state.Y = update_y(state, config, f, mask)
    _finite("update_y", state.Y, k)
    if config.adaptive_penalty:
        state.rho = np.minimum(state.rho * config.penalty_growth, config.penalty_max)
    state.iteration = k
    return y_old


def feasibility(state):
    return max(
        max(float(np.linalg.norm(x - z)) for x, z in zip(state.X, state.Z)),
        max(float(np.linalg.norm(a - j)) for a, j in zip(state.A, state.J)),
    )


def run(f, mask, config, callback=None, state=None):
    """Complete `f` from the entries in `mask`.

    Parameters
    ----------
    f : ndarray
        Observed tensor; only entries in `mask` are read.
    mask : ObservationMask
    config : SolverConfig
    callback : callable, optional
        Called as ``callback(state, trace)`` after every outer iteration.
    state : SolverState, optional
        Warm start; defaults to :func:`init_state`.

    Returns
    -------
    Y : ndarray
        Completed tensor; observed entries equal those of `f` exactly.
    trace : Trace
    """
    if not isinstance(mask, ObservationMask):
        raise TypeError("mask must be an ObservationMask")
    f = check_tensor(f, "observed tensor")
    if state is None:
        state = init_state(f, mask, config)
    trace = Trace()
    t0 = time.perf_counter()
    for _ in range(config.max_outer):
        y_old = step(state, f, mask, config)
        change = np.linalg.norm(state.Y - y_old) / max(np.linalg.norm(y_old), 1.0)
        trace.append(objective(state, config), change, feasibility(state),
                     time.perf_counter() - t0)
        if callback is not None:
            callback(state, trace)
        if change <= config.tol:
            trace.converged = True
            break
    log.info("stopped after %d iterations (converged=%s)", len(trace), trace.converged)
    return state.Y, trace


def suggest_ranks(f, mask, energy=0.99):
    """Heuristic mode ranks from the singular-value energy of ``P_Omega(F)``.

    Returns, per mode, the smallest ``r`` whose leading singular values hold
    `energy` of the squared spectrum of the zero-filled unfolding.
    """
    y = project(f, mask)
    ranks = []
    for n in range(y.ndim):
        s2 = np.linalg.svd(unfold(y, n), compute_uv=False) ** 2
        if s2.sum() == 0:
            ranks.append(1)
            continue
        cum = np.cumsum(s2) / s2.sum()
        ranks.append(int(np.searchsorted(cum, energy) + 1))
    return tuple(ranks)
