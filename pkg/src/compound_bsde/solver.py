"""Forward rollout, joint loss, exact gradients and training for compound BSDEs.

All ``M`` backward equations are rolled forward on the same simulated paths.
Stage ``j`` starts from its initial-value head (a bare vector for stage 0,
a network of ``X_{T_{j-1}}`` otherwise) and steps

    Y_{i+1} = Y_i - f_j(t_i, X_i, Y_i, Z_i) h + Z_i dW_i,

with ``Z_i`` from the stage's network of ``(t_i, X_i)``.  The loss sums the
batch-mean squared compounding residuals and the terminal residual, and the
reverse pass runs the Euler recursion backwards by hand.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, NonDiagonalSigma, NonFiniteValue, ShapeMismatch
from .grid import TimeGrid
from .nn import (AdamState, ApproximatorParams, MlpSpec, adam_step, backward, forward,
                 forward_cached, init_params)
from .payoffs import CompoundSpec
from .sde import PathBatch, exact_paths, simulate_forward

log = logging.getLogger(__name__)


def derive_seed(*keys: int) -> int:
    """Deterministic 64-bit sub-seed from a tuple of integers."""
    state = np.random.SeedSequence([int(k) & 0xFFFF_FFFF for k in keys]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


class SolverNets:
    """Trainable parameters of every stage, packed in one flat vector ``theta``.

    Networks see normalised inputs: ``log(x / x0) / (vol * sqrt(T))`` and
    ``t / T``.  Z-network outputs are multiplied by ``x0 * vol`` per asset so
    the raw outputs are on the scale of a delta.
    """

    def __init__(self, spec: CompoundSpec, widths=None, theta: np.ndarray | None = None):
        self.spec = spec
        model, grid = spec.model, spec.grid
        d1, d2, m = model.dim, spec.value_dim, spec.n_stages
        if widths is None:
            widths = (10 + d1, 10 + d1)
        self.widths = tuple(int(w) for w in widths)
        self.d1, self.d2, self.n_stages = d1, d2, m
        self.maturity = grid.maturity
        self.x_ref = model.x0.copy()
        vols = np.maximum(model.vols, 1e-3)
        self.x_scale = vols * np.sqrt(grid.maturity)
        self.z_scale = model.x0 * vols
        self.head_spec = MlpSpec(d1, d2, self.widths)
        self.z_spec = MlpSpec(1 + d1, d2 * d1, self.widths)

        sizes = [d2] + [self.head_spec.n_params] * (m - 1) + [self.z_spec.n_params] * m
        self.n_params = int(sum(sizes))
        self.theta = np.zeros(self.n_params) if theta is None else np.asarray(theta, dtype=float)
        if self.theta.shape != (self.n_params,):
            raise ShapeMismatch(f"theta has shape {self.theta.shape}, expected ({self.n_params},)")
        self.slices: list[slice] = []
        pos = 0
        for s in sizes:
            self.slices.append(slice(pos, pos + s))
            pos += s
        self.y0 = self.theta[self.slices[0]]
        self.heads: list[ApproximatorParams | None] = [None]
        for j in range(1, m):
            self.heads.append(ApproximatorParams(self.head_spec, self.theta[self.slices[j]]))
        self.z_nets = [ApproximatorParams(self.z_spec, self.theta[self.slices[m + j]]) for j in range(m)]

    @classmethod
    def create(cls, spec: CompoundSpec, seed: int, widths=None, y_init=0.0) -> "SolverNets":
        nets = cls(spec, widths)
        nets.y0[...] = y_init
        for j, head in enumerate(nets.heads):
            if head is not None:
                init_params(head.spec, derive_seed(seed, 10, j), out=head.flat)
        for j, z in enumerate(nets.z_nets):
            init_params(z.spec, derive_seed(seed, 20, j), out=z.flat)
        return nets

    def copy(self) -> "SolverNets":
        return SolverNets(self.spec, self.widths, self.theta.copy())

    def stage_slices(self, j: int) -> list[slice]:
        """Parameter slices owned by stage ``j``: initial-value head and Z-network."""
        return [self.slices[j], self.slices[self.n_stages + j]]

    def x_features(self, x: np.ndarray) -> np.ndarray:
        return np.log(x / self.x_ref) / self.x_scale

    def tx_features(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``x`` of shape ``(..., d1)`` and ``t`` broadcastable to ``x[..., 0]``."""
        tt = np.broadcast_to(np.asarray(t, dtype=float) / self.maturity, x.shape[:-1])[..., None]
        return np.concatenate([tt, self.x_features(x)], axis=-1)

    def initial_value(self, j: int, x: np.ndarray) -> np.ndarray:
        if j == 0:
            return np.broadcast_to(self.y0, (x.shape[0], self.d2)).copy()
        return forward(self.heads[j], self.x_features(x))

    def z_value(self, j: int, t, x: np.ndarray) -> np.ndarray:
        """Z of stage ``j`` at time(s) ``t`` for states ``x`` of shape ``(B, d1)``."""
        out = forward(self.z_nets[j], self.tx_features(t, x))
        return out.reshape(x.shape[0], self.d2, self.d1) * self.z_scale


@dataclass
class RolloutResult:
    Y: list[np.ndarray]  # per stage (B, N_j + 1, d2)
    Z: list[np.ndarray]  # per stage (B, N_j, d2, d1)
    residuals: list[np.ndarray]  # per stage (B, d2)
    caches: list = field(default_factory=list, repr=False)

    @property
    def loss_terms(self) -> list[float]:
        return [float(np.mean(np.sum(r * r, axis=1))) for r in self.residuals]


def _check_paths(spec: CompoundSpec, paths: PathBatch):
    n, d = spec.grid.n_steps, spec.model.dim
    if paths.states.shape[1:] != (n + 1, d) or paths.increments.shape[1:] != (n, d):
        raise ShapeMismatch(f"paths {paths.states.shape} do not fit grid N={n}, d1={d}")


def rollout(spec: CompoundSpec, nets: SolverNets, paths: PathBatch, keep_cache: bool = False) -> RolloutResult:
    """Roll every stage forward on ``paths`` and form the residuals."""
    _check_paths(spec, paths)
    grid = spec.grid
    X, dW = paths.states, paths.increments
    B, d1, d2, h = X.shape[0], nets.d1, nets.d2, grid.h
    t_grid = grid.times
    Ys, Zs, caches = [], [], []
    for j in range(spec.n_stages):
        s, e = grid.stage_slice(j)
        n_j = e - s
        if j == 0:
            y = np.broadcast_to(nets.y0, (B, d2)).copy()
            head_cache = None
        else:
            feats = nets.x_features(X[:, s, :])
            y, head_cache = forward_cached(nets.heads[j], feats)
            head_cache = (feats, head_cache)
        z_in = nets.tx_features(t_grid[s:e][None, :], X[:, s:e, :]).reshape(B * n_j, 1 + d1)
        z_out, z_cache = forward_cached(nets.z_nets[j], z_in)
        Z = z_out.reshape(B, n_j, d2, d1) * nets.z_scale
        Y = np.empty((B, n_j + 1, d2))
        Y[:, 0] = y
        driver = spec.drivers[j]
        for k in range(n_j):
            i = s + k
            yk = Y[:, k]
            Y[:, k + 1] = (yk - driver(t_grid[i], X[:, i], yk, Z[:, k]) * h
                           + np.einsum("bac,bc->ba", Z[:, k], dW[:, i]))
        Ys.append(Y)
        Zs.append(Z)
        caches.append((head_cache, z_in, z_cache) if keep_cache else None)

    residuals = []
    for j, cond in enumerate(spec.conditions):
        e = grid.boundaries[j + 1]
        if cond.is_terminal:
            target = cond(X[:, e])
        else:
            target = cond(X[:, e], Ys[j + 1][:, 0])
        residuals.append(target - Ys[j][:, -1])
    result = RolloutResult(Ys, Zs, residuals, caches if keep_cache else [])
    if not all(np.all(np.isfinite(r)) for r in residuals):
        raise NonFiniteValue("rollout produced non-finite values")
    return result


def loss(result: RolloutResult) -> float:
    """Sum over stages of the batch-mean squared residual norm."""
    return float(sum(result.loss_terms))


def loss_and_grad(spec: CompoundSpec, nets: SolverNets, paths: PathBatch) -> tuple[float, np.ndarray, RolloutResult]:
    """Loss and its exact gradient w.r.t. ``nets.theta`` (reverse mode through the rollout)."""
    res = rollout(spec, nets, paths, keep_cache=True)
    grid = spec.grid
    X, dW = paths.states, paths.increments
    B, h = X.shape[0], grid.h
    t_grid = grid.times
    grad = np.zeros_like(nets.theta)
    m = spec.n_stages

    d_res = [2.0 * r / B for r in res.residuals]
    # adjoint arriving at each stage's initial value through the previous condition
    d_start = [None] * m
    for j, cond in enumerate(spec.conditions[:-1]):
        e = grid.boundaries[j + 1]
        d_start[j + 1] = cond.vjp_y(X[:, e], res.Y[j + 1][:, 0], d_res[j])

    for j in range(m):
        s, e = grid.stage_slice(j)
        n_j = e - s
        Y, Z = res.Y[j], res.Z[j]
        driver = spec.drivers[j]
        lam = -d_res[j]
        gZ = np.empty_like(Z)
        for k in range(n_j - 1, -1, -1):
            i = s + k
            adj_y, adj_z = driver.vjp(t_grid[i], X[:, i], Y[:, k], Z[:, k], lam)
            gz = lam[:, :, None] * dW[:, i][:, None, :]
            if adj_z is not None:
                gz = gz - h * adj_z
            gZ[:, k] = gz
            lam = lam - h * adj_y
        if d_start[j] is not None:
            lam = lam + d_start[j]

        head_cache, z_in, z_cache = res.caches[j]
        if j == 0:
            grad[nets.slices[0]] = lam.sum(axis=0)
        else:
            feats, cache = head_cache
            grad[nets.slices[j]] = backward(nets.heads[j], feats, lam, cache=cache)
        up = (gZ * nets.z_scale).reshape(B * n_j, -1)
        grad[nets.slices[m + j]] = backward(nets.z_nets[j], z_in, up, cache=z_cache)
    return loss(res), grad, res


def stage_gradient_norms(nets: SolverNets, grad: np.ndarray) -> list[float]:
    return [float(np.sqrt(sum(np.sum(grad[s] ** 2) for s in nets.stage_slices(j))))
            for j in range(nets.n_stages)]


@dataclass
class TrainConfig:
    iters: int = 4000
    batch: int = 5000
    valid_size: int = 5000
    lr0: float = 0.01
    decay_rate: float = 0.5
    decay_steps: int | None = None  # default: iters // 5
    widths: tuple[int, ...] | None = None
    y_init: float = 0.0
    log_every: int = 200

    def resolved_decay_steps(self) -> int:
        return self.decay_steps or max(1, self.iters // 5)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["decay_steps"] = self.resolved_decay_steps()
        out["widths"] = list(self.widths) if self.widths else None
        return out


@dataclass
class TrainReport:
    losses: list[float]
    valid_history: list[tuple[int, float, float]]  # (iteration, validation loss, Y_1,0)
    valid_loss: float
    wall_clock: float
    config: dict
    seed: int
    price: float
    delta: list[float]

    def to_dict(self) -> dict:
        return {"losses": self.losses, "valid_history": [list(v) for v in self.valid_history],
                "valid_loss": self.valid_loss, "wall_clock": self.wall_clock, "config": self.config,
                "seed": self.seed, "price": self.price, "delta": self.delta}


def train(spec: CompoundSpec, seed: int, iters: int | None = None, batch: int | None = None,
          config: TrainConfig | None = None, callback=None) -> tuple[SolverNets, TrainReport]:
    """Train all stages jointly with Adam on fresh path batches."""
    cfg = config or TrainConfig()
    if iters is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "iters": int(iters)})
    if batch is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "batch": int(batch)})
    if cfg.iters < 1:
        raise ValueError("iters must be >= 1")
    start = time.perf_counter()
    nets = SolverNets.create(spec, derive_seed(seed, 0), cfg.widths, cfg.y_init)
    state = AdamState.zeros(nets.n_params, lr0=cfg.lr0, decay_rate=cfg.decay_rate,
                            decay_steps=cfg.resolved_decay_steps())
    valid = simulate_forward(spec.model, spec.grid, cfg.valid_size, derive_seed(seed, 2))
    losses, history = [], []
    for k in range(cfg.iters):
        paths = simulate_forward(spec.model, spec.grid, cfg.batch, derive_seed(seed, 1, k))
        value, grad, _ = loss_and_grad(spec, nets, paths)
        if not np.isfinite(value):
            raise Diverged(f"loss became non-finite at iteration {k}")
        adam_step(nets.theta, state, grad)
        losses.append(value)
        if (k + 1) % cfg.log_every == 0 or k == cfg.iters - 1:
            v = loss(rollout(spec, nets, valid))
            history.append((k + 1, v, float(nets.y0[0])))
            log.info("iter %5d  loss %.4e  valid %.4e  Y0 %.5f  lr %.2e",
                     k + 1, value, v, nets.y0[0], state.learning_rate())
            if callback is not None:
                callback(k + 1, nets, v)
    valid_loss = history[-1][1]
    price, delta = extract_price_and_delta(spec, nets)
    report = TrainReport(losses=losses, valid_history=history, valid_loss=valid_loss,
                         wall_clock=time.perf_counter() - start, config=cfg.to_dict(), seed=int(seed),
                         price=price, delta=delta.tolist())
    return nets, report


def extract_price_and_delta(spec: CompoundSpec, nets: SolverNets) -> tuple[float, np.ndarray]:
    """Price ``Y_{1,0}`` and delta from ``Z_{1,0} = delta^T diag(x0) Sigma``."""
    model = spec.model
    x0 = model.x0[None, :]
    z = nets.z_value(0, 0.0, x0)[0, 0]  # first value component, shape (d1,)
    if model.is_diagonal:
        scale = model.x0 * np.diag(model.sigma)
        if np.any(scale == 0):
            raise NonDiagonalSigma("zero volatility: delta is not identifiable from Z")
        delta = z / scale
    else:
        try:
            delta = np.linalg.solve((model.x0[:, None] * model.sigma).T, z)
        except np.linalg.LinAlgError as exc:
            raise NonDiagonalSigma("diag(x0) Sigma is singular") from exc
    return float(nets.y0[0]), delta


@dataclass
class ErrorReport:
    err_x: float
    err_y: float
    err_z: float
    total: float
    loss: float
    h: float

    @classmethod
    def build(cls, err_x, err_y, err_z, loss_value, h) -> "ErrorReport":
        err_x, err_y, err_z = float(err_x), float(err_y), float(err_z)
        return cls(err_x, err_y, err_z, err_x + err_y + err_z, float(loss_value), float(h))

    def to_dict(self) -> dict:
        return {"err_x": self.err_x, "err_y": self.err_y, "err_z": self.err_z,
                "total": self.total, "loss": self.loss, "h": self.h, "bound": self.h + self.loss}


def error_metrics(spec: CompoundSpec, nets, reference, eval_batch: int, seed: int,
                  paths: PathBatch | None = None) -> ErrorReport:
    """Pathwise errors against ``reference(j, t, x) -> (Y, Z)``.

    The reference forward path is the exact GBM driven by the same increments.
    ``nets`` is either trained ``SolverNets`` or any object with the same
    ``initial_value``/``z_value`` methods.
    """
    from .errors import ReferenceUnavailable

    if reference is None:
        raise ReferenceUnavailable("no reference surface for this problem")
    grid = spec.grid
    if paths is None:
        paths = simulate_forward(spec.model, grid, eval_batch, seed)
    res = _rollout_generic(spec, nets, paths)
    X_ref = exact_paths(spec.model, grid, paths.increments)
    return pathwise_errors(spec, X_ref, paths.states, res, reference)


def pathwise_errors(spec: CompoundSpec, X_ref: np.ndarray, X_pi: np.ndarray, res: RolloutResult,
                    reference) -> ErrorReport:
    """Err(X), Err(Y), Err(Z) of a rollout ``res`` on ``X_pi`` against ``reference`` on ``X_ref``.

    Err(X) and Err(Y) take the maximum over grid points (and stages) of the
    batch-mean squared gap; Err(Z) sums it times ``h`` over each stage's steps.
    """
    grid = spec.grid
    err_x = float(np.max(np.mean(np.sum((X_ref - X_pi) ** 2, axis=2), axis=0)))
    err_y, err_z = 0.0, 0.0
    for j in range(spec.n_stages):
        s, e = grid.stage_slice(j)
        for k, i in enumerate(range(s, e + 1)):
            y_ref, z_ref = reference(j, float(grid.times[i]), X_ref[:, i])
            err_y = max(err_y, float(np.mean(np.sum((y_ref - res.Y[j][:, k]) ** 2, axis=1))))
            if i < e:
                gap = z_ref - res.Z[j][:, k]
                err_z += float(np.mean(np.sum(gap * gap, axis=(1, 2)))) * grid.h
    return ErrorReport.build(err_x, err_y, err_z, loss(res), grid.h)


def _rollout_generic(spec: CompoundSpec, nets, paths: PathBatch) -> RolloutResult:
    if isinstance(nets, SolverNets):
        return rollout(spec, nets, paths)
    # duck-typed approximators (e.g. the reference surface itself)
    grid = spec.grid
    X, dW = paths.states, paths.increments
    Ys, Zs = [], []
    for j in range(spec.n_stages):
        s, e = grid.stage_slice(j)
        Y = np.empty((X.shape[0], e - s + 1, spec.value_dim))
        Z = np.empty((X.shape[0], e - s, spec.value_dim, spec.model.dim))
        Y[:, 0] = nets.initial_value(j, X[:, s])
        for k, i in enumerate(range(s, e)):
            Z[:, k] = nets.z_value(j, grid.times[i], X[:, i])
            Y[:, k + 1] = (Y[:, k] - spec.drivers[j](grid.times[i], X[:, i], Y[:, k], Z[:, k]) * grid.h
                           + np.einsum("bac,bc->ba", Z[:, k], dW[:, i]))
        Ys.append(Y)
        Zs.append(Z)
    residuals = []
    for j, cond in enumerate(spec.conditions):
        e = grid.boundaries[j + 1]
        target = cond(X[:, e]) if cond.is_terminal else cond(X[:, e], Ys[j + 1][:, 0])
        residuals.append(target - Ys[j][:, -1])
    return RolloutResult(Ys, Zs, residuals)
