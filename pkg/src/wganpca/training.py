"""WGAN-WC and WGAN-GP minimax loops for a linear generator on Gaussian data.

The critic ascends ``mean D(real) - mean D(fake)`` (minus the gradient penalty
for GP); the generator descends ``-mean D(G x)``. Logged losses are the
quantities each player *minimizes*: ``critic_loss = -(objective)`` and
``gen_loss = -mean D(fake)``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError
from .gaussian_model import CovarianceModel, SampleSet
from .linalg import frobenius_distance
from .models import CriticNet, LinearGenerator, critic_forward, generator_glorot, glorot_init
from .optimizers import (LrSchedule, OptimizerState, adam_state, clip_weights, lr_at, optimizer_step,
                         rmsprop_state)
from .pca import empirical_pca
from .rng import RngStream, polar_normals

log = logging.getLogger(__name__)

RUNLOG_HEADER = ["gen_iter", "wall_seconds", "frob_to_truth", "frob_to_empirical_pca", "critic_loss", "gen_loss"]


@dataclass
class TrainConfig:
    d: int = 16
    r: int = 4
    n: int = 50000
    batch: int = 200
    algorithm: str = "gp"
    lam: float = 0.1
    c: float = 0.01
    critic_steps_per_gen: int = 5
    adam_betas: tuple = (0.5, 0.9)
    adam_eps: float = 1e-8
    rmsprop_rho: float = 0.9
    lr: float = 1e-3
    lr_decay: float = 0.1
    decay_every_epochs: int = 5
    lr_epoch_iters: int | None = None
    decay_generator: bool = True
    max_gen_iters: int = 3000
    seed: int = 0
    hidden: tuple = (64, 64, 64)
    critic_bias: bool = True
    log_every: int = 10
    record_wall_time: bool = False

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ("gp", "wc"):
            raise ConfigError(f"algorithm must be 'gp' or 'wc', got {self.algorithm!r}")
        if not 1 <= self.r <= self.d:
            raise ConfigError(f"need 1 <= r <= d, got r={self.r}, d={self.d}")
        if self.batch < 1 or self.batch > self.n:
            raise ConfigError(f"need 1 <= batch <= n, got batch={self.batch}, n={self.n}")
        if self.lam <= 0 or self.c <= 0:
            raise ConfigError("lam and c must be positive")
        if self.critic_steps_per_gen < 1 or self.log_every < 1 or self.max_gen_iters < 0:
            raise ConfigError("critic_steps_per_gen and log_every must be >= 1, max_gen_iters >= 0")
        if self.lr <= 0 or self.lr_decay <= 0 or self.decay_every_epochs < 1:
            raise ConfigError("lr and lr_decay must be positive and decay_every_epochs >= 1")
        if self.lr_epoch_iters is not None and self.lr_epoch_iters < 1:
            raise ConfigError("lr_epoch_iters must be >= 1 when set")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.d, *self.hidden, 1]

    def schedule(self) -> LrSchedule:
        """Stepwise decay; an epoch is ``ceil(n / batch)`` generator iterations unless
        ``lr_epoch_iters`` pins it (used to hold the schedule fixed across ``n``)."""
        if self.lr_epoch_iters is not None:
            return LrSchedule(self.lr, self.lr_decay, self.decay_every_epochs, self.lr_epoch_iters)
        return LrSchedule.for_data(self.n, self.batch, initial_lr=self.lr, decay_factor=self.lr_decay,
                                   decay_every_epochs=self.decay_every_epochs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["adam_betas"] = list(self.adam_betas)
        out["hidden"] = list(self.hidden)
        return out


@dataclass(frozen=True)
class LogRecord:
    gen_iter: int
    wall_seconds: float
    frob_to_truth: float
    frob_to_empirical_pca: float
    critic_loss: float
    gen_loss: float


@dataclass
class RunLog:
    records: list[LogRecord] = field(default_factory=list)
    status: str = "ok"

    def append(self, rec: LogRecord) -> None:
        if self.records and rec.gen_iter <= self.records[-1].gen_iter:
            raise ValueError("gen_iter must be strictly increasing")
        self.records.append(rec)

    @property
    def aborted(self) -> bool:
        return self.status != "ok"

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    @property
    def final(self) -> LogRecord:
        return self.records[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUNLOG_HEADER)
        for rec in self.records:
            w.writerow([rec.gen_iter] + [format(float(getattr(rec, k)), ".17g") for k in RUNLOG_HEADER[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != RUNLOG_HEADER:
            raise ValueError(f"unexpected RunLog header {rows[:1]}")
        out = cls()
        for row in rows[1:]:
            if row:
                out.append(LogRecord(int(row[0]), *(float(v) for v in row[1:])))
        return out


@dataclass
class CriticState:
    net: CriticNet
    opt: OptimizerState


@dataclass
class GeneratorState:
    gen: LinearGenerator
    opt: OptimizerState


# --------------------------------------------------------------------------
# objectives and their gradients


def _dual_terms(net: CriticNet, tape: ad.Tape, real, fake, params=None):
    d_real, params = critic_forward(net, real, tape, params)
    d_fake, _ = critic_forward(net, fake, tape, params)
    return ad.sub(ad.mean(d_real), ad.mean(d_fake)), params


def critic_objective_wc(net: CriticNet, real, fake) -> tuple[float, list[np.ndarray]]:
    """Dual objective ``mean D(real) - mean D(fake)`` and its parameter gradient."""
    tape = ad.Tape()
    obj, params = _dual_terms(net, tape, real, fake)
    tape.seal()
    return float(obj.value), ad.backward_grad(tape, obj, params)


def gradient_penalty_terms(net: CriticNet, tape: ad.Tape, x_hat: np.ndarray, params, eps: float = ad.GRADNORM_EPS):
    """Record ``mean((||grad_x D(x_hat_i)|| - 1)^2)`` on an extension of ``tape``.

    Returns ``(penalty, extended_tape, params)``; the penalty variable lives on
    the extended tape and is differentiable with respect to ``params``.
    """
    xv = tape.leaf(x_hat)
    d_hat, params = critic_forward(net, xv, tape, params)
    total = ad.vsum(d_hat)
    ext = tape.extend()
    (gx,) = ad.record_gradients(ext, total, [xv])
    norms = ad.l2norm(gx, eps, axis=1)
    return ad.mean(ad.square(norms - 1.0)), ext, params


def critic_objective_gp(net: CriticNet, real, fake, u, lam: float) -> tuple[float, float, list[np.ndarray]]:
    """Penalized dual objective, the penalty alone, and the objective's parameter gradient.

    ``u`` holds one interpolation weight per sample: ``x_hat = u y + (1-u) y~``.
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise DimensionError(f"real batch {real.shape} vs fake batch {fake.shape}")
    u = np.asarray(u, dtype=np.float64).reshape(-1, 1)
    x_hat = u * real + (1.0 - u) * fake
    tape = ad.Tape()
    params = [tape.leaf(p) for p in net.params()]
    pen, ext, params = gradient_penalty_terms(net, tape, x_hat, params)
    dual, _ = _dual_terms(net, ext, real, fake, params)
    obj = ad.sub(dual, ad.scale(pen, lam))
    ext.seal()
    return float(obj.value), float(pen.value), ad.backward_grad(ext, obj, params)


def generator_objective(gen: LinearGenerator, net: CriticNet, latent) -> tuple[float, np.ndarray]:
    """``-mean D(G x)`` and its gradient with respect to ``G``."""
    tape = ad.Tape()
    g = tape.leaf(gen.g)
    x = tape.const(np.asarray(latent, dtype=np.float64))
    fake = ad.matmul(x, ad.transpose(g))
    params = [tape.const(p) for p in net.params()]
    d_fake, _ = critic_forward(net, fake, tape, params)
    loss = ad.neg(ad.mean(d_fake))
    tape.seal()
    (grad,) = ad.backward_grad(tape, loss, [g])
    return float(loss.value), grad


# --------------------------------------------------------------------------
# single updates


def _mask_bias(grads, config: TrainConfig):
    # a bias-free critic keeps its zero-initialized biases frozen
    if config.critic_bias:
        return grads
    return [g if i % 2 == 0 else np.zeros_like(g) for i, g in enumerate(grads)]


def critic_update_wc(state: CriticState, config: TrainConfig, real_batch, fake_batch, lr: float | None = None):
    """One RMSProp ascent step on the dual objective followed by clipping to ``[-c, c]``.

    Returns ``(new_state, critic_loss)`` where the loss is measured before the step.
    """
    lr = config.lr if lr is None else lr
    obj, grads = critic_objective_wc(state.net, real_batch, fake_batch)
    grads = _mask_bias(grads, config)
    params, opt = optimizer_step(state.opt, state.net.params(), [-g for g in grads], lr)
    params = clip_weights(params, config.c)
    return CriticState(state.net.with_params(params), opt), -obj


def critic_update_gp(state: CriticState, config: TrainConfig, real_batch, fake_batch, rng, lr: float | None = None):
    """One Adam ascent step on the gradient-penalized dual objective.

    ``rng`` is a numpy Generator (or :class:`RngStream`) supplying the
    per-sample interpolation weights. Returns ``(new_state, critic_loss, penalty)``.
    """
    lr = config.lr if lr is None else lr
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    u = gen.random(np.asarray(real_batch).shape[0])
    obj, pen, grads = critic_objective_gp(state.net, real_batch, fake_batch, u, config.lam)
    grads = _mask_bias(grads, config)
    params, opt = optimizer_step(state.opt, state.net.params(), [-g for g in grads], lr)
    return CriticState(state.net.with_params(params), opt), -obj, pen


def generator_update(state: GeneratorState, critic: CriticNet, config: TrainConfig, latent_batch,
                     lr: float | None = None):
    """One optimizer step on ``G`` against a fixed critic; returns ``(new_state, gen_loss)``."""
    lr = config.lr if lr is None else lr
    loss, grad = generator_objective(state.gen, critic, latent_batch)
    (g,), opt = optimizer_step(state.opt, [state.gen.g], [grad], lr)
    return GeneratorState(LinearGenerator(g), opt), loss


# --------------------------------------------------------------------------
# the loop


def _new_optimizer(config: TrainConfig, params) -> OptimizerState:
    if config.algorithm == "gp":
        return adam_state(params, *config.adam_betas, eps=config.adam_eps)
    return rmsprop_state(params, rho=config.rmsprop_rho)


class _BatchStream:
    """Sequential minibatches over a per-epoch shuffle of the real data."""

    def __init__(self, data: np.ndarray, batch: int, gen: np.random.Generator):
        self.data, self.batch, self.gen = data, batch, gen
        self.order = gen.permutation(len(data))
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos >= len(self.data):
            self.order = self.gen.permutation(len(self.data))
            self.pos = 0
        idx = self.order[self.pos:self.pos + self.batch]
        self.pos += self.batch
        return self.data[idx]


def init_states(config: TrainConfig) -> tuple[CriticState, GeneratorState]:
    root = RngStream(config.seed)
    net = glorot_init(config.layer_sizes, root.child(1))
    gen = generator_glorot(config.d, config.r, root.child(2))
    return (CriticState(net, _new_optimizer(config, net.params())),
            GeneratorState(gen, _new_optimizer(config, [gen.g])))


def train(config: TrainConfig, data: SampleSet, cov: CovarianceModel, callback=None):
    """Run the minimax loop; returns ``(generator, RunLog)``.

    ``cov`` is the ground-truth model used only for the ``frob_to_truth`` metric.
    See :func:`train_with_critic` for the variant that also returns the critic.
    """
    gen, _, runlog = train_with_critic(config, data, cov, callback)
    return gen, runlog


def train_with_critic(config: TrainConfig, data: SampleSet, cov: CovarianceModel, callback=None):
    """Run the minimax loop; returns ``(generator, critic, RunLog)``.

    Each generator iteration performs ``critic_steps_per_gen`` critic updates
    on fresh real minibatches and fresh latents, then one generator update.
    Metrics are logged at iteration 0, every ``log_every`` iterations and at
    the end. A non-finite loss or parameter stops the run; the log then
    carries an ``aborted: ...`` status.
    """
    config.validate()
    if data.dim != config.d or data.n != config.n or cov.d != config.d:
        raise ConfigError(f"data ({data.n}x{data.dim}) / covariance (d={cov.d}) do not match config")
    root = RngStream(config.seed)
    critic, gstate = init_states(config)
    batches = _BatchStream(data.samples, config.batch, root.child(3).generator())
    latent_gen = root.child(4).generator()
    interp_gen = root.child(5).generator()
    schedule = config.schedule()
    emp_gram = empirical_pca(data, config.r).generator_gram
    runlog = RunLog()
    t0 = time.perf_counter()
    critic_loss = gen_loss = math.nan

    def record(it):
        gram = gstate.gen.gram()
        wall = time.perf_counter() - t0 if config.record_wall_time else 0.0
        runlog.append(LogRecord(it, wall, frobenius_distance(cov.k_y, gram),
                                frobenius_distance(emp_gram, gram), critic_loss, gen_loss))

    record(0)
    # overflow is detected below and ends the run with a diagnostic status
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, config.max_gen_iters + 1):
            lr = lr_at(schedule, it - 1)
            lr_gen = lr if config.decay_generator else config.lr
            for _ in range(config.critic_steps_per_gen):
                real = batches.next()
                latent = polar_normals(latent_gen, real.shape[0] * config.r).reshape(-1, config.r)
                fake = latent @ gstate.gen.g.T
                if config.algorithm == "gp":
                    critic, critic_loss, _ = critic_update_gp(critic, config, real, fake, interp_gen, lr)
                else:
                    critic, critic_loss = critic_update_wc(critic, config, real, fake, lr)
            latent = polar_normals(latent_gen, config.batch * config.r).reshape(-1, config.r)
            gstate, gen_loss = generator_update(gstate, critic.net, config, latent, lr_gen)
            finite = (np.isfinite(critic_loss) and np.isfinite(gen_loss) and np.all(np.isfinite(gstate.gen.g))
                      and all(np.all(np.isfinite(p)) for p in critic.net.params()))
            if not finite:
                runlog.status = f"aborted: non-finite value at gen_iter {it}"
                log.error(runlog.status)
                record(it)
                break
            if it % config.log_every == 0 or it == config.max_gen_iters:
                record(it)
                if callback is not None:
                    callback(runlog.final)
    return gstate.gen, critic.net, runlog
