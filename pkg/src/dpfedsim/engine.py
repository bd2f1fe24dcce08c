"""Round-based simulation of federated averaging with client-side DP noise.

A run executes T_g rounds. Each round selects a pool of b clients round-robin,
lets every pool client take E full-batch clipped gradient steps from the
current server parameters, adds that client's calibrated noise to the result,
and aggregates the noisy parameters with size weights. Client work inside a
round is embarrassingly parallel; aggregation always reduces in ascending
client-id order, so results are bit-identical at any worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .mechanisms import MechanismSpec, NoiseContext, noise_stream, sample_noise
from .regression import ClientShard, ConfigError, clip_gradient, mse_gradient, ProblemConstants

__all__ = [
    "DivergenceError",
    "Schedule",
    "ClipSpec",
    "FederationConfig",
    "RoundRecord",
    "RunResult",
    "lr_schedule",
    "schedule_offset",
    "select_pool",
    "client_update",
    "aggregate",
    "run_federation",
    "pilot_gradient_bound",
]

# aborts a repeat well before float overflow corrupts the records
PARAM_LIMIT = 1e12


class DivergenceError(RuntimeError):
    """Parameters left the representable range during a run."""


def lr_schedule(k: int, mu: float, gamma: float) -> float:
    """Inverse-decay learning rate 2 / (mu * (k + gamma)), strictly decreasing in k."""
    if not mu > 0:
        raise ConfigError("decay schedule requires mu > 0")
    if gamma < 1:
        raise ConfigError("decay schedule requires gamma >= 1")
    return 2.0 / (mu * (k + gamma))


def schedule_offset(lam: float, mu: float, local_iters: int) -> float:
    """Decay offset gamma = max(8*lambda/mu, E).

    With gamma >= E the rate shrinks by at most a factor 2 across one round,
    which is what the convergence bound and the sensitivity calibration rely
    on.
    """
    if not mu > 0:
        raise ConfigError("schedule offset requires mu > 0")
    return max(8.0 * lam / mu, float(local_iters))


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule: inverse decay (``kind="decay"``) or constant."""

    kind: str
    mu: float | None = None
    gamma: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if self.kind == "decay":
            if self.mu is None or self.gamma is None:
                raise ConfigError("decay schedule needs mu and gamma")
            lr_schedule(0, self.mu, self.gamma)  # validates ranges
        elif self.kind == "constant":
            if self.eta is None or not self.eta > 0:
                raise ConfigError("constant schedule needs eta > 0")
        else:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def decay(cls, mu: float, gamma: float) -> "Schedule":
        return cls(kind="decay", mu=mu, gamma=gamma)

    @classmethod
    def constant(cls, eta: float) -> "Schedule":
        return cls(kind="constant", eta=eta)

    def rate(self, k: int) -> float:
        if self.kind == "decay":
            return lr_schedule(k, self.mu, self.gamma)
        return self.eta


@dataclass(frozen=True)
class ClipSpec:
    """Gradient norm clipping: threshold and which norm it bounds."""

    zeta: float = 150.0
    norm: str = "l1"

    def __post_init__(self):
        if not self.zeta > 0:
            raise ConfigError("clip threshold zeta must be > 0")
        if self.norm not in ("l1", "l2"):
            raise ConfigError(f"unknown clip norm {self.norm!r}")


@dataclass(frozen=True)
class FederationConfig:
    """Everything needed to reproduce one experiment.

    The pool size must divide the client count so the round-robin cycle
    closes, and b*T_g must be a multiple of N so each client participates an
    exact integer number of rounds T_l = b*T_g/N.
    """

    n_clients: int
    pool_size: int
    local_iters: int
    global_iters: int
    schedule: Schedule
    clip: ClipSpec
    mechanism: MechanismSpec = field(default_factory=MechanismSpec)
    theta_0: np.ndarray | None = None
    seed: int = 0
    repeats: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.n_clients < 1 or self.pool_size < 1:
            raise ConfigError("client count and pool size must be >= 1")
        if self.pool_size > self.n_clients:
            raise ConfigError("pool size cannot exceed the client count")
        if self.n_clients % self.pool_size != 0:
            raise ConfigError(
                f"pool size {self.pool_size} must divide the client count {self.n_clients}"
            )
        if self.local_iters < 1 or self.global_iters < 1:
            raise ConfigError("local and global iteration counts must be >= 1")
        if (self.pool_size * self.global_iters) % self.n_clients != 0:
            raise ConfigError(
                "b*T_g must be a multiple of N so each client joins an integer "
                f"number of rounds (b={self.pool_size}, T_g={self.global_iters}, "
                f"N={self.n_clients})"
            )
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.repeats < 1 or self.workers < 1:
            raise ConfigError("repeats and workers must be >= 1")

    @property
    def rounds_per_client(self) -> int:
        return self.pool_size * self.global_iters // self.n_clients

    @property
    def total_iters(self) -> int:
        return self.local_iters * self.global_iters


@dataclass(frozen=True)
class RoundRecord:
    """Telemetry for one global iteration.

    ``k`` is the cumulative iteration index (t+1)*E at recording time and
    ``eta_k`` the first (largest) rate used inside the round, i.e. the rate
    entering the round's sensitivities. ``y_k``/``bound_y_k`` are NaN when the
    optimum or the bound constants are unavailable.
    """

    t: int
    k: int
    eta_k: float
    global_loss: float
    y_k: float
    bound_y_k: float
    noise_l2: float


@dataclass
class RunResult:
    records: list[RoundRecord]
    theta: np.ndarray
    diverged: bool
    trajectory: list[np.ndarray] | None = None


def select_pool(t: int, n_clients: int, pool_size: int) -> list[int]:
    """Round-robin pool for round t: client ids (t*b) mod N ... (t*b+b-1) mod N."""
    if n_clients % pool_size != 0:
        raise ConfigError("pool size must divide the client count")
    return [(t * pool_size + j) % n_clients for j in range(pool_size)]


def _check_params(theta: np.ndarray) -> None:
    if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > PARAM_LIMIT:
        raise DivergenceError("parameters exceeded the divergence limit")


def client_update(
    theta_in: np.ndarray,
    shard: ClientShard,
    t: int,
    local_iters: int,
    schedule: Schedule,
    clip: ClipSpec,
) -> np.ndarray:
    """E clipped full-batch gradient steps with rates eta_{tE} ... eta_{tE+E-1}.

    Returns the pre-noise local parameters; the caller adds the DP noise so
    the server never sees a noiseless upload.
    """
    theta = np.asarray(theta_in, dtype=float)
    k0 = t * local_iters
    for i in range(local_iters):
        grad = clip_gradient(mse_gradient(theta, shard), clip.zeta, clip.norm)
        theta = theta - schedule.rate(k0 + i) * grad
        _check_params(theta)
    return theta


def aggregate(
    noisy_params: list[tuple[np.ndarray, int]],
    n_clients: int,
    pool_size: int,
    n_total: int,
) -> np.ndarray:
    """Server rule (N/b) * sum_l (n_l/n) * theta_l over the pool.

    Entries must already be ordered by ascending client id; the sum runs in
    list order to keep results bit-reproducible.
    """
    if not noisy_params:
        raise ConfigError("cannot aggregate an empty pool")
    if len(noisy_params) != pool_size:
        raise ConfigError(f"expected {pool_size} pool entries, got {len(noisy_params)}")
    acc = np.zeros_like(noisy_params[0][0])
    for theta_l, n_l in noisy_params:
        acc = acc + (n_l / n_total) * theta_l
    return (n_clients / pool_size) * acc


def _noise_context(config: FederationConfig, p: int, eta_tilde: float, n: int,
                   n_bar_sq: float) -> NoiseContext:
    return NoiseContext(
        p=p,
        eta_tilde=eta_tilde,
        E=config.local_iters,
        T_l=config.rounds_per_client,
        T_g=config.global_iters,
        b=config.pool_size,
        N=config.n_clients,
        n=n,
        n_bar_sq=n_bar_sq,
    )


def run_federation(
    config: FederationConfig,
    shards: list[ClientShard],
    constants: ProblemConstants | None = None,
    record_trajectory: bool = False,
) -> RunResult:
    """Execute T_g rounds of noisy federated averaging.

    ``constants`` (when given) supplies the optimum for the y_k column and,
    together with a decay schedule, the per-round convergence bound. The
    result is deterministic in (config, seed) regardless of ``workers``; a
    divergent repeat returns the trajectory up to the last valid round with
    ``diverged=True``.
    """
    shards = sorted(shards, key=lambda s: s.client_id)
    if len(shards) != config.n_clients:
        raise ConfigError(
            f"config expects {config.n_clients} shards, dataset has {len(shards)}"
        )
    if [s.client_id for s in shards] != list(range(config.n_clients)):
        raise ConfigError("shard client ids must be exactly 0..N-1")

    dim = shards[0].dim
    theta = (
        np.zeros(dim)
        if config.theta_0 is None
        else np.asarray(config.theta_0, dtype=float)
    )
    if theta.shape != (dim,):
        raise ConfigError("theta_0 dimension does not match the dataset")

    sizes = [s.n_l for s in shards]
    n = sum(sizes)
    n_bar_sq = sum(s * s for s in sizes) / config.n_clients
    pooled_x = np.concatenate([s.features for s in shards], axis=0)
    pooled_y = np.concatenate([s.targets for s in shards], axis=0)

    bound_params = None
    if (
        constants is not None
        and constants.assumptions_ok
        and config.schedule.kind == "decay"
    ):
        bound_params = bounds.bound_params(
            constants,
            config.mechanism,
            p=dim,
            local_iters=config.local_iters,
            global_iters=config.global_iters,
            n_clients=config.n_clients,
            pool_size=config.pool_size,
        )

    records: list[RoundRecord] = []
    trajectory = [theta.copy()] if record_trajectory else None
    diverged = False

    def round_task(args):
        t, cid = args
        nu = client_update(theta, shards[cid], t, config.local_iters, config.schedule,
                           config.clip)
        noise = sample_noise(
            config.mechanism, round_ctx, noise_stream(config.seed, t, cid)
        )
        return cid, nu + noise, noise

    executor = (
        ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    )
    try:
        for t in range(config.global_iters):
            pool = sorted(select_pool(t, config.n_clients, config.pool_size))
            eta_tilde = config.schedule.rate(t * config.local_iters)
            round_ctx = _noise_context(config, dim, eta_tilde, n, n_bar_sq)

            try:
                tasks = [(t, cid) for cid in pool]
                if executor is None:
                    results = [round_task(a) for a in tasks]
                else:
                    results = list(executor.map(round_task, tasks))
                theta_new = aggregate(
                    [(th, shards[cid].n_l) for cid, th, _ in results],
                    config.n_clients,
                    config.pool_size,
                    n,
                )
                _check_params(theta_new)
            except DivergenceError:
                diverged = True
                break

            noise_agg = aggregate(
                [(w, shards[cid].n_l) for cid, _, w in results],
                config.n_clients,
                config.pool_size,
                n,
            )
            theta = theta_new
            if trajectory is not None:
                trajectory.append(theta.copy())

            k = (t + 1) * config.local_iters
            resid = pooled_x @ theta - pooled_y
            y_k = math.nan
            bound_y_k = math.nan
            if constants is not None:
                diff = theta - constants.theta_star
                y_k = float(diff @ diff)
                if bound_params is not None:
                    bound_y_k = bounds.convergence_bound(k, bound_params, constants.y0)
            records.append(
                RoundRecord(
                    t=t,
                    k=k,
                    eta_k=eta_tilde,
                    global_loss=float(resid @ resid) / n,
                    y_k=y_k,
                    bound_y_k=bound_y_k,
                    noise_l2=float(np.linalg.norm(noise_agg)),
                )
            )
    finally:
        if executor is not None:
            executor.shutdown()

    return RunResult(records=records, theta=theta, diverged=diverged, trajectory=trajectory)


def pilot_gradient_bound(config: FederationConfig, shards: list[ClientShard]) -> float:
    """Max clipped-gradient L2 norm over one noise-free run of the same shape.

    Used to turn the unobservable gradient bound into a concrete number when
    clipping is done in the L1 norm (under L2 clipping the threshold itself is
    the bound). A diverging pilot returns the maximum observed so far: clipped
    norms never exceed the threshold, so the partial measurement still bounds
    every step the real runs will take.
    """
    shards = sorted(shards, key=lambda s: s.client_id)
    dim = shards[0].dim
    theta = (
        np.zeros(dim)
        if config.theta_0 is None
        else np.asarray(config.theta_0, dtype=float)
    )
    sizes = [s.n_l for s in shards]
    n = sum(sizes)
    max_norm = 0.0
    try:
        for t in range(config.global_iters):
            pool = sorted(select_pool(t, config.n_clients, config.pool_size))
            updated = []
            for cid in pool:
                theta_l = theta
                k0 = t * config.local_iters
                for i in range(config.local_iters):
                    grad = clip_gradient(
                        mse_gradient(theta_l, shards[cid]), config.clip.zeta,
                        config.clip.norm,
                    )
                    max_norm = max(max_norm, float(np.linalg.norm(grad)))
                    theta_l = theta_l - config.schedule.rate(k0 + i) * grad
                    _check_params(theta_l)
                updated.append((theta_l, shards[cid].n_l))
            theta = aggregate(updated, config.n_clients, config.pool_size, n)
            _check_params(theta)
    except DivergenceError:
        pass
    return max_norm
