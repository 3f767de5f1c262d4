"""Particle swarm optimization with global-best topology.

Velocity update per particle and iteration:

    v <- w*v + c1*r1*(p - x) + c2*r2*(g - x)
    x <- x + v

where r1, r2 are fresh uniform draws in [0, 1): one scalar per term per
particle by default, or one per dimension with ``per_dimension_rand``. Each
particle owns an RNG stream derived from (seed, particle index), so results
do not depend on evaluation order. Positions initialize uniformly inside the
bounds; velocities start at zero. Positions clamp to the bounds after every
move, zeroing the velocity on any clamped dimension; velocities clamp to a
fraction of the per-dimension range to keep the swarm from exploding.

The inertia weight is either static or linearly interpolated from
``omega_start`` to ``omega_end`` across iterations (exploration early,
exploitation late).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .rng import SeededRng


@dataclass(frozen=True)
class Objective:
    """Deterministic scalar function over a box-bounded search space."""

    name: str
    dim: int
    fn: callable


def sphere(x) -> float:
    """Sum of squares; global minimum 0 at the origin."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * x))


def rastrigin(x) -> float:
    """10*D + sum(x^2 - 10*cos(2*pi*x)); heavily multimodal, minimum 0 at 0."""
    x = np.asarray(x, dtype=np.float64)
    return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def make_objective(name: str, dim: int) -> Objective:
    registry = {"sphere": sphere, "rastrigin": rastrigin}
    if name not in registry:
        raise ValueError(f"unknown objective {name!r}; known: {sorted(registry)}")
    return Objective(name=name, dim=dim, fn=registry[name])


@dataclass
class SwarmConfig:
    n_particles: int = 50
    iterations: int = 100
    omega: float = 0.5
    c1: float = 1.0
    c2: float = 1.0
    bounds: list = field(default_factory=lambda: [(-5.0, 5.0)])  # per dimension
    velocity_clamp_fraction: float = 0.5
    inertia_schedule: str = "static"  # static | linear
    omega_start: float = 0.9
    omega_end: float = 0.4
    per_dimension_rand: bool = False
    seed: int = 0

    def validate(self):
        if self.n_particles <= 0 or self.iterations < 0:
            raise ValueError("particle count must be positive, iterations >= 0")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError(f"inertia must be in (0, 1], got {self.omega}")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("learning factors must be non-negative")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"invalid bound ({lo}, {hi}): need lo < hi")
        if self.inertia_schedule not in ("static", "linear"):
            raise ValueError(f"unknown inertia schedule {self.inertia_schedule!r}")

    def inertia_at(self, iteration: int) -> float:
        if self.inertia_schedule == "static":
            return self.omega
        if self.iterations <= 1:
            return self.omega_start
        frac = iteration / (self.iterations - 1)
        return self.omega_start + (self.omega_end - self.omega_start) * frac


@dataclass
class SwarmState:
    positions: np.ndarray  # (N, D)
    velocities: np.ndarray  # (N, D)
    best_positions: np.ndarray  # (N, D)
    best_values: np.ndarray  # (N,)
    global_best_position: np.ndarray  # (D,)
    global_best_value: float
    iteration: int = 0
    history: list = field(default_factory=list)  # global best after each step


def _particle_streams(cfg: SwarmConfig) -> list:
    base = SeededRng(cfg.seed)
    return [base.split(i) for i in range(cfg.n_particles)]


def init_swarm(cfg: SwarmConfig, obj: Objective, streams=None) -> SwarmState:
    """Uniform positions in bounds, zero velocities, bests at the start."""
    cfg.validate()
    if len(cfg.bounds) != obj.dim:
        raise ValueError(
            f"{len(cfg.bounds)} bounds do not match objective dimension {obj.dim}"
        )
    streams = streams or _particle_streams(cfg)
    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    positions = np.stack(
        [lo + streams[i].uniform(size=obj.dim) * (hi - lo) for i in range(cfg.n_particles)]
    )
    values = np.array([obj.fn(x) for x in positions])
    best_idx = int(np.argmin(values))  # ties: lowest particle index
    return SwarmState(
        positions=positions,
        velocities=np.zeros_like(positions),
        best_positions=positions.copy(),
        best_values=values.copy(),
        global_best_position=positions[best_idx].copy(),
        global_best_value=float(values[best_idx]),
    )


def velocity_update(v, x, p, g, omega, c1, c2, r1, r2):
    """Single-particle velocity rule; exposed for direct verification."""
    return omega * v + c1 * r1 * (p - x) + c2 * r2 * (g - x)


def step(state: SwarmState, cfg: SwarmConfig, obj: Objective, streams) -> SwarmState:
    """Advance one synchronous iteration in place; returns the state."""
    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    v_max = cfg.velocity_clamp_fraction * (hi - lo)
    omega = cfg.inertia_at(state.iteration)
    g = state.global_best_position

    for i in range(cfg.n_particles):
        rand_size = obj.dim if cfg.per_dimension_rand else None
        r1 = streams[i].uniform(size=rand_size)
        r2 = streams[i].uniform(size=rand_size)
        v = velocity_update(
            state.velocities[i], state.positions[i], state.best_positions[i],
            g, omega, cfg.c1, cfg.c2, r1, r2,
        )
        v = np.clip(v, -v_max, v_max)
        x = state.positions[i] + v
        clamped = (x < lo) | (x > hi)
        x = np.clip(x, lo, hi)
        v[clamped] = 0.0
        state.positions[i] = x
        state.velocities[i] = v
        value = obj.fn(x)
        if value < state.best_values[i]:
            state.best_values[i] = value
            state.best_positions[i] = x.copy()

    best_idx = int(np.argmin(state.best_values))
    if state.best_values[best_idx] < state.global_best_value:
        state.global_best_value = float(state.best_values[best_idx])
        state.global_best_position = state.best_positions[best_idx].copy()
    state.iteration += 1
    state.history.append(state.global_best_value)
    return state


def run(cfg: SwarmConfig, obj: Objective):
    """Initialize and iterate. Returns (best position, best value, history)."""
    streams = _particle_streams(cfg)
    state = init_swarm(cfg, obj, streams)
    for _ in range(cfg.iterations):
        step(state, cfg, obj, streams)
    return state.global_best_position, state.global_best_value, list(state.history)


HISTORY_CSV_HEADER = ["run_seed", "iteration", "global_best_value"]


def write_history_csv(path, runs: dict) -> None:
    """Persist per-iteration global bests; ``runs`` maps seed -> history."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_CSV_HEADER)
        for seed in sorted(runs):
            for iteration, value in enumerate(runs[seed]):
                writer.writerow([seed, iteration, repr(float(value))])


# ---------------------------------------------------------------------------
# hyperparameter-space encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperparamPoint:
    """One candidate model configuration."""

    lstm_hidden: int = 128
    lstm_lr: float = 1e-3
    transformer_layers: int = 6
    attention_heads: int = 8
    d_model: int = 256
    transformer_lr: float = 1e-4

    def __post_init__(self):
        if self.d_model % self.attention_heads:
            raise ValueError(
                f"attention_heads {self.attention_heads} must divide "
                f"d_model {self.d_model}"
            )


@dataclass(frozen=True)
class SearchSpace:
    """Admissible values per axis; learning rates live on log10 axes."""

    lstm_hidden: tuple = (16, 32, 64, 128, 256)
    lstm_lr_bounds: tuple = (1e-4, 1e-2)
    transformer_layers: tuple = (1, 2, 3, 4, 5, 6)
    attention_heads: tuple = (2, 4, 8, 16)
    d_model: tuple = (32, 64, 128, 256)
    transformer_lr_bounds: tuple = (1e-5, 1e-3)

    def bounds(self) -> list:
        """PSO box bounds; degenerate axes widen by epsilon to stay valid."""
        raw = [
            (min(self.lstm_hidden), max(self.lstm_hidden)),
            tuple(np.log10(self.lstm_lr_bounds)),
            (min(self.transformer_layers), max(self.transformer_layers)),
            (min(self.attention_heads), max(self.attention_heads)),
            (min(self.d_model), max(self.d_model)),
            tuple(np.log10(self.transformer_lr_bounds)),
        ]
        return [(lo, hi if hi > lo else lo + 1e-9) for lo, hi in raw]


def _nearest(value: float, admissible) -> int:
    ordered = sorted(admissible)
    return int(min(ordered, key=lambda a: (abs(a - value), a)))


def encode_hyperparams(h: HyperparamPoint, space: SearchSpace) -> np.ndarray:
    """Map a point onto the continuous search axes."""
    checks = [
        (h.lstm_hidden, space.lstm_hidden, "lstm_hidden"),
        (h.transformer_layers, space.transformer_layers, "transformer_layers"),
        (h.attention_heads, space.attention_heads, "attention_heads"),
        (h.d_model, space.d_model, "d_model"),
    ]
    for value, admissible, label in checks:
        if value not in admissible:
            raise ValueError(f"{label}={value} not in admissible set {admissible}")
    for value, (lo, hi), label in [
        (h.lstm_lr, space.lstm_lr_bounds, "lstm_lr"),
        (h.transformer_lr, space.transformer_lr_bounds, "transformer_lr"),
    ]:
        if not lo <= value <= hi:
            raise ValueError(f"{label}={value} outside range [{lo}, {hi}]")
    return np.array([
        float(h.lstm_hidden),
        np.log10(h.lstm_lr),
        float(h.transformer_layers),
        float(h.attention_heads),
        float(h.d_model),
        np.log10(h.transformer_lr),
    ])


def decode_position(x: np.ndarray, space: SearchSpace) -> HyperparamPoint:
    """Snap a continuous position back to an admissible configuration.

    Integer axes round to the nearest admissible value; the heads axis snaps
    only to admissible head counts that divide the decoded d_model.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (6,):
        raise ValueError(f"expected a 6-dimensional position, got shape {x.shape}")
    d_model = _nearest(x[4], space.d_model)
    head_choices = [h for h in space.attention_heads if d_model % h == 0]
    if not head_choices:
        raise ValueError(f"no admissible head count divides d_model {d_model}")
    return HyperparamPoint(
        lstm_hidden=_nearest(x[0], space.lstm_hidden),
        lstm_lr=float(10.0 ** x[1]),
        transformer_layers=_nearest(x[2], space.transformer_layers),
        attention_heads=_nearest(x[3], head_choices),
        d_model=d_model,
        transformer_lr=float(10.0 ** x[5]),
    )
