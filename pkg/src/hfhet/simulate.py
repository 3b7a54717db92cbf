"""Synthetic log-price paths on a uniform grid over [0, 1].

Two base models (constant volatility and a square-root stochastic-variance
model simulated by full-truncation Euler), plus optional compound-Poisson
jump and i.i.d. Gaussian noise overlays. All randomness flows through
numpy Generators; the top-level :func:`simulate` derives one independent
sub-stream per source so toggling an overlay never perturbs the base path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataError, ParameterError

__all__ = [
    "SimGrid",
    "ConstantVol",
    "Heston",
    "JumpSpec",
    "NoiseSpec",
    "ModelSpec",
    "SamplePath",
    "simulate_constant",
    "simulate_heston",
    "overlay_jumps",
    "overlay_noise",
    "simulate",
    "write_path_csv",
    "read_path_csv",
]


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SimGrid:
    """Uniform observation grid: n increments over the unit interval."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ParameterError(f"grid size n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return 1.0 / self.n

    @property
    def times(self) -> np.ndarray:
        """Grid points i/n for i = 0..n."""
        return np.arange(self.n + 1) / self.n


@dataclass(frozen=True)
class ConstantVol:
    """Driftless diffusion with fixed volatility."""

    sigma: float = 1.0
    x0: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be a positive finite number, got {self.sigma!r}")
        _check_finite("x0", self.x0)


@dataclass(frozen=True)
class Heston:
    """Square-root stochastic-variance model with leverage correlation."""

    kappa: float = 5.0
    alpha: float = 0.04
    gamma: float = 5.0
    rho: float = -math.sqrt(0.5)
    x0: float = 1.0
    v0: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "alpha", "gamma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
        if not (math.isfinite(self.rho) and abs(self.rho) <= 1.0):
            raise ParameterError(f"rho must lie in [-1, 1], got {self.rho!r}")
        if not (math.isfinite(self.v0) and self.v0 > 0):
            raise ParameterError(f"v0 must be a positive finite number, got {self.v0!r}")
        _check_finite("x0", self.x0)


@dataclass(frozen=True)
class JumpSpec:
    """Compound-Poisson overlay: intensity per unit time, N(0, sigma_jump^2) sizes."""

    lam: float
    sigma_jump: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ParameterError(f"jump intensity must be >= 0, got {self.lam!r}")
        if not (math.isfinite(self.sigma_jump) and self.sigma_jump >= 0):
            raise ParameterError(f"sigma_jump must be >= 0, got {self.sigma_jump!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. Gaussian observation noise with standard deviation eta."""

    eta: float

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ParameterError(f"eta must be >= 0, got {self.eta!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Base model plus optional overlays; the unit consumed by the MC harness."""

    variant: Union[ConstantVol, Heston]
    jump: Optional[JumpSpec] = None
    noise: Optional[NoiseSpec] = None

    @property
    def label(self) -> str:
        return "constant" if isinstance(self.variant, ConstantVol) else "heston"


@dataclass(frozen=True)
class SamplePath:
    """An equally spaced log-price record on [0, 1].

    ``obs`` holds the n+1 observed values (base path, or base plus
    whichever overlays were applied). ``true_spot_var`` is a simulation
    diagnostic: the spot variance actually used for each grid point.
    """

    grid: SimGrid
    obs: np.ndarray
    true_spot_var: Optional[np.ndarray] = None
    labels: tuple = field(default=())

    def __post_init__(self):
        obs = np.asarray(self.obs, dtype=float)
        if obs.ndim != 1 or obs.shape[0] != self.grid.n + 1:
            raise DataError(
                f"obs must be a 1-d array of length n+1={self.grid.n + 1}, got shape {obs.shape}"
            )
        if not np.all(np.isfinite(obs)):
            raise DataError("obs contains non-finite entries")
        object.__setattr__(self, "obs", obs)
        if self.true_spot_var is not None:
            tsv = np.asarray(self.true_spot_var, dtype=float)
            if tsv.shape != obs.shape:
                raise DataError("true_spot_var must match obs in shape")
            if not np.all(np.isfinite(tsv)) or np.any(tsv < 0):
                raise DataError("true_spot_var must be finite and nonnegative")
            object.__setattr__(self, "true_spot_var", tsv)

    @property
    def n(self) -> int:
        return self.grid.n

    def increments(self) -> np.ndarray:
        return np.diff(self.obs)


def simulate_constant(grid: SimGrid, sigma: float, x0: float, rng: np.random.Generator) -> SamplePath:
    """Constant-volatility base path: obs[i] = obs[i-1] + sigma*sqrt(dt)*xi_i."""
    model = ConstantVol(sigma=sigma, x0=x0)  # reuse its validation
    n = grid.n
    steps = model.sigma * math.sqrt(grid.dt) * rng.standard_normal(n)
    obs = np.empty(n + 1)
    obs[0] = model.x0
    np.cumsum(steps, out=obs[1:])
    obs[1:] += model.x0
    tsv = np.full(n + 1, model.sigma**2)
    return SamplePath(grid=grid, obs=obs, true_spot_var=tsv, labels=("constant",))


def _heston_variance_py(v0, kappa, alpha, gamma, dt, shocks):
    # Absorbed Euler state: negative proposals are clamped to zero before
    # they feed the next step, so the returned path is the variance
    # actually used for the price increments (all entries >= 0).
    n = shocks.shape[0]
    v = np.empty(n + 1)
    vi = v0
    for i in range(n):
        if vi < 0.0:
            vi = 0.0
        v[i] = vi
        vi = vi + kappa * (alpha - vi) * dt + gamma * math.sqrt(vi) * shocks[i]
    v[n] = vi if vi > 0.0 else 0.0
    return v


try:
    from numba import njit

    _heston_variance = njit(cache=True)(_heston_variance_py)
except ImportError:  # pragma: no cover - numba is a declared dependency
    _heston_variance = _heston_variance_py


def simulate_heston(
    grid: SimGrid,
    params: Heston,
    rng: np.random.Generator,
    rng_vol: Optional[np.random.Generator] = None,
) -> SamplePath:
    """Absorbed Euler for the stochastic-variance model.

    The raw variance proposal frequently goes negative (the default
    calibration violates the Feller condition badly); the state is
    clamped at zero before each step, the price increment uses the
    square root of the clamped value, and the recorded spot variance is
    that clamped path.

    Args:
        grid: observation grid.
        params: model coefficients.
        rng: stream driving the price shocks dW.
        rng_vol: stream driving the independent variance shocks dB;
            drawn from ``rng`` when omitted.
    """
    if not isinstance(params, Heston):
        raise ParameterError(f"params must be a Heston instance, got {type(params).__name__}")
    n, dt = grid.n, grid.dt
    sqdt = math.sqrt(dt)
    dw = sqdt * rng.standard_normal(n)
    db = sqdt * (rng_vol or rng).standard_normal(n)
    shocks = params.rho * dw + math.sqrt(1.0 - params.rho**2) * db
    v = _heston_variance(params.v0, params.kappa, params.alpha, params.gamma, dt, shocks)
    obs = np.empty(n + 1)
    obs[0] = params.x0
    np.cumsum(np.sqrt(v[:-1]) * dw, out=obs[1:])
    obs[1:] += params.x0
    return SamplePath(grid=grid, obs=obs, true_spot_var=v, labels=("heston",))


def overlay_jumps(path: SamplePath, lam: float, sigma_jump: float, rng: np.random.Generator) -> SamplePath:
    """Add a compound-Poisson jump path to the observations.

    Draws N ~ Poisson(lam), jump times uniform on [0, 1] and sizes
    N(0, sigma_jump^2). A jump inside ((i-1)/n, i/n] lands in increment i;
    a jump at exactly a grid point i/n is assigned to increment i.
    """
    spec = JumpSpec(lam=lam, sigma_jump=sigma_jump)
    if spec.lam == 0.0:
        return path
    n = path.grid.n
    count = int(rng.poisson(spec.lam))
    jump_path = np.zeros(n + 1)
    if count > 0:
        times = rng.random(count)
        sizes = spec.sigma_jump * rng.standard_normal(count)
        buckets = np.ceil(times * n).astype(np.int64)  # 0 only for t == 0.0 exactly
        np.add.at(jump_path, buckets, sizes)
        np.cumsum(jump_path, out=jump_path)
    return replace(path, obs=path.obs + jump_path, labels=path.labels + ("jumps",))


def overlay_noise(path: SamplePath, eta: float, rng: np.random.Generator) -> SamplePath:
    """Replace each observation by obs[i] + eps_i with eps_i i.i.d. N(0, eta^2)."""
    spec = NoiseSpec(eta=eta)
    if spec.eta == 0.0:
        return path
    eps = spec.eta * rng.standard_normal(path.grid.n + 1)
    return replace(path, obs=path.obs + eps, labels=path.labels + ("noise",))


SeedLike = Union[int, np.random.SeedSequence]

# Fixed order of the per-source sub-streams derived from the master seed.
_STREAM_PRICE, _STREAM_VOL, _STREAM_JUMP, _STREAM_NOISE = range(4)


def simulate(spec: ModelSpec, n: int, seed: SeedLike) -> SamplePath:
    """Simulate one observed path for ``spec`` on a grid of n increments.

    The seed is expanded into four fixed-position sub-streams (price
    shocks, variance shocks, jumps, noise) so that identical
    (spec, n, seed) yield bit-identical paths and enabling an overlay
    leaves the base diffusion untouched.
    """
    grid = SimGrid(n)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = seq.spawn(4)
    rngs = [np.random.default_rng(children[k]) for k in range(4)]
    if isinstance(spec.variant, ConstantVol):
        path = simulate_constant(grid, spec.variant.sigma, spec.variant.x0, rngs[_STREAM_PRICE])
    else:
        path = simulate_heston(grid, spec.variant, rngs[_STREAM_PRICE], rngs[_STREAM_VOL])
    if spec.jump is not None:
        path = overlay_jumps(path, spec.jump.lam, spec.jump.sigma_jump, rngs[_STREAM_JUMP])
    if spec.noise is not None:
        path = overlay_noise(path, spec.noise.eta, rngs[_STREAM_NOISE])
    return path


def write_path_csv(path: SamplePath, stream) -> None:
    """Write a path as CSV: header index,time,obs[,true_spot_var]."""
    has_tsv = path.true_spot_var is not None
    writer = csv.writer(stream, lineterminator="\n")
    header = ["index", "time", "obs"] + (["true_spot_var"] if has_tsv else [])
    writer.writerow(header)
    n = path.grid.n
    for i in range(n + 1):
        row = [str(i), repr(i / n), repr(float(path.obs[i]))]
        if has_tsv:
            row.append(repr(float(path.true_spot_var[i])))
        writer.writerow(row)


def read_path_csv(stream, labels: Sequence[str] = ()) -> SamplePath:
    """Read a path written by :func:`write_path_csv`; '#' lines are skipped."""
    rows = [r for r in csv.reader(stream) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError("empty path CSV")
    header = [c.strip().lower() for c in rows[0]]
    if header[:3] != ["index", "time", "obs"]:
        raise DataError(f"unexpected path CSV header: {rows[0]!r}")
    has_tsv = len(header) > 3 and header[3] == "true_spot_var"
    body = rows[1:]
    if len(body) < 3:
        raise DataError("path CSV must contain at least 3 grid points")
    try:
        obs = np.array([float(r[2]) for r in body])
        tsv = np.array([float(r[3]) for r in body]) if has_tsv else None
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed path CSV row: {exc}") from exc
    return SamplePath(grid=SimGrid(len(body) - 1), obs=obs, true_spot_var=tsv, labels=tuple(labels))
