"""Auxiliary particle filter with recorded genealogy.

Random draws per step happen in a fixed order: ``N`` uniforms for the
ancestor indices first, then whatever the proposal kernel draws for the
``N`` new positions.  A run is therefore bit-reproducible from its
generator state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ObservationRecord, StateSpaceModel

__all__ = [
    "DegenerateCloudError",
    "ParticleCloud",
    "FilterTrace",
    "init_particles",
    "apf_step",
    "run_filter",
    "log_z_estimate",
    "normalised_weights",
    "categorical_inverse_cdf",
    "write_trace_csv",
]


class DegenerateCloudError(FloatingPointError):
    """Every particle at some time step carries zero weight."""

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"all particle weights are zero at time {k}")


@dataclass(frozen=True)
class ParticleCloud:
    """One time slice of the particle system.

    ``ancestors[i]`` is the 0-based index into the previous cloud of the
    particle that ``positions[i]`` was propagated from; it is ``None`` at
    time zero.
    """

    positions: np.ndarray
    log_weights: np.ndarray
    log_adjustment: np.ndarray
    ancestors: np.ndarray | None
    time_index: int

    @property
    def size(self) -> int:
        return len(self.log_weights)

    @property
    def adjustment_weights(self) -> np.ndarray:
        return np.exp(self.log_adjustment)

    def normalised_weights(self) -> np.ndarray:
        return normalised_weights(self.log_weights)


@dataclass(frozen=True)
class FilterTrace:
    """A complete forward pass over ``y_0..y_n``.

    ``per_step_log_norms[k]`` is ``log sum_l w_k^l vartheta_k^l`` for
    ``k < n`` and ``log sum_l w_n^l`` for the final step.
    """

    clouds: tuple
    log_z: float
    per_step_log_norms: np.ndarray
    model: StateSpaceModel
    obs: ObservationRecord

    @property
    def n(self) -> int:
        return len(self.clouds) - 1

    @property
    def n_particles(self) -> int:
        return self.clouds[0].size

    def positions(self, k):
        return self.clouds[k].positions


def logsumexp(log_w) -> float:
    log_w = np.asarray(log_w, dtype=float)
    m = log_w.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(log_w - m).sum()))


def normalised_weights(log_w):
    log_w = np.asarray(log_w, dtype=float)
    m = np.max(log_w)
    if not np.isfinite(m):
        raise FloatingPointError("cannot normalise: no finite log weight")
    w = np.exp(log_w - m)
    return w / w.sum()


def categorical_inverse_cdf(probs, u):
    """Indices ``i`` with ``cdf[i-1] <= u < cdf[i]`` for uniforms ``u``."""
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right")
    return np.minimum(idx, len(cdf) - 1)


def _check_cloud(log_w, k):
    if not np.any(np.isfinite(log_w)):
        raise DegenerateCloudError(k)
    if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise DegenerateCloudError(k, f"non-finite particle weights at time {k}")


def _adjustment(model, k, x, obs):
    if model.adjustment_logweight is None:
        return np.zeros(len(x))
    log_adj = np.broadcast_to(
        np.asarray(model.adjustment_logweight(k, x, obs), dtype=float), (len(x),)
    ).copy()
    if not np.all(np.isfinite(log_adj)):
        raise ValueError(f"adjustment weights must be positive and finite (time {k})")
    return log_adj


def init_particles(model: StateSpaceModel, obs, N: int, rng) -> ParticleCloud:
    """Draw the time-zero cloud and weight it by ``g_0 * d(rho)/d(rho_0)``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    obs = obs if isinstance(obs, ObservationRecord) else ObservationRecord(obs)
    if model.initial_proposal_sample is None:
        x = np.asarray(model.initial_sample(rng, N))
        log_w = np.asarray(model.emission_logdensity(0, x, obs[0]), dtype=float)
    else:
        x = np.asarray(model.initial_proposal_sample(rng, N, obs))
        log_w = (
            model.emission_logdensity(0, x, obs[0])
            + model.initial_logdensity(x)
            - model.initial_proposal_logdensity(x, obs)
        )
    log_w = np.broadcast_to(np.asarray(log_w, dtype=float), (N,)).copy()
    _check_cloud(log_w, 0)
    return ParticleCloud(x, log_w, _adjustment(model, 0, x, obs), None, 0)


def apf_step(model: StateSpaceModel, obs, prev: ParticleCloud, rng) -> ParticleCloud:
    """Select ancestors proportionally to ``w * vartheta`` and propagate."""
    k = prev.time_index
    N = prev.size
    probs = normalised_weights(prev.log_weights + prev.log_adjustment)
    ancestors = categorical_inverse_cdf(probs, rng.random(N))
    parents = prev.positions[ancestors]
    if model.proposal_sample is None:
        x = np.asarray(model.transition_sample(k, parents, rng))
        log_w = np.asarray(model.emission_logdensity(k + 1, x, obs[k + 1]), dtype=float)
    else:
        x = np.asarray(model.proposal_sample(k, parents, obs, rng))
        log_w = (
            model.emission_logdensity(k + 1, x, obs[k + 1])
            + model.transition_logdensity(k, parents, x)
            - model.proposal_logdensity(k, parents, x, obs)
        )
    log_w = np.broadcast_to(np.asarray(log_w, dtype=float), (N,)) - prev.log_adjustment[ancestors]
    _check_cloud(log_w, k + 1)
    return ParticleCloud(x, log_w, _adjustment(model, k + 1, x, obs), ancestors, k + 1)


def run_filter(model: StateSpaceModel, obs, N: int, rng) -> FilterTrace:
    """Run the auxiliary particle filter over the whole record."""
    obs = obs if isinstance(obs, ObservationRecord) else ObservationRecord(obs)
    rng = np.random.default_rng(rng)
    clouds = [init_particles(model, obs, N, rng)]
    for _ in range(obs.n):
        clouds.append(apf_step(model, obs, clouds[-1], rng))
    norms = np.array(
        [logsumexp(c.log_weights + c.log_adjustment) for c in clouds[:-1]]
        + [logsumexp(clouds[-1].log_weights)]
    )
    log_z = float(norms.sum() - len(clouds) * np.log(N))
    return FilterTrace(tuple(clouds), log_z, norms, model, obs)


def log_z_estimate(trace: FilterTrace) -> float:
    """Recompute ``log Z_n^N`` from the stored weights of a trace."""
    clouds = trace.clouds
    total = sum(logsumexp(c.log_weights + c.log_adjustment) for c in clouds[:-1])
    total += logsumexp(clouds[-1].log_weights)
    return float(total - len(clouds) * np.log(trace.n_particles))


def write_trace_csv(trace: FilterTrace, path) -> None:
    """Dump a trace as ``k,i,x...,log_weight,log_adjustment,ancestor`` rows.

    The ancestor column is empty at ``k = 0``.  Vector states are written
    as ``x0,x1,...`` columns.
    """
    d = 1 if np.ndim(trace.clouds[0].positions) == 1 else trace.clouds[0].positions.shape[1]
    xcols = ["x"] if d == 1 else [f"x{j}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "i", *xcols, "log_weight", "log_adjustment", "ancestor"])
        for cloud in trace.clouds:
            pos = np.asarray(cloud.positions).reshape(cloud.size, d)
            for i in range(cloud.size):
                anc = "" if cloud.ancestors is None else int(cloud.ancestors[i])
                writer.writerow(
                    [
                        cloud.time_index,
                        i,
                        *(repr(float(v)) if not trace.model.discrete else int(v) for v in pos[i]),
                        repr(float(cloud.log_weights[i])),
                        repr(float(cloud.log_adjustment[i])),
                        anc,
                    ]
                )
