"""Trajectory and marginal extraction from a completed filter trace.

Four extractors are provided:

* genealogy tracing (``extract_genealogy``) and its Rao-Blackwellisation
  over all ``N`` terminal particles (``genealogy_marginals``);
* backward sampling through the particle backward kernels, either by
  computing the kernel exactly (``sample_backward_exact``) or by
  accept-reject against a bound on the transition density
  (``sample_backward_ar``);
* backward smoothing (``backward_smoothing_marginals``), the
  Rao-Blackwellisation of backward sampling.

Batch samplers return index arrays of shape ``(J, n + 1)``; the single
trajectory functions wrap them in :class:`Trajectory`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .filter import FilterTrace, categorical_inverse_cdf, normalised_weights

__all__ = [
    "DegenerateBackwardKernelError",
    "Trajectory",
    "SmoothingMarginals",
    "BackwardSamplerStats",
    "backward_weights",
    "backward_paths_exact",
    "backward_paths_ar",
    "backward_step_ar",
    "sample_backward_exact",
    "sample_backward_ar",
    "genealogy_paths",
    "extract_genealogy",
    "genealogy_marginals",
    "backward_smoothing_marginals",
    "smoothed_expectation",
    "write_trajectory_csv",
    "write_marginals_csv",
]

DEFAULT_MAX_REJECTIONS = 15


class DegenerateBackwardKernelError(FloatingPointError):
    """No particle at time ``k`` can reach the given state at ``k + 1``."""

    def __init__(self, k):
        self.k = k
        super().__init__(f"backward kernel has no mass at time {k}")


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    backward_indices: np.ndarray

    @classmethod
    def from_indices(cls, trace: FilterTrace, indices) -> Trajectory:
        indices = np.asarray(indices)
        states = np.array([trace.clouds[k].positions[j] for k, j in enumerate(indices)])
        return cls(states, indices)


@dataclass(frozen=True)
class SmoothingMarginals:
    """Per-time probabilities over the particles of each cloud.

    ``weights[k, i]`` is the probability that an extracted trajectory passes
    through particle ``i`` at time ``k``.  ``pairwise[k, i, j]``, when
    present, is the probability of passing through ``i`` at ``k`` and ``j``
    at ``k + 1``.
    """

    weights: np.ndarray
    positions: tuple
    pairwise: np.ndarray | None = None


@dataclass
class BackwardSamplerStats:
    is_proposals: int = 0
    is_accepts: int = 0
    fallbacks: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.is_accepts / self.is_proposals if self.is_proposals else float("nan")

    def __iadd__(self, other):
        self.is_proposals += other.is_proposals
        self.is_accepts += other.is_accepts
        self.fallbacks += other.fallbacks
        return self


def _backward_log_matrix(trace, k, x_next):
    cloud = trace.clouds[k]
    logq = trace.model.pairwise_transition_logdensity(k, cloud.positions, x_next)
    return np.add(logq, cloud.log_weights[:, None], dtype=float)


def _normalise_columns(logm, k, required=None):
    m = logm.max(axis=0)
    bad = ~np.isfinite(m)
    if required is not None:
        bad &= required
    if np.any(bad):
        raise DegenerateBackwardKernelError(k)
    m = np.where(np.isfinite(m), m, 0.0)
    p = np.subtract(logm, m[None, :], out=logm)
    np.exp(p, out=p)
    s = p.sum(axis=0)
    s[s == 0] = 1.0
    p /= s[None, :]
    return p


def backward_weights(trace: FilterTrace, k: int, x_next) -> np.ndarray:
    """Backward-kernel probabilities over the time-``k`` cloud given ``x_next``."""
    if not 0 <= k < trace.n:
        raise IndexError("backward kernel needs 0 <= k < n")
    x_next = np.asarray(x_next)[None, ...]
    return _normalise_columns(_backward_log_matrix(trace, k, x_next), k)[:, 0]


def _columnwise_categorical(probs, u):
    """One draw per column of a column-stochastic matrix."""
    cdf = np.cumsum(probs, axis=0)
    idx = (cdf < u[None, :] * cdf[-1][None, :]).sum(axis=0)
    return np.minimum(idx, probs.shape[0] - 1)


def backward_paths_exact(trace: FilterTrace, rng, J: int = 1) -> np.ndarray:
    """``J`` independent backward index chains using the full backward kernel."""
    n = trace.n
    out = np.empty((J, n + 1), dtype=np.intp)
    out[:, n] = categorical_inverse_cdf(
        normalised_weights(trace.clouds[n].log_weights), rng.random(J)
    )
    for k in range(n - 1, -1, -1):
        x_next = trace.clouds[k + 1].positions[out[:, k + 1]]
        probs = _normalise_columns(_backward_log_matrix(trace, k, x_next), k)
        out[:, k] = _columnwise_categorical(probs, rng.random(J))
    return out


def backward_step_ar(trace, k, x_next, rng, max_rejections=DEFAULT_MAX_REJECTIONS,
                     stats=None, filter_probs=None):
    """Draw one time-``k`` index per entry of ``x_next`` by accept-reject.

    Candidates come from the filter weights at time ``k`` and are accepted
    with probability ``q(candidate, x_next) / bound``.  Entries still
    unresolved after ``max_rejections`` failed proposals are drawn from the
    exact backward kernel.
    """
    model = trace.model
    log_bound = model.log_transition_bound
    if log_bound is None:
        raise ValueError("accept-reject backward sampling needs transition_density_bound")
    if max_rejections < 1:
        raise ValueError("max_rejections must be at least 1")
    stats = stats if stats is not None else BackwardSamplerStats()
    cloud = trace.clouds[k]
    probs = normalised_weights(cloud.log_weights) if filter_probs is None else filter_probs
    x_next = np.asarray(x_next)
    J = len(x_next)
    out = np.full(J, -1, dtype=np.intp)
    pending = np.arange(J)
    for _ in range(max_rejections):
        if len(pending) == 0:
            break
        cand = categorical_inverse_cdf(probs, rng.random(len(pending)))
        log_ratio = model.transition_logdensity(
            k, cloud.positions[cand], x_next[pending]
        ) - log_bound
        if np.any(log_ratio > 1e-9):
            raise ValueError(f"transition density exceeds its declared bound at time {k}")
        accept = np.log(rng.random(len(pending))) < log_ratio
        stats.is_proposals += len(pending)
        stats.is_accepts += int(accept.sum())
        out[pending[accept]] = cand[accept]
        pending = pending[~accept]
    if len(pending):
        stats.fallbacks += len(pending)
        kernel = _normalise_columns(_backward_log_matrix(trace, k, x_next[pending]), k)
        out[pending] = _columnwise_categorical(kernel, rng.random(len(pending)))
    return out, stats


def backward_paths_ar(trace: FilterTrace, rng, J: int = 1,
                      max_rejections: int = DEFAULT_MAX_REJECTIONS):
    """``J`` backward index chains by accept-reject; returns ``(indices, stats)``."""
    if trace.model.transition_density_bound is None:
        raise ValueError("accept-reject backward sampling needs transition_density_bound")
    n = trace.n
    stats = BackwardSamplerStats()
    out = np.empty((J, n + 1), dtype=np.intp)
    out[:, n] = categorical_inverse_cdf(
        normalised_weights(trace.clouds[n].log_weights), rng.random(J)
    )
    for k in range(n - 1, -1, -1):
        x_next = trace.clouds[k + 1].positions[out[:, k + 1]]
        out[:, k], _ = backward_step_ar(trace, k, x_next, rng, max_rejections, stats)
    return out, stats


def sample_backward_exact(trace: FilterTrace, rng) -> Trajectory:
    return Trajectory.from_indices(trace, backward_paths_exact(trace, rng, 1)[0])


def sample_backward_ar(trace: FilterTrace, rng,
                       max_rejections: int = DEFAULT_MAX_REJECTIONS):
    idx, stats = backward_paths_ar(trace, rng, 1, max_rejections)
    return Trajectory.from_indices(trace, idx[0]), stats


def _lineages(trace: FilterTrace) -> np.ndarray:
    """``B[k, j]``: index at time ``k`` of the ancestor of terminal particle ``j``."""
    n, N = trace.n, trace.n_particles
    lineage = np.empty((n + 1, N), dtype=np.intp)
    lineage[n] = np.arange(N)
    for k in range(n, 0, -1):
        lineage[k - 1] = trace.clouds[k].ancestors[lineage[k]]
    return lineage


def genealogy_paths(trace: FilterTrace, rng, J: int = 1, terminal=None) -> np.ndarray:
    """Trace ``J`` terminal particles back through the recorded ancestors.

    Terminal indices are drawn from the final filter weights unless given.
    """
    n = trace.n
    if terminal is None:
        terminal = categorical_inverse_cdf(
            normalised_weights(trace.clouds[n].log_weights), rng.random(J)
        )
    out = np.empty((len(np.atleast_1d(terminal)), n + 1), dtype=np.intp)
    out[:, n] = terminal
    for k in range(n, 0, -1):
        out[:, k - 1] = trace.clouds[k].ancestors[out[:, k]]
    return out


def extract_genealogy(trace: FilterTrace, rng, terminal=None) -> Trajectory:
    return Trajectory.from_indices(trace, genealogy_paths(trace, rng, 1, terminal)[0])


def genealogy_marginals(trace: FilterTrace) -> SmoothingMarginals:
    """Average over all ``N`` genealogical trajectories, weighted by ``w_n``."""
    n, N = trace.n, trace.n_particles
    wn = normalised_weights(trace.clouds[n].log_weights)
    lineage = _lineages(trace)
    v = np.empty((n + 1, N))
    for k in range(n + 1):
        v[k] = np.bincount(lineage[k], weights=wn, minlength=N)
    return SmoothingMarginals(v, tuple(c.positions for c in trace.clouds))


def backward_smoothing_marginals(trace: FilterTrace, pairwise: bool = False):
    """Push the final weights back through the particle backward kernels.

    Dense ``O(n N^2)``.  With ``pairwise=True`` the adjacent-pair weights
    are stored as well (``n * N^2`` floats).
    """
    n, N = trace.n, trace.n_particles
    v = np.empty((n + 1, N))
    v[n] = normalised_weights(trace.clouds[n].log_weights)
    pairs = np.empty((n, N, N)) if pairwise else None
    for k in range(n - 1, -1, -1):
        kernel = _normalise_columns(
            _backward_log_matrix(trace, k, trace.clouds[k + 1].positions), k, v[k + 1] > 0
        )
        v[k] = kernel @ v[k + 1]
        if pairwise:
            pairs[k] = kernel * v[k + 1][None, :]
    return SmoothingMarginals(v, tuple(c.positions for c in trace.clouds), pairs)


def smoothed_expectation(marginals: SmoothingMarginals, h, k: int) -> float:
    """``sum_i v_k^i h(xi_k^i)``; ``h`` must accept an array of states."""
    values = np.asarray(h(marginals.positions[k]), dtype=float)
    return float(marginals.weights[k] @ values)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "x"])
        for k, x in enumerate(traj.states):
            writer.writerow([k, repr(x.item()) if np.ndim(x) == 0 else " ".join(map(repr, x))])


def write_marginals_csv(marginals: SmoothingMarginals, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "i", "v"])
        for k, row in enumerate(marginals.weights):
            for i, value in enumerate(row):
                writer.writerow([k, i, repr(float(value))])
