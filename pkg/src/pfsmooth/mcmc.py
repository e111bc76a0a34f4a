"""Metropolised particle smoothers.

The chain state is a whole particle system.  A sweep runs a fresh filter,
accepts it with the likelihood-estimate ratio, and then extracts smoothed
estimates from whichever particle system is current, by one or more of

``gt``      one trajectory traced through the genealogy,
``gtrb``    the weighted average over all genealogical trajectories,
``bs:J``    ``J`` independent backward-sampled trajectories,
``bsm``     backward smoothing marginals.

On rejection the retained system is re-extracted with fresh randomness.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .filter import DegenerateCloudError, FilterTrace, run_filter
from .model import ObservationRecord, StateSpaceModel
from .smoother import (
    DEFAULT_MAX_REJECTIONS,
    BackwardSamplerStats,
    backward_paths_ar,
    backward_paths_exact,
    backward_smoothing_marginals,
    genealogy_marginals,
    genealogy_paths,
)

__all__ = [
    "ExtractionMode",
    "ChainState",
    "SweepRecord",
    "ParameterModel",
    "log_random_walk",
    "ChainConfig",
    "ChainResult",
    "mh_accept",
    "extract",
    "imh_sweep",
    "pmmh_sweep",
    "initial_state",
    "run_chain",
    "check_weight_growth",
]

logger = logging.getLogger(__name__)

_KINDS = ("gt", "gtrb", "bs", "bsm")


@dataclass(frozen=True)
class ExtractionMode:
    kind: str
    J: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown extraction mode {self.kind!r}")
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if self.kind != "bs" and self.J != 1:
            raise ValueError("only backward sampling takes a trajectory count")

    @classmethod
    def parse(cls, text: str) -> ExtractionMode:
        """Parse ``gt``, ``gtrb``, ``bsm``, ``bs`` or ``bs:J``."""
        kind, _, count = text.strip().lower().partition(":")
        if kind == "bs":
            return cls("bs", int(count) if count else 25)
        if count:
            raise ValueError(f"mode {kind!r} takes no count")
        return cls(kind)

    @property
    def label(self) -> str:
        return f"bs{self.J}" if self.kind == "bs" else self.kind

    def __str__(self):
        return f"bs:{self.J}" if self.kind == "bs" else self.kind


def _as_modes(modes) -> tuple:
    out = tuple(m if isinstance(m, ExtractionMode) else ExtractionMode.parse(m) for m in modes)
    labels = [m.label for m in out]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate extraction modes")
    return out


@dataclass(frozen=True)
class ChainState:
    trace: FilterTrace
    log_z: float
    theta: np.ndarray | None = None
    sweep_index: int = 0


@dataclass
class SweepRecord:
    sweep: int
    accepted: bool
    log_z: float
    log_z_proposed: float
    estimates: dict = field(default_factory=dict)
    within_var: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    tau_pf: float = 0.0
    tau: dict = field(default_factory=dict)
    is_stats: BackwardSamplerStats = field(default_factory=BackwardSamplerStats)
    theta: np.ndarray | None = None
    max_log_weight: float = -np.inf


@dataclass(frozen=True)
class ParameterModel:
    """Prior and random-walk proposal for the PMMH parameter update.

    ``proposal_logdensity(to, frm)`` is the log density of proposing
    ``to`` from ``frm``.
    """

    prior_logdensity: Callable
    proposal_sample: Callable
    proposal_logdensity: Callable
    in_support: Callable | None = None

    def supports(self, theta) -> bool:
        if self.in_support is not None and not self.in_support(theta):
            return False
        return bool(np.isfinite(self.prior_logdensity(theta)))


def log_random_walk(prior_logdensity, scale) -> ParameterModel:
    """Gaussian random walk on ``log theta`` for positive parameters."""
    scale = np.asarray(scale, dtype=float)

    def sample(theta, rng):
        theta = np.asarray(theta, dtype=float)
        return theta * np.exp(scale * rng.standard_normal(theta.shape))

    def logdensity(to, frm):
        to = np.asarray(to, dtype=float)
        frm = np.asarray(frm, dtype=float)
        z = (np.log(to) - np.log(frm)) / scale
        return float(np.sum(-0.5 * z**2 - np.log(scale) - 0.5 * np.log(2 * np.pi) - np.log(to)))

    return ParameterModel(
        prior_logdensity,
        sample,
        logdensity,
        in_support=lambda theta: bool(np.all(np.asarray(theta) > 0)),
    )


def mh_accept(log_ratio: float, u: float) -> bool:
    """Accept iff ``u < min(1, exp(log_ratio))``; ``nan`` ratios reject."""
    if np.isnan(log_ratio):
        return False
    return bool(np.log(u) < log_ratio)


def _identity(x):
    return x


def extract(trace: FilterTrace, modes, rng, h=None,
            max_rejections: int = DEFAULT_MAX_REJECTIONS, backward: str = "auto",
            keep_trajectories: bool = False) -> SweepRecord:
    """Run every extraction mode on one particle system.

    Returns a partially filled :class:`SweepRecord` carrying the per-time
    estimates of ``E[h(X_k) | y]``, within-system sample variances of the
    backward-sampled values, optional raw trajectories and per-mode wall
    times in seconds.
    """
    h = h or _identity
    modes = _as_modes(modes)
    rec = SweepRecord(sweep=0, accepted=False, log_z=trace.log_z, log_z_proposed=np.nan)
    n = trace.n
    use_ar = backward == "ar" or (
        backward == "auto" and trace.model.transition_density_bound is not None
    )
    for mode in modes:
        t0 = time.perf_counter()
        if mode.kind == "gt":
            idx = genealogy_paths(trace, rng, 1)[0]
            est = np.array([h(trace.clouds[k].positions[idx[k]]) for k in range(n + 1)],
                           dtype=float)
        elif mode.kind in ("gtrb", "bsm"):
            marg = genealogy_marginals(trace) if mode.kind == "gtrb" else (
                backward_smoothing_marginals(trace))
            est = np.array([marg.weights[k] @ np.asarray(h(trace.clouds[k].positions), float)
                            for k in range(n + 1)])
        else:
            if use_ar:
                idx, stats = backward_paths_ar(trace, rng, mode.J, max_rejections)
                rec.is_stats += stats
            else:
                idx = backward_paths_exact(trace, rng, mode.J)
            values = np.stack(
                [np.asarray(h(trace.clouds[k].positions[idx[:, k]]), float)
                 for k in range(n + 1)], axis=1)
            est = values.mean(axis=0)
            rec.within_var[mode.label] = (
                values.var(axis=0, ddof=1) if mode.J >= 2 else np.full(n + 1, np.nan))
            if keep_trajectories:
                rec.trajectories[mode.label] = values
        rec.tau[mode.label] = time.perf_counter() - t0
        rec.estimates[mode.label] = est
    return rec


def _timed_filter(model, obs, N, rng):
    t0 = time.perf_counter()
    try:
        trace = run_filter(model, obs, N, rng)
    except DegenerateCloudError as err:
        logger.warning("proposal particle system degenerated at time %d; rejecting", err.k)
        trace = None
    return trace, time.perf_counter() - t0


def _max_log_weight(trace):
    if trace is None:
        return -np.inf
    return float(max(np.max(c.log_weights) for c in trace.clouds))


def imh_sweep(state: ChainState, model: StateSpaceModel, obs, N: int, rng,
              modes=(), h=None, max_rejections: int = DEFAULT_MAX_REJECTIONS,
              backward: str = "auto", keep_trajectories: bool = False):
    """One independent Metropolis-Hastings update of the particle system.

    The proposal is accepted with probability ``min(1, Z* / Z)``.  A
    proposal whose filter degenerates has ``Z* = 0`` and is rejected.
    """
    filter_rng, mh_rng, extract_rng = rng.spawn(3)
    trace, tau_pf = _timed_filter(model, obs, N, filter_rng)
    log_z_new = trace.log_z if trace is not None else -np.inf
    accepted = mh_accept(log_z_new - state.log_z, mh_rng.random())
    if accepted:
        state = ChainState(trace, log_z_new, state.theta, state.sweep_index + 1)
    else:
        state = ChainState(state.trace, state.log_z, state.theta, state.sweep_index + 1)
    rec = extract(state.trace, modes, extract_rng, h, max_rejections, backward,
                  keep_trajectories)
    rec.sweep = state.sweep_index
    rec.accepted = accepted
    rec.log_z = state.log_z
    rec.log_z_proposed = log_z_new
    rec.tau_pf = tau_pf
    rec.max_log_weight = _max_log_weight(trace)
    return state, rec


def pmmh_sweep(state: ChainState, model_factory: Callable, param_model: ParameterModel,
               obs, N: int, rng, modes=(), h=None,
               max_rejections: int = DEFAULT_MAX_REJECTIONS, backward: str = "auto",
               keep_trajectories: bool = False):
    """One joint update of the parameter and the particle system.

    The log acceptance ratio is the prior ratio plus the reversed-proposal
    ratio plus ``log Z* - log Z``.  Proposals outside the prior support
    are rejected without running a filter.
    """
    prop_rng, filter_rng, mh_rng, extract_rng = rng.spawn(4)
    theta = state.theta
    theta_new = np.asarray(param_model.proposal_sample(theta, prop_rng), dtype=float)
    trace, tau_pf, log_z_new = None, 0.0, -np.inf
    log_ratio = -np.inf
    if param_model.supports(theta_new):
        trace, tau_pf = _timed_filter(model_factory(theta_new), obs, N, filter_rng)
        if trace is not None:
            log_z_new = trace.log_z
            log_ratio = (
                param_model.prior_logdensity(theta_new)
                - param_model.prior_logdensity(theta)
                + param_model.proposal_logdensity(theta, theta_new)
                - param_model.proposal_logdensity(theta_new, theta)
                + log_z_new
                - state.log_z
            )
    accepted = mh_accept(log_ratio, mh_rng.random())
    if accepted:
        state = ChainState(trace, log_z_new, theta_new, state.sweep_index + 1)
    else:
        state = ChainState(state.trace, state.log_z, theta, state.sweep_index + 1)
    rec = extract(state.trace, modes, extract_rng, h, max_rejections, backward,
                  keep_trajectories)
    rec.sweep = state.sweep_index
    rec.accepted = accepted
    rec.log_z = state.log_z
    rec.log_z_proposed = log_z_new
    rec.tau_pf = tau_pf
    rec.theta = state.theta
    rec.max_log_weight = _max_log_weight(trace)
    return state, rec


def initial_state(model: StateSpaceModel, obs, N: int, rng, theta=None) -> ChainState:
    """A filter run accepted unconditionally; degeneracy here is fatal."""
    trace = run_filter(model, obs, N, rng)
    return ChainState(trace, trace.log_z, None if theta is None else np.asarray(theta, float))


@dataclass
class ChainConfig:
    sampler: str = "imh"
    modes: Sequence = ("bsm",)
    N: int = 500
    R: int = 5000
    seed: int | None = None
    burn_in: int = 0
    max_rejections: int = DEFAULT_MAX_REJECTIONS
    backward: str = "auto"
    keep_trajectories: bool = False
    h: Callable | None = None
    theta0: Sequence | None = None

    def __post_init__(self):
        if self.sampler not in ("imh", "pmmh"):
            raise ValueError("sampler must be 'imh' or 'pmmh'")
        self.modes = _as_modes(self.modes)
        if self.N < 1 or self.R < 1 or self.burn_in < 0:
            raise ValueError("need N >= 1, R >= 1 and burn_in >= 0")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be at least 1")
        if self.sampler == "pmmh" and self.theta0 is None:
            raise ValueError("pmmh needs an initial parameter theta0")


@dataclass
class ChainResult:
    config: ChainConfig
    records: list

    @property
    def R(self) -> int:
        return len(self.records)

    @property
    def accepted(self) -> np.ndarray:
        return np.array([r.accepted for r in self.records])

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    @property
    def log_z(self) -> np.ndarray:
        return np.array([r.log_z for r in self.records])

    @property
    def tau_pf(self) -> np.ndarray:
        return np.array([r.tau_pf for r in self.records])

    def tau(self, label) -> np.ndarray:
        return np.array([r.tau[label] for r in self.records])

    def series(self, label) -> np.ndarray:
        """Per-sweep estimates, shape ``(R, n + 1)``."""
        return np.array([r.estimates[label] for r in self.records])

    def within_var(self, label) -> np.ndarray:
        return np.array([r.within_var[label] for r in self.records])

    def means(self, label) -> np.ndarray:
        return self.series(label).mean(axis=0)

    @property
    def theta(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    @property
    def is_stats(self) -> BackwardSamplerStats:
        total = BackwardSamplerStats()
        for r in self.records:
            total += r.is_stats
        return total


def check_weight_growth(max_log_weights, tol: float = np.log(10.0)) -> bool:
    """Warn when the running maximum log weight keeps climbing.

    Geometric ergodicity of the independent sampler rests on bounded
    importance weights; a running maximum that still rises by more than
    ``tol`` over the second half of the chain suggests they are not.
    Returns ``True`` when the warning fires.
    """
    w = np.asarray(max_log_weights, dtype=float)
    w = w[np.isfinite(w)]
    if len(w) < 4:
        return False
    half = len(w) // 2
    growth = w.max() - w[:half].max()
    if growth > tol:
        logger.warning(
            "maximum log importance weight grew by %.3g in the second half of the chain; "
            "weights may be unbounded", growth)
        return True
    return False


def run_chain(config: ChainConfig, model, obs, param_model: ParameterModel | None = None,
              callback: Callable | None = None) -> ChainResult:
    """Run ``burn_in + R`` sweeps and keep the last ``R`` records.

    ``model`` is a :class:`StateSpaceModel` for the independent sampler and
    a factory ``theta -> StateSpaceModel`` for PMMH.  ``callback`` is
    called with every kept record.
    """
    obs = obs if isinstance(obs, ObservationRecord) else ObservationRecord(obs)
    rng = np.random.default_rng(config.seed)
    init_rng, chain_rng = rng.spawn(2)
    kwargs = dict(modes=config.modes, h=config.h, max_rejections=config.max_rejections,
                  backward=config.backward, keep_trajectories=config.keep_trajectories)
    if config.sampler == "imh":
        state = initial_state(model, obs, config.N, init_rng)
    else:
        if param_model is None:
            raise ValueError("pmmh needs a parameter model")
        theta0 = np.asarray(config.theta0, dtype=float)
        state = initial_state(model(theta0), obs, config.N, init_rng, theta0)
    records = []
    for sweep in range(config.burn_in + config.R):
        if config.sampler == "imh":
            state, rec = imh_sweep(state, model, obs, config.N, chain_rng, **kwargs)
        else:
            state, rec = pmmh_sweep(state, model, param_model, obs, config.N, chain_rng,
                                    **kwargs)
        if sweep >= config.burn_in:
            records.append(rec)
            if callback is not None:
                callback(rec)
    check_weight_growth([r.max_log_weight for r in records])
    return ChainResult(config, records)
