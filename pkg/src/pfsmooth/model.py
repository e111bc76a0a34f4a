"""State-space model contract and the built-in models.

All densities are returned in log space and every callable broadcasts over
leading particle axes.  Scalar-state models use arrays of shape ``(N,)``;
vector-state models use ``(N, state_dim)``.

Time convention: every ``k`` argument passed to a transition, proposal or
adjustment callable is the *source* time, i.e. the callable describes the
move from time ``k`` to ``k + 1``.  Emission callables receive the time of
the state being observed.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "StateSpaceModel",
    "ObservationRecord",
    "GrowthModelParams",
    "LinearGaussianParams",
    "DiscreteHmmParams",
    "growth_transition_mean",
    "growth_model",
    "linear_gaussian_model",
    "discrete_hmm_model",
    "simulate_data",
    "kalman_smoother",
    "KalmanResult",
    "hmm_forward_backward",
    "ForwardBackwardResult",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _normal_logpdf(x, mean, var):
    if var <= 0:
        raise ValueError("a zero-variance Gaussian has no Lebesgue density")
    d = np.subtract(x, mean, dtype=float)
    d *= d
    d *= -0.5 / var
    d += -0.5 * (_LOG_2PI + np.log(var))
    return d


@dataclass(frozen=True)
class ObservationRecord:
    """A fixed observation record ``y_0, ..., y_n``.

    ``y`` has shape ``(n + 1,)`` for scalar observations and
    ``(n + 1, obs_dim)`` otherwise.
    """

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 0 or len(y) < 1:
            raise ValueError("observation record needs at least one entry")
        if y.dtype.kind == "f" and not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite")
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, k):
        return self.y[k]

    @property
    def n(self) -> int:
        """Index of the final observation."""
        return len(self.y) - 1


@dataclass(frozen=True)
class StateSpaceModel:
    """One state-space model instance together with its particle-filter design.

    The model part is the initial law, the transition density ``q`` and the
    emission density ``g_k``.  The filter design is the initial instrumental
    law, the proposal kernel and the adjustment multiplier weights; leaving
    them as ``None`` gives the bootstrap filter (proposal equal to the prior
    dynamics, all adjustment weights equal to one).

    Attributes
    ----------
    initial_logdensity : callable ``x -> log rho(x)``
    initial_sample : callable ``(rng, size) -> x``
    transition_logdensity : callable ``(k, x, x_next) -> log q(x, x_next)``
    transition_sample : callable ``(k, x, rng) -> x_next``
    emission_logdensity : callable ``(k, x, y_k) -> log g_k(x)``
    emission_sample : callable ``(k, x, rng) -> y``
    initial_proposal_sample : callable ``(rng, size, obs)``, optional
    initial_proposal_logdensity : callable ``(x, obs)``, optional
    proposal_sample : callable ``(k, x, obs, rng)``, optional
    proposal_logdensity : callable ``(k, x, x_next, obs)``, optional
    adjustment_logweight : callable ``(k, x, obs) -> log vartheta_k(x)``, optional
    transition_density_bound : float, optional
        Upper bound on ``exp(transition_logdensity)`` over all pairs.
    """

    initial_logdensity: Callable
    initial_sample: Callable
    transition_logdensity: Callable
    transition_sample: Callable
    emission_logdensity: Callable
    emission_sample: Callable
    state_dim: int = 1
    obs_dim: int = 1
    discrete: bool = False
    initial_proposal_sample: Callable | None = None
    initial_proposal_logdensity: Callable | None = None
    proposal_sample: Callable | None = None
    proposal_logdensity: Callable | None = None
    adjustment_logweight: Callable | None = None
    transition_density_bound: float | None = None
    name: str = "custom"
    params: Any = field(default=None, compare=False)

    def __post_init__(self):
        if (self.proposal_sample is None) != (self.proposal_logdensity is None):
            raise ValueError("proposal_sample and proposal_logdensity come together")
        if (self.initial_proposal_sample is None) != (
            self.initial_proposal_logdensity is None
        ):
            raise ValueError(
                "initial_proposal_sample and initial_proposal_logdensity come together"
            )
        if self.transition_density_bound is not None and not (
            0 < self.transition_density_bound < np.inf
        ):
            raise ValueError("transition_density_bound must be positive and finite")

    @property
    def is_bootstrap(self) -> bool:
        return (
            self.proposal_sample is None
            and self.adjustment_logweight is None
            and self.initial_proposal_sample is None
        )

    @property
    def log_transition_bound(self) -> float | None:
        if self.transition_density_bound is None:
            return None
        return float(np.log(self.transition_density_bound))

    def pairwise_transition_logdensity(self, k, x, x_next):
        """``log q(x[i], x_next[j])`` as an ``(len(x), len(x_next))`` matrix."""
        x = np.asarray(x)
        x_next = np.asarray(x_next)
        if self.state_dim == 1 and x.ndim == 1:
            return self.transition_logdensity(k, x[:, None], x_next[None, :])
        return self.transition_logdensity(k, x[:, None, ...], x_next[None, :, ...])


# --------------------------------------------------------------------------
# growth model


@dataclass(frozen=True)
class GrowthModelParams:
    """Variances of the initial state, state noise and observation noise.

    Zero values are accepted so that noise-free trajectories can be
    simulated; densities of a zero-variance component raise ``ValueError``.
    """

    sigma0_sq: float = 5.0
    sigmaV_sq: float = 10.0
    sigmaW_sq: float = 1.0

    def __post_init__(self):
        for name in ("sigma0_sq", "sigmaV_sq", "sigmaW_sq"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number")


def growth_transition_mean(k, x):
    """Deterministic part of the growth-model dynamics at (1-based) time ``k``."""
    return x / 2.0 + 25.0 * x / (1.0 + x**2) + 8.0 * np.cos(1.2 * k)


def growth_model(params: GrowthModelParams | None = None) -> StateSpaceModel:
    """The nonlinear growth model run with the bootstrap filter.

    Internal time ``k`` corresponds to time ``k + 1`` in the usual 1-based
    indexing of this model, so the move from internal ``k`` to ``k + 1``
    uses the cosine term at 1-based time ``k + 2``.
    """
    p = params or GrowthModelParams()
    s0, sv, sw = p.sigma0_sq, p.sigmaV_sq, p.sigmaW_sq

    def initial_logdensity(x):
        return _normal_logpdf(x, 0.0, s0)

    def initial_sample(rng, size):
        return rng.normal(0.0, np.sqrt(s0), size)

    def transition_logdensity(k, x, x_next):
        return _normal_logpdf(x_next, growth_transition_mean(k + 2, x), sv)

    def transition_sample(k, x, rng):
        x = np.asarray(x, dtype=float)
        return growth_transition_mean(k + 2, x) + np.sqrt(sv) * rng.standard_normal(
            x.shape
        )

    def emission_logdensity(k, x, y):
        return _normal_logpdf(y, x**2 / 20.0, sw)

    def emission_sample(k, x, rng):
        x = np.asarray(x, dtype=float)
        return x**2 / 20.0 + np.sqrt(sw) * rng.standard_normal(x.shape)

    bound = 1.0 / np.sqrt(2.0 * np.pi * sv) if sv > 0 else None
    return StateSpaceModel(
        initial_logdensity=initial_logdensity,
        initial_sample=initial_sample,
        transition_logdensity=transition_logdensity,
        transition_sample=transition_sample,
        emission_logdensity=emission_logdensity,
        emission_sample=emission_sample,
        transition_density_bound=bound,
        name="growth",
        params=p,
    )


# --------------------------------------------------------------------------
# linear Gaussian model


@dataclass(frozen=True)
class LinearGaussianParams:
    """Scalar model ``x' = phi x + v``, ``y = obs_coeff x + w``."""

    phi: float = 0.9
    state_noise_var: float = 1.0
    obs_coeff: float = 1.0
    obs_noise_var: float = 1.0
    init_mean: float = 0.0
    init_var: float = 1.0

    def __post_init__(self):
        for name in ("state_noise_var", "obs_noise_var", "init_var"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("phi", "obs_coeff", "init_mean"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def linear_gaussian_model(params: LinearGaussianParams | None = None) -> StateSpaceModel:
    p = params or LinearGaussianParams()

    def initial_logdensity(x):
        return _normal_logpdf(x, p.init_mean, p.init_var)

    def initial_sample(rng, size):
        return rng.normal(p.init_mean, np.sqrt(p.init_var), size)

    def transition_logdensity(k, x, x_next):
        return _normal_logpdf(x_next, p.phi * x, p.state_noise_var)

    def transition_sample(k, x, rng):
        x = np.asarray(x, dtype=float)
        return p.phi * x + np.sqrt(p.state_noise_var) * rng.standard_normal(x.shape)

    def emission_logdensity(k, x, y):
        return _normal_logpdf(y, p.obs_coeff * x, p.obs_noise_var)

    def emission_sample(k, x, rng):
        x = np.asarray(x, dtype=float)
        return p.obs_coeff * x + np.sqrt(p.obs_noise_var) * rng.standard_normal(x.shape)

    return StateSpaceModel(
        initial_logdensity=initial_logdensity,
        initial_sample=initial_sample,
        transition_logdensity=transition_logdensity,
        transition_sample=transition_sample,
        emission_logdensity=emission_logdensity,
        emission_sample=emission_sample,
        transition_density_bound=1.0 / np.sqrt(2.0 * np.pi * p.state_noise_var),
        name="lgss",
        params=p,
    )


# --------------------------------------------------------------------------
# finite-state HMM


@dataclass(frozen=True)
class DiscreteHmmParams:
    """Finite-state HMM with categorical emissions.

    ``emission_matrix[i, m]`` is the probability of observing symbol ``m``
    in state ``i``.
    """

    transition_matrix: np.ndarray
    emission_matrix: np.ndarray
    initial_distribution: np.ndarray

    def __post_init__(self):
        a = np.array(self.transition_matrix, dtype=float)
        b = np.array(self.emission_matrix, dtype=float)
        pi = np.array(self.initial_distribution, dtype=float)
        s = a.shape[0]
        if s < 2 or a.shape != (s, s):
            raise ValueError("transition_matrix must be square with at least 2 states")
        if b.ndim != 2 or b.shape[0] != s:
            raise ValueError("emission_matrix must have one row per state")
        if pi.shape != (s,):
            raise ValueError("initial_distribution must have one entry per state")
        for name, arr in (("transition_matrix", a), ("emission_matrix", b)):
            if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError(f"{name} must be row-stochastic")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("initial_distribution must be a probability vector")
        for name, arr in (
            ("transition_matrix", a),
            ("emission_matrix", b),
            ("initial_distribution", pi),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.transition_matrix.shape[0]


def discrete_hmm_model(params: DiscreteHmmParams) -> StateSpaceModel:
    """HMM on states ``0..S-1``; the reference measure is counting measure."""
    a, b, pi = params.transition_matrix, params.emission_matrix, params.initial_distribution
    with np.errstate(divide="ignore"):
        log_a, log_b, log_pi = np.log(a), np.log(b), np.log(pi)
    cum_a = np.cumsum(a, axis=1)
    cum_b = np.cumsum(b, axis=1)
    cum_pi = np.cumsum(pi)

    def _categorical_rows(cum, rows, rng):
        rows = np.asarray(rows)
        u = rng.random(rows.shape)
        c = cum[rows]
        idx = (c < u[..., None] * c[..., -1:]).sum(axis=-1)
        return np.minimum(idx, cum.shape[1] - 1)

    def initial_logdensity(x):
        return log_pi[np.asarray(x)]

    def initial_sample(rng, size):
        u = rng.random(size)
        return np.minimum(np.searchsorted(cum_pi, u * cum_pi[-1], side="right"), len(pi) - 1)

    def transition_logdensity(k, x, x_next):
        return log_a[np.asarray(x), np.asarray(x_next)]

    def transition_sample(k, x, rng):
        return _categorical_rows(cum_a, x, rng)

    def emission_logdensity(k, x, y):
        return log_b[np.asarray(x), int(y)]

    def emission_sample(k, x, rng):
        return _categorical_rows(cum_b, x, rng)

    return StateSpaceModel(
        initial_logdensity=initial_logdensity,
        initial_sample=initial_sample,
        transition_logdensity=transition_logdensity,
        transition_sample=transition_sample,
        emission_logdensity=emission_logdensity,
        emission_sample=emission_sample,
        discrete=True,
        transition_density_bound=float(a.max()),
        name="hmm",
        params=params,
    )


# --------------------------------------------------------------------------
# simulation


def simulate_data(model: StateSpaceModel, n: int, seed=None):
    """Draw a latent trajectory and ``n`` observations from the model.

    The observations are indexed ``0..n-1`` internally (``1..n`` in the
    1-based convention of the growth model).

    Returns
    -------
    x : ndarray, shape (n,) or (n, state_dim)
    obs : ObservationRecord
    """
    if n < 1:
        raise ValueError("need at least one observation")
    rng = np.random.default_rng(seed)
    states = [np.asarray(model.initial_sample(rng, 1))[0]]
    for k in range(n - 1):
        states.append(np.asarray(model.transition_sample(k, states[-1], rng)))
    x = np.asarray(states)
    y = np.array([np.asarray(model.emission_sample(k, x[k], rng)) for k in range(n)])
    return x, ObservationRecord(y)


# --------------------------------------------------------------------------
# exact oracles


@dataclass(frozen=True)
class KalmanResult:
    filtered_means: np.ndarray
    filtered_vars: np.ndarray
    smoothed_means: np.ndarray
    smoothed_vars: np.ndarray
    log_likelihood: float


def kalman_smoother(params: LinearGaussianParams, obs) -> KalmanResult:
    """Exact smoothing moments and log-likelihood for the scalar linear model.

    Runs the Kalman filter followed by the Rauch-Tung-Striebel backward pass.
    """
    y = np.asarray(getattr(obs, "y", obs), dtype=float)
    n1 = len(y)
    phi, q, c, r = params.phi, params.state_noise_var, params.obs_coeff, params.obs_noise_var
    m_pred = np.empty(n1)
    p_pred = np.empty(n1)
    m_filt = np.empty(n1)
    p_filt = np.empty(n1)
    loglik = 0.0
    m, p = params.init_mean, params.init_var
    for k in range(n1):
        m_pred[k], p_pred[k] = m, p
        s = c * c * p + r
        loglik += _normal_logpdf(y[k], c * m, s)
        gain = p * c / s
        m = m + gain * (y[k] - c * m)
        p = (1.0 - gain * c) * p
        m_filt[k], p_filt[k] = m, p
        m, p = phi * m, phi * phi * p + q

    m_s = m_filt.copy()
    p_s = p_filt.copy()
    for k in range(n1 - 2, -1, -1):
        gain = p_filt[k] * phi / p_pred[k + 1]
        m_s[k] = m_filt[k] + gain * (m_s[k + 1] - m_pred[k + 1])
        p_s[k] = p_filt[k] + gain * gain * (p_s[k + 1] - p_pred[k + 1])
    return KalmanResult(m_filt, p_filt, m_s, p_s, float(loglik))


@dataclass(frozen=True)
class ForwardBackwardResult:
    filtered: np.ndarray
    marginals: np.ndarray
    pairwise: np.ndarray
    log_likelihood: float


def hmm_forward_backward(params: DiscreteHmmParams, obs) -> ForwardBackwardResult:
    """Scaled forward-backward recursions.

    Returns filter and smoothing marginals of shape ``(n + 1, S)``, pairwise
    marginals ``P(X_k = i, X_{k+1} = j | y)`` of shape ``(n, S, S)`` and the
    exact log-likelihood.
    """
    y = np.asarray(getattr(obs, "y", obs)).astype(int)
    a, b, pi = params.transition_matrix, params.emission_matrix, params.initial_distribution
    n1, s = len(y), params.n_states
    alpha = np.empty((n1, s))
    scale = np.empty(n1)
    f = pi * b[:, y[0]]
    for k in range(n1):
        if k > 0:
            f = (alpha[k - 1] @ a) * b[:, y[k]]
        scale[k] = f.sum()
        if scale[k] <= 0:
            raise ValueError(f"observation at time {k} has zero probability")
        alpha[k] = f / scale[k]

    beta = np.ones((n1, s))
    for k in range(n1 - 2, -1, -1):
        beta[k] = a @ (b[:, y[k + 1]] * beta[k + 1]) / scale[k + 1]

    marg = alpha * beta
    marg /= marg.sum(axis=1, keepdims=True)
    pair = np.empty((max(n1 - 1, 0), s, s))
    for k in range(n1 - 1):
        m = alpha[k][:, None] * a * (b[:, y[k + 1]] * beta[k + 1])[None, :]
        pair[k] = m / m.sum()
    return ForwardBackwardResult(alpha, marg, pair, float(np.log(scale).sum()))
