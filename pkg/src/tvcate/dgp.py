"""Structural-equation simulators and ground-truth oracles.

A :class:`StructuralDGP` generates trajectories by

    X_1 ~ Normal(0, x1_std)
    A_t ~ Bernoulli(sigmoid(f_a(X_t, A_{t-1}, Y_{t-1})))
    Y_t = f_y(X_t, A_t, Y_{t-1}) + eps_y
    X_{t+1} = f_x(X_t, A_t, Y_t) + eps_x

with Gaussian noises.  The structural functions receive only the most recent
covariate, treatment, and outcome (the shipped families depend on nothing
older); the engine models scalar confounders.  At t = 1 the previous
treatment is the configurable ``a0`` convention and the previous outcome
is 0.

Ground truth comes from two independent routes: Monte-Carlo rollouts
(``oracle_response``, ``oracle_cate``, ``oracle_history_adjustment``) that
work for any DGP of this form, and closed-form response surfaces
(:class:`ChainResponseForm`) available when the confounder chain is linear
and the outcome mean is additively separable, which covers every shipped
dataset.  A small all-discrete DGP (:class:`DiscreteDGP`) supports exact
enumeration for brute-force comparisons.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .panel import HistoryView, InterventionPair, Panel, panel_from_arrays

__all__ = [
    "StructuralDGP",
    "OverlapKnob",
    "ChainResponseForm",
    "MCEstimate",
    "DiscreteDGP",
    "make_d1",
    "make_d2",
    "make_d3",
    "make_linear_chain",
    "make_mini_discrete",
    "get_dgp",
    "benchmark_pair",
    "BENCHMARK_PAIRS",
    "simulate_panel",
    "oracle_propensity",
    "oracle_response",
    "oracle_cate",
    "oracle_history_adjustment",
    "derive_rng",
]


def derive_rng(seed, *tags) -> np.random.Generator:
    """Independent RNG stream derived from a master seed and a tag path.

    String tags are mapped through CRC-32 so the derivation is stable across
    processes and platforms.
    """
    key = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        key.append(zlib.crc32(tag.encode()) if isinstance(tag, str) else int(tag) & 0xFFFFFFFF)
    return np.random.default_rng(key)


@dataclass(frozen=True)
class MCEstimate:
    """Monte-Carlo estimate with its standard error (se=0 marks exact values)."""

    value: float
    se: float
    n_mc: int


@dataclass(frozen=True)
class ChainResponseForm:
    """Closed-form response surfaces for linear-chain DGPs.

    Valid when f_x(x, a, y) = x_coef * x (treatments and outcomes never feed
    the confounder) and f_y(x, a, y) = g(x) + treat_coef * (a - treat_center)
    with g either cos(omega * x) or a linear map omega * x.  Then m steps
    ahead of x the confounder is Normal(x_coef^m * x, s_m^2) with
    s_m^2 = x_noise_var * sum_{j<m} x_coef^(2j), and

        E[cos(omega Z)] = cos(omega mean) * exp(-omega^2 s_m^2 / 2),

    so the response surface at any level is available exactly.  The CATE of
    an intervention pair is treat_coef * (a_last - b_last), constant in the
    history.
    """

    x_coef: float
    outcome_kind: str = "cos"      # {"cos", "linear"}
    omega: float = 1.0
    treat_coef: float = 0.5
    treat_center: float = 0.5

    def capo(self, x, steps_ahead: int, a_final, x_noise_std: float):
        """mu at a history whose covariate is x, steps_ahead before the end.

        steps_ahead = 0 is the terminal level (a_final plays the role of the
        final intervention arm in both cases).
        """
        x = np.asarray(x, dtype=float)
        m = int(steps_ahead)
        if m < 0:
            raise ValueError("steps_ahead must be >= 0")
        mean = self.x_coef ** m * x
        var = x_noise_std ** 2 * sum(self.x_coef ** (2 * j) for j in range(m))
        if self.outcome_kind == "cos":
            g = np.cos(self.omega * mean) * np.exp(-self.omega ** 2 * var / 2.0)
        elif self.outcome_kind == "linear":
            g = self.omega * mean
        else:
            raise ValueError(f"unknown outcome_kind {self.outcome_kind!r}")
        return g + self.treat_coef * (np.asarray(a_final, dtype=float) - self.treat_center)

    def cate(self, pair: InterventionPair) -> float:
        return self.treat_coef * (pair.a_seq[-1] - pair.b_seq[-1])


@dataclass(frozen=True)
class StructuralDGP:
    """Order-1 structural-equation model over T discrete steps (see module docs)."""

    name: str
    f_x: Callable
    f_a: Callable
    f_y: Callable
    horizon: int = 5
    x1_std: float = 1.0
    x_noise_std: float = 0.5
    y_noise_std: float = 0.3
    a0: int = 0
    treatment_arity: int = 2
    noise_as_variance: bool = False
    response_form: Optional[ChainResponseForm] = None
    default_n_train: int = 5000

    def __post_init__(self):
        if self.x1_std <= 0 or self.x_noise_std <= 0 or self.y_noise_std <= 0:
            raise ValueError("noise scales must be > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def x_sd(self) -> float:
        return np.sqrt(self.x_noise_std) if self.noise_as_variance else self.x_noise_std

    @property
    def y_sd(self) -> float:
        return np.sqrt(self.y_noise_std) if self.noise_as_variance else self.y_noise_std

    @property
    def x1_sd(self) -> float:
        return np.sqrt(self.x1_std) if self.noise_as_variance else self.x1_std


@dataclass(frozen=True)
class OverlapKnob:
    """Logit scale gamma >= 0; larger gamma pushes propensities toward {0,1}."""

    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and >= 0")


def make_d1() -> StructuralDGP:
    """Strong oscillatory confounding: logit 4*cos(0.5*X - 0.5*(A_prev - 0.5))."""
    return StructuralDGP(
        name="d1",
        f_x=lambda x, a, y: 0.5 * x,
        f_a=lambda x, a_prev, y_prev: 4.0 * np.cos(0.5 * x - 0.5 * (a_prev - 0.5)),
        f_y=lambda x, a, y_prev: np.cos(x) + 0.5 * (a - 0.5),
        response_form=ChainResponseForm(x_coef=0.5, outcome_kind="cos", omega=1.0),
        default_n_train=5000,
    )


def make_d2() -> StructuralDGP:
    """Mild confounding with a fast-oscillating outcome surface cos(5*X)."""
    return StructuralDGP(
        name="d2",
        f_x=lambda x, a, y: 0.5 * x,
        f_a=lambda x, a_prev, y_prev: 0.5 * x - 0.5 * (a_prev - 0.5),
        f_y=lambda x, a, y_prev: np.cos(5.0 * x) + 0.5 * (a - 0.5),
        response_form=ChainResponseForm(x_coef=0.5, outcome_kind="cos", omega=5.0),
        default_n_train=10000,
    )


def make_d3(gamma: float) -> StructuralDGP:
    """Overlap-controlled linear logit gamma*(0.5*X - 0.5*(A_prev - 0.5))."""
    knob = OverlapKnob(float(gamma))
    g = knob.gamma
    return StructuralDGP(
        name=f"d3:gamma={g:g}",
        f_x=lambda x, a, y: 0.5 * x,
        f_a=lambda x, a_prev, y_prev: g * (0.5 * x - 0.5 * (a_prev - 0.5)),
        f_y=lambda x, a, y_prev: np.cos(x) + 0.5 * (a - 0.5),
        response_form=ChainResponseForm(x_coef=0.5, outcome_kind="cos", omega=1.0),
        default_n_train=5000,
    )


def make_linear_chain(noise_std: float = 0.5, logit_scale: float = 0.4,
                      logit_intercept: float = 0.1, treat_coef: float = 1.0,
                      horizon: int = 5) -> StructuralDGP:
    """Verification DGP with constant conditional variances.

    The confounder is a unit-coefficient random walk (X_{t+1} = X_t + eps)
    and the outcome mean is X_t + treat_coef * A_t, so every response
    surface is mu_l = X_l + treat_coef * a_final and the one-step conditional
    variance of the next-level surface equals the (shared) noise variance at
    every level: Var(mu_{l+1}(H_{l+1}) | H_l, A_l) = noise_std^2, the
    constant-variance setting in which inverse-variance weights are exact.
    """
    return StructuralDGP(
        name="linear-chain",
        f_x=lambda x, a, y: x,
        f_a=lambda x, a_prev, y_prev: logit_intercept + logit_scale * x,
        f_y=lambda x, a, y_prev: x + treat_coef * a,
        x1_std=1.0,
        x_noise_std=noise_std,
        y_noise_std=noise_std,
        response_form=ChainResponseForm(x_coef=1.0, outcome_kind="linear", omega=1.0,
                                        treat_coef=treat_coef, treat_center=0.0),
        default_n_train=5000,
    )


#: Preregistered intervention pairs per horizon: the final-period arm is
#: treated vs control and all earlier arms are swapped between the sequences.
BENCHMARK_PAIRS = {
    0: InterventionPair((1,), (0,)),
    1: InterventionPair((0, 1), (1, 0)),
    2: InterventionPair((0, 0, 1), (1, 0, 0)),
}


def benchmark_pair(tau: int) -> InterventionPair:
    if tau not in BENCHMARK_PAIRS:
        raise ValueError(f"no preregistered intervention pair for tau={tau}")
    return BENCHMARK_PAIRS[tau]


def simulate_panel(dgp: StructuralDGP, n: int, seed, x1=None) -> Panel:
    """Simulate n trajectories of length dgp.horizon; deterministic given seed.

    Draw order is fixed: X_1, then per step the treatment uniforms, the
    outcome noise, and (except at the last step) the next confounder noise.
    When ``x1`` is given (scalar or length-n array) the first covariate is
    pinned to it instead of drawn, so every trajectory starts from a known
    history; the X_1 draw is skipped entirely.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    T = dgp.horizon
    X = np.empty((n, T))
    A = np.empty((n, T), dtype=int)
    Y = np.empty((n, T))
    if x1 is None:
        X[:, 0] = rng.normal(0.0, dgp.x1_sd, size=n)
    else:
        X[:, 0] = np.broadcast_to(np.asarray(x1, dtype=float), (n,))
    a_prev = np.full(n, float(dgp.a0))
    y_prev = np.zeros(n)
    for t in range(T):
        p1 = expit(dgp.f_a(X[:, t], a_prev, y_prev))
        A[:, t] = rng.uniform(size=n) < p1
        a_t = A[:, t].astype(float)
        Y[:, t] = dgp.f_y(X[:, t], a_t, y_prev) + rng.normal(0.0, dgp.y_sd, size=n)
        if t < T - 1:
            X[:, t + 1] = dgp.f_x(X[:, t], a_t, Y[:, t]) + rng.normal(0.0, dgp.x_sd, size=n)
        a_prev = a_t
        y_prev = Y[:, t]
    return panel_from_arrays(X, A, Y, dgp.treatment_arity)


def _history_tail(dgp: StructuralDGP, h: HistoryView):
    """(x_l, a_prev, y_prev) at the history's frontier, applying the t=1 conventions."""
    x_l = float(h.x_prefix[-1, 0])
    if h.t > 1:
        a_prev = float(h.a_prefix[-1])
        y_prev = float(h.y_prefix[-1])
    else:
        a_prev = float(dgp.a0)
        y_prev = 0.0
    return x_l, a_prev, y_prev


def oracle_propensity(dgp: StructuralDGP, h: HistoryView, a: int = 1) -> float:
    """Exact propensity P(A_t = a | H_t = h) from the structural logit."""
    x_l, a_prev, y_prev = _history_tail(dgp, h)
    p1 = float(expit(dgp.f_a(np.array([x_l]), np.array([a_prev]), np.array([y_prev]))[0]))
    return p1 if a == 1 else 1.0 - p1


def _draw_noise(dgp: StructuralDGP, steps: int, m: int, rng, antithetic: bool):
    eps_y = rng.normal(0.0, dgp.y_sd, size=(steps, m))
    eps_x = rng.normal(0.0, dgp.x_sd, size=(max(steps - 1, 0), m))
    if antithetic:
        half = m // 2
        eps_y[:, half:] = -eps_y[:, :half]
        if steps > 1:
            eps_x[:, half:] = -eps_x[:, :half]
    return eps_x, eps_y


def _rollout_fixed(dgp: StructuralDGP, x0, y_prev0, a_suffix, eps_x, eps_y):
    """Terminal outcome draws when treatments are pinned to a_suffix."""
    m = x0.shape[0]
    x = x0.copy()
    y_prev = y_prev0.copy()
    for k, a_k in enumerate(a_suffix):
        a = np.full(m, float(a_k))
        y = dgp.f_y(x, a, y_prev) + eps_y[k]
        if k < len(a_suffix) - 1:
            x = dgp.f_x(x, a, y) + eps_x[k]
            y_prev = y
    return y


def _mc_stats(values, antithetic: bool) -> MCEstimate:
    m = values.shape[0]
    if antithetic:
        half = m // 2
        pair_means = 0.5 * (values[:half] + values[half:])
        se = pair_means.std(ddof=1) / np.sqrt(half) if half > 1 else np.inf
        return MCEstimate(float(pair_means.mean()), float(se), m)
    se = values.std(ddof=1) / np.sqrt(m) if m > 1 else np.inf
    return MCEstimate(float(values.mean()), float(se), m)


def oracle_response(dgp: StructuralDGP, h: HistoryView, a_suffix, n_mc: int = 4000,
                    seed=0, antithetic: bool = True) -> MCEstimate:
    """Monte-Carlo estimate of the response surface mu at history h.

    a_suffix pins the treatments from the history's time l through the
    terminal step l + len(a_suffix) - 1 <= horizon.  A suffix of length 1
    needs no rollout (the outcome noise is mean-zero) and is returned
    exactly with se = 0.  Antithetic noise pairs are used by default; the
    standard error then comes from the pair means.
    """
    a_suffix = tuple(int(v) for v in a_suffix)
    if len(a_suffix) < 1:
        raise ValueError("a_suffix must contain at least one arm")
    if h.t + len(a_suffix) - 1 > dgp.horizon:
        raise ValueError("intervention suffix runs past the DGP horizon")
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    x_l, _, y_prev = _history_tail(dgp, h)
    if len(a_suffix) == 1:
        value = float(dgp.f_y(np.array([x_l]), np.array([float(a_suffix[0])]),
                              np.array([y_prev]))[0])
        return MCEstimate(value, 0.0, 0)
    m = n_mc + (n_mc % 2) if antithetic else n_mc
    rng = np.random.default_rng(seed)
    eps_x, eps_y = _draw_noise(dgp, len(a_suffix), m, rng, antithetic)
    y = _rollout_fixed(dgp, np.full(m, x_l), np.full(m, y_prev), a_suffix, eps_x, eps_y)
    return _mc_stats(y, antithetic)


def oracle_cate(dgp: StructuralDGP, h: HistoryView, pair: InterventionPair,
                n_mc: int = 4000, seed=0, antithetic: bool = True) -> MCEstimate:
    """CATE estimate using common random numbers across the two arms."""
    if h.t + pair.tau > dgp.horizon:
        raise ValueError("intervention pair runs past the DGP horizon")
    x_l, _, y_prev = _history_tail(dgp, h)
    if pair.tau == 0:
        xv, yv = np.array([x_l]), np.array([y_prev])
        diff = float(dgp.f_y(xv, np.array([float(pair.a_seq[0])]), yv)[0]
                     - dgp.f_y(xv, np.array([float(pair.b_seq[0])]), yv)[0])
        return MCEstimate(diff, 0.0, 0)
    m = n_mc + (n_mc % 2) if antithetic else n_mc
    rng = np.random.default_rng(seed)
    eps_x, eps_y = _draw_noise(dgp, pair.tau + 1, m, rng, antithetic)
    x0, yp = np.full(m, x_l), np.full(m, y_prev)
    y_a = _rollout_fixed(dgp, x0, yp, pair.a_seq, eps_x, eps_y)
    y_b = _rollout_fixed(dgp, x0, yp, pair.b_seq, eps_x, eps_y)
    return _mc_stats(y_a - y_b, antithetic)


def oracle_history_adjustment(dgp: StructuralDGP, h: HistoryView, a_suffix,
                              n_mc: int = 20000, seed=0) -> MCEstimate:
    """Path-conditioned mean E[Y_terminal | H_l = h, observed arms = a_suffix].

    Unlike the response surface, this conditions on the *observational*
    treatment process having followed a_suffix, so rollouts sample
    treatments from the propensities and only matching paths are kept
    (rejection sampling; no antithetic pairing, the acceptance indicator
    would break it).
    """
    a_suffix = tuple(int(v) for v in a_suffix)
    if h.t + len(a_suffix) - 1 > dgp.horizon:
        raise ValueError("intervention suffix runs past the DGP horizon")
    x_l, a_prev0, y_prev0 = _history_tail(dgp, h)
    rng = np.random.default_rng(seed)
    m = n_mc
    x = np.full(m, x_l)
    a_prev = np.full(m, a_prev0)
    y_prev = np.full(m, y_prev0)
    alive = np.ones(m, dtype=bool)
    y = np.zeros(m)
    for k, a_k in enumerate(a_suffix):
        p1 = expit(dgp.f_a(x, a_prev, y_prev))
        a = (rng.uniform(size=m) < p1).astype(float)
        alive &= (a == float(a_k))
        y = dgp.f_y(x, a, y_prev) + rng.normal(0.0, dgp.y_sd, size=m)
        if k < len(a_suffix) - 1:
            x = dgp.f_x(x, a, y) + rng.normal(0.0, dgp.x_sd, size=m)
        a_prev, y_prev = a, y
    n_acc = int(alive.sum())
    if n_acc == 0:
        raise ValueError("no rollouts matched the treatment path; raise n_mc")
    kept = y[alive]
    se = kept.std(ddof=1) / np.sqrt(n_acc) if n_acc > 1 else np.inf
    return MCEstimate(float(kept.mean()), float(se), n_acc)


@dataclass(frozen=True)
class DiscreteDGP:
    """Two-step all-discrete DGP for brute-force enumeration checks.

    X_1 ~ Bernoulli(p_x1); A_t ~ Bernoulli(sigmoid(a_slope*X_t +
    a_prev_shift*(A_{t-1}-0.5))) with A_0 = 0; Y_1 = 0 exactly;
    X_2 ~ Bernoulli(q(X_1, A_1)) with q = trans_base + trans_x*X_1 +
    trans_a*A_1; and Y_2 = y_base + y_x*X_2 + y_a*A_2 deterministically.
    Because Y_2 is a deterministic table, exhaustive enumeration of the
    response surfaces is exact and a fitted lookup table can be compared
    against it cell by cell.
    """

    p_x1: float = 0.5
    a_slope: float = 0.8
    a_prev_shift: float = -0.4
    trans_base: float = 0.3
    trans_x: float = 0.4
    trans_a: float = 0.2
    y_base: float = 0.2
    y_x: float = 0.6
    y_a: float = 0.15
    horizon: int = 2
    treatment_arity: int = 2
    default_n_train: int = 50000
    name: str = "mini-discrete"

    def propensity1(self, x, a_prev):
        return expit(self.a_slope * np.asarray(x, dtype=float)
                     + self.a_prev_shift * (np.asarray(a_prev, dtype=float) - 0.5))

    def trans_prob(self, x1, a1):
        return (self.trans_base + self.trans_x * np.asarray(x1, dtype=float)
                + self.trans_a * np.asarray(a1, dtype=float))

    def y2(self, x2, a2):
        return (self.y_base + self.y_x * np.asarray(x2, dtype=float)
                + self.y_a * np.asarray(a2, dtype=float))

    def simulate(self, n: int, seed) -> Panel:
        rng = np.random.default_rng(seed)
        x1 = (rng.uniform(size=n) < self.p_x1).astype(float)
        a1 = (rng.uniform(size=n) < self.propensity1(x1, np.zeros(n))).astype(int)
        y1 = np.zeros(n)
        x2 = (rng.uniform(size=n) < self.trans_prob(x1, a1)).astype(float)
        a2 = (rng.uniform(size=n) < self.propensity1(x2, a1)).astype(int)
        y2 = self.y2(x2, a2)
        X = np.stack([x1, x2], axis=1)
        A = np.stack([a1, a2], axis=1)
        Y = np.stack([y1, y2], axis=1)
        return panel_from_arrays(X, A, Y, self.treatment_arity)

    def enumerate_response(self, a_suffix, level: int):
        """Exact response surface by enumeration, for t = 1 and tau = 1.

        level 1 (terminal) returns {x2: mu} — the surface depends only on
        the current covariate; level 0 returns {x1: mu} where the next
        covariate is integrated out under arm a_suffix[0].
        """
        a_suffix = tuple(int(v) for v in a_suffix)
        if len(a_suffix) != 2:
            raise ValueError("enumeration covers t=1, tau=1 (suffix length 2)")
        if level == 1:
            return {x2: float(self.y2(x2, a_suffix[1])) for x2 in (0.0, 1.0)}
        if level == 0:
            out = {}
            for x1 in (0.0, 1.0):
                q = float(self.trans_prob(x1, a_suffix[0]))
                out[x1] = float((1 - q) * self.y2(0.0, a_suffix[1])
                                + q * self.y2(1.0, a_suffix[1]))
            return out
        raise ValueError("level must be 0 or 1")

    def mc_response(self, x1: float, a_suffix, n_mc: int = 20000, seed=0) -> MCEstimate:
        """Monte-Carlo counterpart of enumerate_response at level 0."""
        a_suffix = tuple(int(v) for v in a_suffix)
        rng = np.random.default_rng(seed)
        x2 = (rng.uniform(size=n_mc) < float(self.trans_prob(x1, a_suffix[0]))).astype(float)
        y = self.y2(x2, a_suffix[1])
        return MCEstimate(float(y.mean()), float(y.std(ddof=1) / np.sqrt(n_mc)), n_mc)


def make_mini_discrete() -> DiscreteDGP:
    return DiscreteDGP()


_FACTORIES = {
    "d1": make_d1,
    "d2": make_d2,
    "d3": make_d3,
    "linear-chain": make_linear_chain,
    "mini-discrete": make_mini_discrete,
}


def get_dgp(name: str):
    """Look up a DGP by registry name, e.g. "d1" or "d3:gamma=4".

    Parameters after the colon are comma-separated key=value pairs passed to
    the factory as floats.
    """
    base, _, param_str = name.partition(":")
    base = base.strip().lower()
    if base not in _FACTORIES:
        raise ValueError(f"unknown DGP {base!r}; known: {sorted(_FACTORIES)}")
    kwargs = {}
    if param_str:
        for chunk in param_str.split(","):
            key, sep, val = chunk.partition("=")
            if not sep:
                raise ValueError(f"malformed DGP parameter {chunk!r}; expected key=value")
            kwargs[key.strip()] = float(val)
    try:
        return _FACTORIES[base](**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for DGP {base!r}: {exc}") from exc
