"""Nuisance estimation: response surfaces, propensities, history adjustments.

Everything downstream consumes nuisances through :class:`NuisanceSet`, which
answers vectorized queries either from fitted models or, in oracle mode,
straight from a DGP's ground-truth functions (closed-form response surfaces
and exact propensities), so estimator identities can be tested in isolation
from fit quality.

Row bookkeeping lives in :class:`RowTable`: one row per (trajectory i,
time t) with 1 <= t <= T_i - tau, carrying for every level offset
j in {0..tau} the encoded history H_{t+j}, the observed treatment A_{t+j},
and the raw frontier values needed by oracle queries.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .learners import (
    ClassifierSpec,
    FittedClassifier,
    FittedRegressor,
    RegressorSpec,
    fit_classifier,
    fit_regressor,
)
from .panel import FeatureCodec, HistoryView, InterventionPair, Panel, encode_block, \
    encode_history

__all__ = [
    "RowTable",
    "SplitPlan",
    "NuisanceSet",
    "build_row_table",
    "propensity_training_rows",
    "make_split",
    "fit_history_adjustment",
    "fit_response_iterative",
    "fit_propensities",
    "clipped_propensity",
    "fit_nuisances",
    "oracle_nuisances",
    "default_codec",
    "save_nuisances",
    "load_nuisances",
    "SMALL_RESTRICTION_ROWS",
]

SMALL_RESTRICTION_ROWS = 30


def default_codec(panel: Panel) -> FeatureCodec:
    return FeatureCodec(max_len=int(panel.lengths().max()), cov_dim=panel.covariate_dim,
                        treatment_arity=panel.treatment_arity)


class RowTable:
    """Pooled (trajectory, t) rows with per-level-offset views (see module docs).

    Encoded features are built lazily per offset and cached; raw frontier
    arrays (x, previous a/y, absolute time) are always available.  Rows are
    ordered by (trajectory position, t).
    """

    def __init__(self, panel: Panel, tau: int, codec: FeatureCodec,
                 weight_mode: str = "uniform"):
        if tau < 0:
            raise ValueError("tau must be >= 0")
        lengths = panel.lengths()
        if lengths.size == 0:
            raise ValueError("empty panel")
        if tau >= lengths.min():
            raise ValueError("horizon too long: tau >= shortest trajectory length")
        self.panel = panel
        self.tau = tau
        self.codec = codec

        blocks = list(panel.dense_blocks())
        traj, tt = [], []
        for idx, X, A, Y in blocks:
            T = X.shape[1]
            n_t = T - tau
            traj.append(np.repeat(idx, n_t))
            tt.append(np.tile(np.arange(1, n_t + 1), idx.size))
        traj = np.concatenate(traj)
        tt = np.concatenate(tt)
        order = np.lexsort((tt, traj))
        self.traj_id = traj[order]
        self.t = tt[order]
        self.n_rows = self.traj_id.size

        # raw per-offset columns (rows within a trajectory are contiguous and
        # ordered by t after the lexsort, so row(i, t) = first[i] + t - 1)
        K = tau + 1
        x_tail = np.empty((self.n_rows, K))
        aprev = np.zeros((self.n_rows, K))
        yprev = np.zeros((self.n_rows, K))
        a_obs = np.empty((self.n_rows, K), dtype=int)
        y_term = np.empty(self.n_rows)
        self._first = np.searchsorted(self.traj_id, np.arange(panel.n), side="left")
        self._blocks = blocks
        for idx, X, A, Y in blocks:
            T = X.shape[1]
            n_t = T - tau
            ts = np.arange(1, n_t + 1)
            rows = self._first[idx][:, None] + (ts - 1)[None, :]   # (n_block, n_t)
            for j in range(K):
                s = ts + j                 # absolute time of level j
                x_tail[rows, j] = X[:, s - 1, 0]
                a_obs[rows, j] = A[:, s - 1]
                prev = s >= 2
                if prev.any():
                    aprev[rows[:, prev], j] = A[:, s[prev] - 2]
                    yprev[rows[:, prev], j] = Y[:, s[prev] - 2]
            y_term[rows] = Y[:, ts + tau - 1]
        self.x_tail = x_tail
        self.aprev_tail = aprev
        self.yprev_tail = yprev
        self.a_obs = a_obs
        self.y_term = y_term
        self.time_abs = self.t[:, None] + np.arange(K)[None, :]

        if weight_mode == "uniform":
            self.base_weight = np.full(self.n_rows, 1.0 / self.n_rows)
        elif weight_mode == "per_trajectory":
            rows_per = (lengths - tau)[self.traj_id]
            self.base_weight = 1.0 / (panel.n * rows_per)
        else:
            raise ValueError(f"unknown weight_mode {weight_mode!r}")
        self._feat_cache: dict[int, np.ndarray] = {}

    def features(self, j: int) -> np.ndarray:
        """Encoded H_{t+j} for every row (cached)."""
        if not 0 <= j <= self.tau:
            raise ValueError(f"offset {j} outside 0..{self.tau}")
        if j not in self._feat_cache:
            out = np.empty((self.n_rows, self.codec.width))
            for idx, X, A, Y in self._blocks:
                T = X.shape[1]
                for t in range(1, T - self.tau + 1):
                    out[self._first[idx] + (t - 1)] = encode_block(X, A, Y, t + j,
                                                                   self.codec)
            self._feat_cache[j] = out
        return self._feat_cache[j]

    def traj_mask(self, fold_ids: np.ndarray) -> np.ndarray:
        return np.isin(self.traj_id, fold_ids)


def build_row_table(panel: Panel, tau: int, codec: Optional[FeatureCodec] = None,
                    weight_mode: str = "uniform") -> RowTable:
    if codec is None:
        codec = default_codec(panel)
    return RowTable(panel, tau, codec, weight_mode)


def propensity_training_rows(panel: Panel, codec: FeatureCodec):
    """(features, labels, times) over every (trajectory, time) position."""
    feats, labels, times = [], [], []
    for idx, X, A, Y in panel.dense_blocks():
        T = X.shape[1]
        for s in range(1, T + 1):
            feats.append(encode_block(X, A, Y, s, codec))
            labels.append(A[:, s - 1])
            times.append(np.full(idx.size, s, dtype=int))
    return np.concatenate(feats), np.concatenate(labels), np.concatenate(times)


@dataclass(frozen=True)
class SplitPlan:
    """Assignment of trajectory ids to nuisance folds.

    Folds: one per response level offset ("mu_0".."mu_<tau>"), one for the
    propensity model ("pi"), one for the pseudo-outcome second stage ("po").
    Disabled plans map every fold to the full id set.
    """

    enabled: bool
    tau: int
    folds: dict

    def fold(self, name: str) -> np.ndarray:
        return self.folds[name]

    @property
    def fold_names(self) -> list[str]:
        return [f"mu_{j}" for j in range(self.tau + 1)] + ["pi", "po"]


def make_split(panel: Panel, tau: int, enabled: bool, seed=0) -> SplitPlan:
    """Random disjoint partition into tau+3 folds (or the trivial full-set plan)."""
    n = panel.n
    names = [f"mu_{j}" for j in range(tau + 1)] + ["pi", "po"]
    if not enabled:
        full = np.arange(n)
        return SplitPlan(False, tau, {name: full for name in names})
    if n < tau + 3:
        raise ValueError(f"need >= {tau + 3} trajectories to split into {tau + 3} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    parts = np.array_split(perm, len(names))
    return SplitPlan(True, tau, {name: np.sort(part) for name, part in zip(names, parts)})


def _restrict(mask: np.ndarray, what: str):
    k = int(mask.sum())
    if k == 0:
        raise ValueError(what)
    if k < SMALL_RESTRICTION_ROWS:
        warnings.warn(f"{what.split('->')[0].strip()}: only {k} training rows "
                      f"(low-overlap regime)", RuntimeWarning, stacklevel=3)
    return mask


def fit_response_iterative(panel: Panel, a_seq, tau: int, spec: RegressorSpec,
                           split: Optional[SplitPlan] = None,
                           codec: Optional[FeatureCodec] = None,
                           weight_mode: str = "uniform",
                           table: Optional[RowTable] = None) -> list[FittedRegressor]:
    """Backward iterative G-computation for one intervention sequence.

    Level tau regresses the terminal outcome Y_{t+tau} on H_{t+tau} over rows
    with A_{t+tau} = a_tau; every earlier level j regresses the level-(j+1)
    model's predictions at H_{t+j+1} on H_{t+j} over rows with A_{t+j} = a_j.
    With a split plan, level j trains only on trajectories in fold mu_j.
    Returns the tau+1 fitted models ordered by level offset 0..tau.
    """
    a_seq = tuple(int(v) for v in a_seq)
    if len(a_seq) != tau + 1:
        raise ValueError("a_seq must have length tau+1")
    if table is None:
        table = build_row_table(panel, tau, codec, weight_mode)
    if split is None:
        split = make_split(panel, tau, enabled=False)

    models: list[Optional[FittedRegressor]] = [None] * (tau + 1)
    target = table.y_term
    for j in range(tau, -1, -1):
        mask = table.traj_mask(split.fold(f"mu_{j}")) & (table.a_obs[:, j] == a_seq[j])
        _restrict(mask, f"response level {j} (arm {a_seq[j]}) -> no rows with "
                        f"A_(t+{j}) = {a_seq[j]} in its fold")
        models[j] = fit_regressor(spec, table.features(j)[mask], target[mask],
                                  table.base_weight[mask], codec=table.codec)
        if j > 0:
            # next iteration's target: this model's predictions at H_{t+j}
            target = models[j].predict(table.features(j))
    return models


def fit_history_adjustment(panel: Panel, pair: InterventionPair, tau: int,
                           spec: RegressorSpec, split: Optional[SplitPlan] = None,
                           codec: Optional[FeatureCodec] = None,
                           weight_mode: str = "uniform",
                           table: Optional[RowTable] = None) -> dict:
    """Direct regressions E[Y_{t+tau} | H_t, observed arms = sequence].

    One regressor per intervention sequence, fitted on rows whose observed
    treatment path A_{t:t+tau} equals that sequence (trained on fold mu_0
    when splitting).  Raises when a path is never observed.
    """
    if pair.tau != tau:
        raise ValueError("pair horizon does not match tau")
    if table is None:
        table = build_row_table(panel, tau, codec, weight_mode)
    if split is None:
        split = make_split(panel, tau, enabled=False)
    fold_mask = table.traj_mask(split.fold("mu_0"))
    out = {}
    for key, seq in (("a", pair.a_seq), ("b", pair.b_seq)):
        mask = fold_mask & np.all(table.a_obs == np.asarray(seq), axis=1)
        if not mask.any():
            raise ValueError(f"intervention path unobserved: no rows with observed "
                             f"arms {seq} (low overlap)")
        _restrict(mask, f"history adjustment (arms {seq}) -> unreachable")
        out[key] = fit_regressor(spec, table.features(0)[mask], table.y_term[mask],
                                 table.base_weight[mask], codec=table.codec)
        if key == "a" and pair.a_seq == pair.b_seq:
            out["b"] = out["a"]
            break
    return out


def fit_propensities(panel: Panel, spec: ClassifierSpec,
                     split: Optional[SplitPlan] = None,
                     codec: Optional[FeatureCodec] = None,
                     tau: int = 0) -> FittedClassifier:
    """Single time-pooled treatment classifier over encoded histories.

    Histories are encoded with the time index included, so one model covers
    every time step.
    """
    if codec is None:
        codec = default_codec(panel)
    if not codec.include_time_index:
        raise ValueError("propensity codec must include the time index")
    if split is None:
        split = make_split(panel, tau, enabled=False)
    sub = panel.subset(split.fold("pi")) if split.enabled else panel
    feats, labels, _ = propensity_training_rows(sub, codec)
    return fit_classifier(spec, feats, labels, n_classes=panel.treatment_arity,
                          codec=codec)


def clipped_propensity(model: FittedClassifier, h: HistoryView, a: int,
                       clip_eps: float) -> float:
    """Estimated P(A_t = a | H_t = h) clamped into [clip_eps, 1 - clip_eps]."""
    if not 0.0 < clip_eps < 0.5:
        raise ValueError("clip_eps must lie in (0, 0.5)")
    codec = model.codec
    if codec is None:
        raise ValueError("classifier carries no codec; encode the history yourself")
    raw = float(model.predict_proba(encode_history(h, codec))[int(a)])
    return float(np.clip(raw, clip_eps, 1.0 - clip_eps))


@dataclass(frozen=True)
class NuisanceSet:
    """All nuisances behind one query interface (fitted or oracle).

    In oracle mode, response-surface queries evaluate the DGP's closed-form
    surfaces and propensity queries evaluate the exact structural logits, so
    each query reproduces the simulator oracles bit for bit (then the same
    clipping is applied on top).  ``override_propensity`` and
    ``override_response`` are deliberate-corruption hooks for double-
    robustness experiments and identity checks: an overridden propensity is
    used verbatim (no clipping), and the response override may be a scalar
    or a nested mapping ``{arm: {level_offset: value}}``.
    """

    pair: InterventionPair
    tau: int
    codec: FeatureCodec
    clip_eps: float
    split: SplitPlan
    oracle_mode: bool = False
    response_models: Optional[dict] = None       # {"a"|"b": [models by offset]}
    propensity_model: Optional[FittedClassifier] = None
    history_models: Optional[dict] = None        # {"a"|"b": model}
    dgp: object = None
    oracle_history_mc: int = 4000
    override_propensity: Optional[float] = None
    override_response: object = None

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 0.5:
            raise ValueError("clip_eps must lie in (0, 0.5)")
        if self.oracle_mode:
            if self.dgp is None:
                raise ValueError("oracle mode needs a dgp")
            if getattr(self.dgp, "response_form", None) is None:
                raise ValueError("oracle mode needs a DGP with closed-form response "
                                 "surfaces (response_form)")

    def _seq(self, arm: str):
        return {"a": self.pair.a_seq, "b": self.pair.b_seq}[arm]

    def _response_override(self, arm: str, j: int) -> float:
        v = self.override_response
        if isinstance(v, dict):
            v = v[arm]
            if isinstance(v, dict):
                v = v[j]
        return float(v)

    # -- response surfaces ------------------------------------------------
    def mu(self, arm: str, j: int, table: RowTable) -> np.ndarray:
        """mu-hat for arm at level offset j, for every row of the table."""
        if not 0 <= j <= self.tau:
            raise ValueError(f"level offset {j} outside 0..{self.tau}")
        if self.override_response is not None:
            return np.full(table.n_rows, self._response_override(arm, j))
        if self.oracle_mode:
            form = self.dgp.response_form
            return np.asarray(form.capo(table.x_tail[:, j], self.tau - j,
                                        self._seq(arm)[-1], self.dgp.x_sd))
        self._need_response(arm)
        return self.response_models[arm][j].predict(table.features(j))

    def mu_at_histories(self, arm: str, histories: Sequence[HistoryView]) -> np.ndarray:
        """mu-hat at level offset 0 for arbitrary histories (plug-in predictions)."""
        if self.override_response is not None:
            return np.full(len(histories), self._response_override(arm, 0))
        if self.oracle_mode:
            form = self.dgp.response_form
            x = np.array([float(h.x_prefix[-1, 0]) for h in histories])
            return np.asarray(form.capo(x, self.tau, self._seq(arm)[-1], self.dgp.x_sd))
        self._need_response(arm)
        feats = np.array([encode_history(h, self.codec) for h in histories])
        return self.response_models[arm][0].predict(feats)

    def _need_response(self, arm: str):
        if self.response_models is None or arm not in self.response_models:
            raise ValueError(f"missing response models for arm {arm!r}")
        if any(m is None for m in self.response_models[arm]):
            raise ValueError(f"missing nuisance level for arm {arm!r}")

    # -- propensities ------------------------------------------------------
    def propensity(self, j: int, a_value: int, table: RowTable):
        """(clipped, raw) estimated P(A_{t+j} = a_value | H_{t+j}) per row."""
        if self.override_propensity is not None:
            raw = np.full(table.n_rows, self.override_propensity
                          if a_value == 1 else 1.0 - self.override_propensity)
            return raw.copy(), raw      # injected values are used verbatim
        if self.oracle_mode:
            a_prev = table.aprev_tail[:, j].copy()
            first = table.time_abs[:, j] == 1
            a_prev[first] = float(self.dgp.a0)
            p1 = expit(self.dgp.f_a(table.x_tail[:, j], a_prev, table.yprev_tail[:, j]))
            raw = p1 if a_value == 1 else 1.0 - p1
        else:
            if self.propensity_model is None:
                raise ValueError("missing propensity model")
            raw = self.propensity_model.predict_proba(table.features(j))[:, int(a_value)]
        return np.clip(raw, self.clip_eps, 1.0 - self.clip_eps), raw

    # -- history adjustments ----------------------------------------------
    def delta_at_histories(self, arm: str, histories: Sequence[HistoryView]) -> np.ndarray:
        if self.oracle_mode:
            from .dgp import oracle_history_adjustment
            seq = self._seq(arm)
            out = np.empty(len(histories))
            for i, h in enumerate(histories):
                out[i] = oracle_history_adjustment(self.dgp, h, seq,
                                                   n_mc=self.oracle_history_mc,
                                                   seed=[1299721, i]).value
            return out
        if self.history_models is None or arm not in self.history_models:
            raise ValueError(f"missing history-adjustment model for arm {arm!r}")
        feats = np.array([encode_history(h, self.codec) for h in histories])
        return self.history_models[arm].predict(feats)

    def delta_features(self, arm: str, feats: np.ndarray) -> np.ndarray:
        if self.oracle_mode:
            raise ValueError("oracle history adjustment needs full histories, "
                             "not encoded features")
        if self.history_models is None or arm not in self.history_models:
            raise ValueError(f"missing history-adjustment model for arm {arm!r}")
        return self.history_models[arm].predict(feats)

    # -- corruption hooks ---------------------------------------------------
    def corrupted(self, propensity: Optional[float] = None,
                  response: Optional[float] = None) -> "NuisanceSet":
        """Copy with constant-propensity and/or constant-response overrides."""
        return replace(self, override_propensity=propensity, override_response=response)


def fit_nuisances(panel: Panel, pair: InterventionPair, *,
                  regressor_spec: RegressorSpec = RegressorSpec(),
                  classifier_spec: ClassifierSpec = ClassifierSpec(),
                  split: Optional[SplitPlan] = None, clip_eps: float = 0.01,
                  codec: Optional[FeatureCodec] = None, weight_mode: str = "uniform",
                  need: Sequence[str] = ("response", "propensity", "history"),
                  table: Optional[RowTable] = None) -> NuisanceSet:
    """Fit the full nuisance collection for one intervention pair."""
    tau = pair.tau
    if codec is None:
        codec = default_codec(panel)
    if split is None:
        split = make_split(panel, tau, enabled=False)
    if table is None:
        table = build_row_table(panel, tau, codec, weight_mode)

    response_models = None
    if "response" in need:
        response_models = {"a": fit_response_iterative(panel, pair.a_seq, tau,
                                                       regressor_spec, split, table=table)}
        if pair.b_seq == pair.a_seq:
            response_models["b"] = response_models["a"]
        else:
            response_models["b"] = fit_response_iterative(panel, pair.b_seq, tau,
                                                          regressor_spec, split, table=table)
    propensity_model = None
    if "propensity" in need:
        propensity_model = fit_propensities(panel, classifier_spec, split, codec, tau)
    history_models = None
    if "history" in need:
        history_models = fit_history_adjustment(panel, pair, tau, regressor_spec,
                                                split, table=table)
    return NuisanceSet(pair=pair, tau=tau, codec=codec, clip_eps=clip_eps, split=split,
                       response_models=response_models, propensity_model=propensity_model,
                       history_models=history_models)


def oracle_nuisances(dgp, pair: InterventionPair, clip_eps: float = 0.01,
                     codec: Optional[FeatureCodec] = None,
                     oracle_history_mc: int = 4000) -> NuisanceSet:
    """NuisanceSet that answers every query from the DGP's ground truth."""
    if codec is None:
        codec = FeatureCodec(max_len=dgp.horizon, cov_dim=1,
                             treatment_arity=dgp.treatment_arity)
    split = SplitPlan(False, pair.tau, {name: np.arange(0)
                                        for name in
                                        [f"mu_{j}" for j in range(pair.tau + 1)]
                                        + ["pi", "po"]})
    return NuisanceSet(pair=pair, tau=pair.tau, codec=codec, clip_eps=clip_eps,
                       split=split, oracle_mode=True, dgp=dgp,
                       oracle_history_mc=oracle_history_mc)


# -- bundle serialization ----------------------------------------------------

def _split_to_dict(split: SplitPlan) -> dict:
    return {"enabled": split.enabled, "tau": split.tau,
            "folds": {k: v.tolist() for k, v in split.folds.items()}}


def _split_from_dict(state: dict) -> SplitPlan:
    return SplitPlan(bool(state["enabled"]), int(state["tau"]),
                     {k: np.array(v, dtype=int) for k, v in state["folds"].items()})


def nuisances_to_dict(ns: NuisanceSet) -> dict:
    """JSON-compatible bundle (model parameters + specs + split plan)."""
    if ns.oracle_mode:
        name = getattr(ns.dgp, "name", None)
        state = {"oracle_mode": True, "dgp": name,
                 "oracle_history_mc": ns.oracle_history_mc}
    else:
        state = {
            "oracle_mode": False,
            "response_models": None if ns.response_models is None else
                {arm: [m.to_dict() for m in models]
                 for arm, models in ns.response_models.items()},
            "propensity_model": None if ns.propensity_model is None
                else ns.propensity_model.to_dict(),
            "history_models": None if ns.history_models is None else
                {arm: m.to_dict() for arm, m in ns.history_models.items()},
        }
    state.update({
        "pair": {"a_seq": list(ns.pair.a_seq), "b_seq": list(ns.pair.b_seq)},
        "tau": ns.tau,
        "clip_eps": ns.clip_eps,
        "codec": ns.codec.__dict__,
        "split": _split_to_dict(ns.split),
    })
    return state


def nuisances_from_dict(state: dict) -> NuisanceSet:
    pair = InterventionPair(tuple(state["pair"]["a_seq"]), tuple(state["pair"]["b_seq"]))
    codec = FeatureCodec(**state["codec"])
    split = _split_from_dict(state["split"])
    common = dict(pair=pair, tau=int(state["tau"]), codec=codec,
                  clip_eps=float(state["clip_eps"]), split=split)
    if state["oracle_mode"]:
        from .dgp import get_dgp
        if state["dgp"] is None:
            raise ValueError("oracle bundle lacks a registered DGP name")
        return NuisanceSet(oracle_mode=True, dgp=get_dgp(state["dgp"]),
                           oracle_history_mc=int(state["oracle_history_mc"]), **common)
    rm = state["response_models"]
    pm = state["propensity_model"]
    hm = state["history_models"]
    return NuisanceSet(
        response_models=None if rm is None else
            {arm: [FittedRegressor.from_dict(d) for d in models]
             for arm, models in rm.items()},
        propensity_model=None if pm is None else FittedClassifier.from_dict(pm),
        history_models=None if hm is None else
            {arm: FittedRegressor.from_dict(d) for arm, d in hm.items()},
        **common)


def save_nuisances(ns: NuisanceSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(nuisances_to_dict(ns), fh)


def load_nuisances(path) -> NuisanceSet:
    with open(path) as fh:
        return nuisances_from_dict(json.load(fh))
