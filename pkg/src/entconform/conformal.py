"""Split conformal calibration and prediction-set construction.

The split procedure (Papadopoulos et al., 2002; Vovk et al., 2005):
score every calibration pair, take the ceil((n+1)(1-alpha))-th smallest
score as the threshold q_hat, and at test time emit every label whose
score is at most q_hat.  Under exchangeability the resulting sets contain
the true label with probability at least 1 - alpha.

For the rank-gap score family this calibration has a second reading: the
set ``{y : score(z, y) <= q_hat}`` is exactly the support of gamma-entmax
applied to ``beta * z`` with ``beta = delta / q_hat``, so ``q_hat``
determines a temperature.  :func:`support_set_via_entmax` computes the
set from that side (through the activation, not the score inequality) so
the two routes can check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .activations import (
    _as_logit_rows,
    _as_logits,
    _entmax_bisect_batch,
    _sparsemax_batch,
)
from .errors import (
    DimensionMismatch,
    EmptyCalibration,
    InvalidGamma,
    InvalidInput,
    LabelOutOfRange,
)
from .scores import RapsParams, ScoreKind, all_label_scores, true_label_scores

__all__ = [
    "CalibratedPredictor",
    "LabeledLogitDataset",
    "PredictionSet",
    "calibrate",
    "conformal_quantile",
    "predict_set",
    "predict_sets",
    "support_set_via_entmax",
    "support_sets_via_entmax",
]


@dataclass(frozen=True)
class PredictionSet:
    """A sorted set of label indices predicted for one instance."""

    labels: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.labels)

    def __contains__(self, label: int) -> bool:
        return label in self.labels

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "PredictionSet":
        return cls(tuple(int(i) for i in np.flatnonzero(mask)))


@dataclass(frozen=True)
class LabeledLogitDataset:
    """Score vectors paired with true labels, all sharing one class count."""

    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if logits.ndim != 2 or logits.shape[1] < 2:
            raise InvalidInput("logits must be a 2-D array with at least 2 classes")
        if labels.shape != (logits.shape[0],):
            raise DimensionMismatch("labels must match the number of instances")
        if not np.all(np.isfinite(logits)):
            raise InvalidInput("logits must be finite")
        if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
            raise LabelOutOfRange("labels must lie in [0, K)")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def num_classes(self) -> int:
        return int(self.logits.shape[1])

    def subset(self, indices) -> "LabeledLogitDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledLogitDataset(self.logits[indices], self.labels[indices])


@dataclass(frozen=True)
class CalibratedPredictor:
    """A score kind, its calibrated threshold, and the induced temperature.

    ``q_hat`` is the ceil((n+1)(1-alpha))-th smallest calibration score,
    or +inf when that index exceeds n.  ``beta_inv`` (the temperature) is
    ``(gamma - 1) * q_hat`` for the entmax kind and ``q_hat`` itself for
    sparsemax; it is None for kinds without a temperature reading.
    ``num_classes`` is kept for shape checking but is not serialized.
    """

    score_kind: ScoreKind
    alpha: float
    q_hat: float
    beta_inv: float | None
    calib_n: int
    num_classes: int | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "score_kind": self.score_kind.variant,
            "alpha": self.alpha,
            "q_hat": "inf" if math.isinf(self.q_hat) else self.q_hat,
            "calib_n": self.calib_n,
        }
        if self.score_kind.variant == "entmax":
            doc["gamma"] = self.score_kind.gamma
        if self.score_kind.variant == "raps":
            p = self.score_kind.raps_params
            doc["raps_params"] = {
                "lambda_reg": p.lambda_reg,
                "k_reg": p.k_reg,
                "randomized": p.randomized,
                "rng_seed": p.rng_seed,
            }
        if self.beta_inv is not None:
            doc["beta_inv"] = "inf" if math.isinf(self.beta_inv) else self.beta_inv
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CalibratedPredictor":
        variant = doc["score_kind"]
        if variant == "entmax":
            kind = ScoreKind.entmax(float(doc["gamma"]))
        elif variant == "raps":
            rp = doc["raps_params"]
            kind = ScoreKind.raps(
                RapsParams(
                    lambda_reg=float(rp["lambda_reg"]),
                    k_reg=int(rp["k_reg"]),
                    randomized=bool(rp["randomized"]),
                    rng_seed=int(rp["rng_seed"]),
                )
            )
        else:
            kind = ScoreKind(variant)
        q_hat = doc["q_hat"]
        q_hat = math.inf if q_hat == "inf" else float(q_hat)
        beta_inv = doc.get("beta_inv")
        if beta_inv is not None:
            beta_inv = math.inf if beta_inv == "inf" else float(beta_inv)
        return cls(
            score_kind=kind,
            alpha=float(doc["alpha"]),
            q_hat=q_hat,
            beta_inv=beta_inv,
            calib_n=int(doc["calib_n"]),
        )


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def conformal_quantile(scores, alpha: float) -> float:
    """ceil((n+1)(1-alpha))-th smallest score, or +inf when out of range.

    Duplicates count: this is the order statistic, not an interpolated
    quantile.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise InvalidInput("scores must be a 1-D sequence")
    n = scores.size
    if n == 0:
        raise EmptyCalibration("no calibration scores")
    if not np.all(np.isfinite(scores)):
        raise InvalidInput("calibration scores must be finite")
    alpha = _check_alpha(alpha)
    r = math.ceil((n + 1) * (1.0 - alpha))
    if r > n:
        return math.inf
    return float(np.partition(scores, r - 1)[r - 1])


def calibrate(cal: LabeledLogitDataset, kind: ScoreKind, alpha: float) -> CalibratedPredictor:
    """Score the calibration pairs and fix the inclusion threshold.

    For the randomized RAPS kind, per-instance uniform weights are drawn
    from ``default_rng(params.rng_seed)`` so calibration is reproducible.
    """
    alpha = _check_alpha(alpha)
    if cal.n == 0:
        raise EmptyCalibration("calibration dataset is empty")
    u = None
    if kind.variant == "raps" and kind.raps_params.randomized:
        u = np.random.default_rng(kind.raps_params.rng_seed).uniform(size=cal.n)
    s = true_label_scores(cal.logits, cal.labels, kind, u=u)
    q_hat = conformal_quantile(s, alpha)
    delta_inv = kind.delta_inv()
    beta_inv = None if delta_inv is None else delta_inv * q_hat
    return CalibratedPredictor(
        score_kind=kind,
        alpha=alpha,
        q_hat=q_hat,
        beta_inv=beta_inv,
        calib_n=cal.n,
        num_classes=cal.num_classes,
    )


def predict_sets(Z, pred: CalibratedPredictor, u=None) -> list[PredictionSet]:
    """Prediction sets for a batch of test score vectors.

    Includes every label whose score is at most ``pred.q_hat``
    (everything, when calibration could not certify the requested level
    and ``q_hat`` is +inf).  For the randomized RAPS kind with ``u`` not
    given, per-instance weights are drawn from
    ``default_rng(params.rng_seed + 1)``: a stream distinct from the
    calibration draws, and deterministic.
    """
    Z = _as_logit_rows(Z)
    if pred.num_classes is not None and Z.shape[1] != pred.num_classes:
        raise DimensionMismatch(
            f"predictor was calibrated with K={pred.num_classes}, got {Z.shape[1]}"
        )
    if math.isinf(pred.q_hat):
        full = PredictionSet(tuple(range(Z.shape[1])))
        return [full] * Z.shape[0]
    kind = pred.score_kind
    if kind.variant == "raps" and kind.raps_params.randomized and u is None:
        u = np.random.default_rng(kind.raps_params.rng_seed + 1).uniform(size=Z.shape[0])
    s = all_label_scores(Z, kind, u=u)
    mask = s <= pred.q_hat
    return [PredictionSet.from_mask(row) for row in mask]


def predict_set(z, pred: CalibratedPredictor, u=None) -> PredictionSet:
    """Prediction set for a single test score vector."""
    z = _as_logits(z)
    uu = None if u is None else np.asarray([u], dtype=np.float64)
    return predict_sets(z[None, :], pred, u=uu)[0]


def support_sets_via_entmax(
    Z,
    beta: float,
    gamma: float,
    *,
    bisect_tol: float = 1e-16,
    max_iters: int = 100,
) -> list[PredictionSet]:
    """Supports of ``gamma-entmax(beta * Z)``, row by row.

    Computed through the activation (closed form at gamma = 2, bisection
    otherwise), never through the score inequality, so this is an
    independent route to the same sets as :func:`predict_sets` with the
    matching rank-gap kind and ``q_hat = delta / beta``.  The default
    solver settings are tighter than :class:`EntmaxConfig`'s because this
    function exists to adjudicate set membership.
    """
    Z = _as_logit_rows(Z)
    if not np.isfinite(beta) or beta <= 0.0:
        raise InvalidInput(f"beta must be finite and positive, got {beta}")
    if not 1.0 < gamma <= 2.0:
        raise InvalidGamma(f"gamma must lie in (1, 2], got {gamma}")
    Zb = beta * Z
    if gamma == 2.0:
        probs, _ = _sparsemax_batch(Zb)
        masks = probs > 0.0
    else:
        _, _, masks = _entmax_bisect_batch(Zb, gamma, bisect_tol, max_iters)
    return [PredictionSet.from_mask(row) for row in masks]


def support_set_via_entmax(
    z,
    beta: float,
    gamma: float,
    *,
    bisect_tol: float = 1e-16,
    max_iters: int = 100,
) -> PredictionSet:
    """Support of ``gamma-entmax(beta * z)`` for a single vector."""
    z = _as_logits(z)
    sets = support_sets_via_entmax(
        z[None, :], beta, gamma, bisect_tol=bisect_tol, max_iters=max_iters
    )
    return sets[0]
