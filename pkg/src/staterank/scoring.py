"""Cross-model score normalization and proxy-score aggregation.

Raw per-state scores are min-max normalized per state across models, then
averaged over states into a single proxy score per model. States whose
scores are identical across all models carry no ranking signal and are
dropped from the mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .probe import PerStateScores
from .states import STATE_GROUPS


@dataclass(frozen=True)
class ScoreMatrix:
    """Raw (and optionally normalized) model-by-state score matrix.

    Dropped states keep their raw column; their normalized column is NaN
    and they are excluded from aggregation.
    """

    models: tuple[str, ...]
    states: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray | None = None
    dropped_states: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "states", tuple(self.states))
        raw = np.asarray(self.raw, dtype=np.float64)
        object.__setattr__(self, "raw", raw)
        if raw.shape != (len(self.models), len(self.states)):
            raise ValueError(
                f"raw matrix shape {raw.shape} does not match "
                f"{len(self.models)} models x {len(self.states)} states"
            )
        if len(set(self.models)) != len(self.models):
            raise ValueError("duplicate model ids")
        if len(set(self.states)) != len(self.states):
            raise ValueError("duplicate state names")
        if not np.isfinite(raw).all():
            raise ValueError("raw scores must be finite")


def build_score_matrix(model_scores: Mapping[str, PerStateScores]) -> ScoreMatrix:
    """Assemble a raw matrix from per-model score maps.

    Keeps the states scored by every model, in canonical group order
    (extra non-canonical states follow alphabetically).
    """
    if len(model_scores) < 2:
        raise ValueError("need scores for at least 2 models")
    models = tuple(model_scores)
    common = set.intersection(*(set(s.scores) for s in model_scores.values()))
    if not common:
        raise ValueError("models share no scored states")
    ordered = [s for s in STATE_GROUPS if s in common]
    ordered += sorted(common - set(STATE_GROUPS))
    raw = np.array(
        [[model_scores[m].scores[s] for s in ordered] for m in models]
    )
    return ScoreMatrix(models=models, states=tuple(ordered), raw=raw)


def normalize_scores(matrix: ScoreMatrix) -> ScoreMatrix:
    """Min-max normalize each state across models into [0, 1].

    States with max == min are moved to `dropped_states`.
    """
    if len(matrix.models) < 2:
        raise ValueError("min-max normalization needs at least 2 models")
    raw = matrix.raw
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    dropped = hi == lo
    normalized = np.full_like(raw, np.nan)
    keep = ~dropped
    normalized[:, keep] = (raw[:, keep] - lo[keep]) / (hi[keep] - lo[keep])
    return replace(
        matrix,
        normalized=normalized,
        dropped_states=tuple(s for s, d in zip(matrix.states, dropped) if d),
    )


def aggregate(matrix: ScoreMatrix) -> dict[str, float]:
    """Mean of normalized scores over retained states, per model."""
    if matrix.normalized is None:
        raise ValueError("matrix has not been normalized")
    keep = [i for i, s in enumerate(matrix.states) if s not in matrix.dropped_states]
    if not keep:
        raise ValueError("all states were dropped; nothing to aggregate")
    means = matrix.normalized[:, keep].mean(axis=1)
    return {m: float(v) for m, v in zip(matrix.models, means)}


def subset_score(matrix: ScoreMatrix, subset: Iterable[str]) -> dict[str, float]:
    """Normalize + aggregate restricted to a subset of states."""
    subset = list(subset)
    if not subset:
        raise ValueError("subset must be non-empty")
    unknown = [s for s in subset if s not in matrix.states]
    if unknown:
        raise ValueError(f"unknown state names: {unknown}")
    cols = [matrix.states.index(s) for s in subset]
    sub = ScoreMatrix(
        models=matrix.models,
        states=tuple(subset),
        raw=matrix.raw[:, cols],
    )
    return aggregate(normalize_scores(sub))


def leave_one_out(matrix: ScoreMatrix) -> dict[str, dict[str, float]]:
    """Score map per omitted state: subset_score over all other states."""
    if len(matrix.states) < 2:
        raise ValueError("need at least 2 states for leave-one-out")
    return {
        omitted: subset_score(matrix, [s for s in matrix.states if s != omitted])
        for omitted in matrix.states
    }


def write_matrix_csv(matrix: ScoreMatrix, path: Path | str, which: str = "raw") -> None:
    """Export the model-by-state matrix as delimited text."""
    if which == "raw":
        values = matrix.raw
    elif which == "normalized":
        if matrix.normalized is None:
            raise ValueError("matrix has not been normalized")
        values = matrix.normalized
    else:
        raise ValueError(f"unknown matrix kind {which!r}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", *matrix.states])
        for m, row in zip(matrix.models, values):
            writer.writerow([m, *[repr(float(v)) for v in row]])
