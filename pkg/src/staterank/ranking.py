"""Ranking-fidelity metrics between proxy scores and policy success rates.

A pair of models violates the ranking when the proxy orders them opposite
to their success rates; the violation is weighted by the success-rate gap.
The headline metric averages each model's worst pairwise violation. The
strict-< tie semantics are applied literally: with equal proxy scores but
different success rates, exactly one ordering direction of the pair counts
as a violation (see the worked example in the README).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RankInput:
    """Aligned per-model success rates (in [0, 1]) and proxy scores."""

    models: tuple[str, ...]
    success: np.ndarray
    proxy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        success = np.asarray(self.success, dtype=np.float64)
        proxy = np.asarray(self.proxy, dtype=np.float64)
        object.__setattr__(self, "success", success)
        object.__setattr__(self, "proxy", proxy)
        n = len(self.models)
        if n < 2:
            raise ValueError("need at least 2 models")
        if success.shape != (n,) or proxy.shape != (n,):
            raise ValueError(
                f"success/proxy must both have shape ({n},), got "
                f"{success.shape} and {proxy.shape}"
            )
        if not (np.isfinite(success).all() and np.isfinite(proxy).all()):
            raise ValueError("success rates and proxy scores must be finite")
        if success.min() < 0 or success.max() > 1:
            raise ValueError("success rates must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.models)


def rank_violation(i: int, j: int, inp: RankInput) -> float:
    """|R_i - R_j| when the strict-< orderings of proxy and success disagree."""
    if i == j:
        raise ValueError("rank_violation requires i != j")
    r_i, r_j = float(inp.success[i]), float(inp.success[j])
    s_i, s_j = float(inp.proxy[i]), float(inp.proxy[j])
    if (s_i < s_j) != (r_i < r_j):
        return abs(r_i - r_j)
    return 0.0


def violation_matrix(inp: RankInput) -> np.ndarray:
    r = inp.success
    s = inp.proxy
    disagree = (s[:, None] < s[None, :]) != (r[:, None] < r[None, :])
    return np.abs(r[:, None] - r[None, :]) * disagree


def mmrv(inp: RankInput) -> float:
    """Mean over models of their worst pairwise rank violation.

    The mean accumulates in model order so the result is bit-identical to
    a naive loop over the same doubles.
    """
    worst = violation_matrix(inp).max(axis=1)
    total = 0.0
    for w in worst.tolist():
        total += w
    return total / inp.n


def pearson(inp: RankInput) -> float:
    """Product-moment correlation between success rates and proxy scores."""
    r = inp.success - inp.success.mean()
    s = inp.proxy - inp.proxy.mean()
    rr = float(r @ r)
    ss = float(s @ s)
    if rr == 0.0 or ss == 0.0:
        raise ValueError(
            "undefined correlation: success rates or proxy scores are constant"
        )
    return float((r @ s) / np.sqrt(rr * ss))


@dataclass(frozen=True)
class RankReport:
    """Full ranking-fidelity report for one model set."""

    models: tuple[str, ...]
    success: tuple[float, ...]
    proxy: tuple[float, ...]
    mmrv: float
    pearson_r: float
    violations: np.ndarray
    worst_pair: tuple[tuple[str, float] | None, ...]

    def to_dict(self) -> dict:
        return {
            "models": list(self.models),
            "success": list(self.success),
            "proxy": list(self.proxy),
            "mmrv": self.mmrv,
            "pearson_r": self.pearson_r,
            "violations": [list(map(float, row)) for row in self.violations],
            "worst_pair": [
                None if wp is None else {"model": wp[0], "violation": wp[1]}
                for wp in self.worst_pair
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankReport":
        return cls(
            models=tuple(d["models"]),
            success=tuple(float(v) for v in d["success"]),
            proxy=tuple(float(v) for v in d["proxy"]),
            mmrv=float(d["mmrv"]),
            pearson_r=float(d["pearson_r"]),
            violations=np.array(d["violations"], dtype=np.float64),
            worst_pair=tuple(
                None if wp is None else (wp["model"], float(wp["violation"]))
                for wp in d["worst_pair"]
            ),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RankReport":
        return cls.from_dict(json.loads(text))

    def to_text(self) -> str:
        """Human-readable table: per-model scores plus MMRV / Pearson rows."""
        width = max(12, *(len(m) for m in self.models))
        lines = [
            f"{'model':<{width}}  {'success':>8}  {'proxy':>8}  worst violation",
        ]
        for i, m in enumerate(self.models):
            wp = self.worst_pair[i]
            wp_text = "-" if wp is None else f"{wp[1]:.4f} (vs {wp[0]})"
            lines.append(
                f"{m:<{width}}  {self.success[i]:>8.4f}  {self.proxy[i]:>8.4f}  {wp_text}"
            )
        lines.append("")
        lines.append(f"MMRV      {self.mmrv:.4f}")
        lines.append(f"Pearson r {self.pearson_r:.4f}")
        return "\n".join(lines) + "\n"


def rank_report(inp: RankInput) -> RankReport:
    """Violation matrix, MMRV, Pearson and each model's worst pair."""
    v = violation_matrix(inp)
    worst = []
    for i in range(inp.n):
        j = int(v[i].argmax())
        worst.append((inp.models[j], float(v[i, j])) if v[i, j] > 0 else None)
    return RankReport(
        models=inp.models,
        success=tuple(float(x) for x in inp.success),
        proxy=tuple(float(x) for x in inp.proxy),
        mmrv=mmrv(inp),
        pearson_r=pearson(inp),
        violations=v,
        worst_pair=tuple(worst),
    )


def write_report(report: RankReport, json_path: Path | str, text_path: Path | str) -> None:
    Path(json_path).write_text(report.to_json())
    Path(text_path).write_text(report.to_text())
