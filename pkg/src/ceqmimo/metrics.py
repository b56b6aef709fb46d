"""Achievable-rate metrics and their aggregation over channel realizations.

Rates ignore the cyclic-prefix overhead and average over the subcarriers that
carry data (the rows of the SQINR table).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .validation import check_sqinr_table

RESULT_FIELDS = [
    "realization_id",
    "algorithm",
    "b",
    "K",
    "N_BS",
    "N_SC",
    "P_bs_dbm",
    "est_error",
    "status",
    "sum_rate",
    "min_rate",
]


def user_rates(sqinr) -> np.ndarray:
    """Per-user rate ``(1/N) sum_n log2(1 + gamma_{k,n})`` for an ``[N, K]`` table."""
    s = check_sqinr_table(sqinr)
    if s.ndim != 2:
        raise ValueError("expected an [n_subcarriers, K] SQINR table")
    return np.log2(1.0 + s).mean(axis=0)


def sum_rate(sqinr) -> float:
    return float(math.fsum(user_rates(sqinr)))


def min_rate(sqinr) -> float:
    return float(np.min(user_rates(sqinr)))


@dataclass
class RateAccumulator:
    """Order-independent ergodic averages (exactly rounded sums via ``math.fsum``)."""

    sum_rates: list = field(default_factory=list)
    min_rates: list = field(default_factory=list)

    def add(self, sqinr) -> None:
        self.sum_rates.append(sum_rate(sqinr))
        self.min_rates.append(min_rate(sqinr))

    def merge(self, other: "RateAccumulator") -> "RateAccumulator":
        return RateAccumulator(self.sum_rates + other.sum_rates, self.min_rates + other.min_rates)

    @property
    def count(self) -> int:
        return len(self.sum_rates)

    @property
    def ergodic_sum_rate(self) -> float:
        return math.fsum(self.sum_rates) / self.count if self.count else math.nan

    @property
    def ergodic_min_rate(self) -> float:
        return math.fsum(self.min_rates) / self.count if self.count else math.nan


def ergodic(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def format_value(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.12g}"
    return str(v)


def write_results_csv(path, rows, n_user_columns: int, extra_fields=()) -> None:
    """Write result rows; per-user rate columns ``user_rate_0..`` are padded with blanks."""
    user_fields = [f"user_rate_{k}" for k in range(n_user_columns)]
    fields = RESULT_FIELDS + user_fields + list(extra_fields)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            out = {k: format_value(row.get(k, "")) for k in RESULT_FIELDS + list(extra_fields)}
            rates = row.get("user_rates", [])
            for k, name in enumerate(user_fields):
                out[name] = format_value(float(rates[k])) if k < len(rates) else ""
            w.writerow(out)


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
