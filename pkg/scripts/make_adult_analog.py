#!/usr/bin/env python3
"""Generate the census-like 500-row sample shipped at data/adult_analog_500.csv.

Deterministic (fixed seed).  Columns: age, education-num, hours-per-week,
sex, income.  Feature distributions are group-correlated so the
covariance bound binds over a nontrivial tolerance range.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

N = 500
SEED = 2024


def main() -> None:
    rng = np.random.default_rng(SEED)
    sex = (rng.random(N) < 0.67).astype(int)  # 1 = Male, 0 = Female
    age = np.clip(rng.normal(38.5, 13.0, N), 17, 90).round().astype(int)
    edu = np.clip(rng.normal(10.0 + 0.3 * sex, 2.5, N), 1, 16).round().astype(int)
    hours = np.clip(rng.normal(36.0 + 6.0 * sex, 11.0, N), 1, 99).round().astype(int)
    score = (
        0.045 * (age - 38.5)
        + 0.32 * (edu - 10.0)
        + 0.055 * (hours - 40.0)
        + 0.85 * sex
        - 1.35
        + rng.logistic(0.0, 1.0, N)
    )
    income = np.where(score > 0, ">50K", "<=50K")

    out = Path(__file__).resolve().parent.parent / "data" / "adult_analog_500.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write("age,education-num,hours-per-week,sex,income\n")
        for i in range(N):
            fh.write(
                f"{age[i]},{edu[i]},{hours[i]},"
                f"{'Male' if sex[i] else 'Female'},{income[i]}\n"
            )
    pos = (income == ">50K").sum()
    print(f"wrote {out} ({N} rows, {pos} positive, {sex.sum()} male)")


if __name__ == "__main__":
    main()
