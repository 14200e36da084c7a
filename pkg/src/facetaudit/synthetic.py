"""Seeded synthetic surveillance-style records for demos and tests.

Columns mimic the layout of the Brazilian SRAG notification files (state
code, sex, race, age, symptom flags coded 1=yes / 2=no / 9=unknown) but the
values are pure simulation. Race composition varies by region, while the
outcome depends on clinical fields only, so Class Imbalance is large while
the label distributions barely differ between facets.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .tabular import BRAZIL_UF_REGIONS

COLUMNS = [
    "NU_NOTIFIC", "SG_UF_NOT", "CS_SEXO", "CS_RACA", "NU_IDADE_N",
    "FEBRE", "TOSSE", "DISPNEIA", "SATURACAO", "CARDIOPATI", "UTI", "VACINA_COV",
]

# Probability of race code 1 (white) per region; remaining mass spread over 2-5.
WHITE_SHARE = {"North": 0.2, "Northeast": 0.25, "Central-West": 0.4, "Southeast": 0.55, "South": 0.8}
REGION_WEIGHTS = {"North": 0.1, "Northeast": 0.25, "Central-West": 0.1, "Southeast": 0.4, "South": 0.15}


def _flag(rng, p_yes, n, p_unknown=0.03):
    u = rng.random(n)
    return np.where(u < p_unknown, "9", np.where(u < p_unknown + (1 - p_unknown) * p_yes, "1", "2"))


def synthesize(n_rows: int, seed: int, unknown_state_rate: float = 0.002) -> list[dict[str, str]]:
    rng = np.random.default_rng(seed)
    regions = list(REGION_WEIGHTS)
    states = {r: [uf for uf, reg in BRAZIL_UF_REGIONS.items() if reg == r] for r in regions}
    region_idx = rng.choice(len(regions), size=n_rows, p=[REGION_WEIGHTS[r] for r in regions])

    uf = np.array([rng.choice(states[regions[i]]) for i in region_idx])
    uf[rng.random(n_rows) < unknown_state_rate] = "XX"
    sex = np.where(rng.random(n_rows) < 0.53, "M", "F")
    sex[rng.random(n_rows) < 0.01] = "I"
    white = rng.random(n_rows) < np.array([WHITE_SHARE[regions[i]] for i in region_idx])
    other = rng.choice(["2", "3", "4", "5"], size=n_rows, p=[0.2, 0.05, 0.7, 0.05])
    race = np.where(white, "1", other)
    race[rng.random(n_rows) < 0.05] = "9"
    age = np.clip(rng.normal(55, 20, n_rows), 0, 105).round()

    febre = _flag(rng, 0.6, n_rows)
    tosse = _flag(rng, 0.7, n_rows)
    dispneia = _flag(rng, 0.5, n_rows)
    saturacao = _flag(rng, 0.45, n_rows)
    cardio = _flag(rng, 0.3 + 0.3 * (age > 60), n_rows)

    score = (
        -2.2
        + 0.035 * (age - 55)
        + 1.4 * (dispneia == "1")
        + 1.6 * (saturacao == "1")
        + 0.6 * (cardio == "1")
        + 0.15 * np.array([i % 2 for i in region_idx])
    )
    icu = np.where(rng.random(n_rows) < 1 / (1 + np.exp(-score)), "1", "2")
    icu[rng.random(n_rows) < 0.04] = "9"
    vacc = np.where(rng.random(n_rows) < 1 / (1 + np.exp(-(0.03 * (age - 40)))), "1", "2")

    ages = [str(int(a)) for a in age]
    for i in np.flatnonzero(rng.random(n_rows) < 0.01):
        ages[i] = ""
    rows = []
    for i in range(n_rows):
        rows.append({
            "NU_NOTIFIC": f"{seed:04d}{i:08d}",
            "SG_UF_NOT": uf[i],
            "CS_SEXO": sex[i],
            "CS_RACA": race[i],
            "NU_IDADE_N": ages[i],
            "FEBRE": febre[i],
            "TOSSE": tosse[i],
            "DISPNEIA": dispneia[i],
            "SATURACAO": saturacao[i],
            "CARDIOPATI": cardio[i],
            "UTI": icu[i],
            "VACINA_COV": vacc[i],
        })
    return rows


def write_rows(rows: list[dict[str, str]], path: str | Path, delimiter: str = ";", encoding: str = "latin-1") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding=encoding) as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, delimiter=delimiter, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def write_synthetic_csv(path: str | Path, n_rows: int, seed: int, **kwargs) -> Path:
    return write_rows(synthesize(n_rows, seed), path, **kwargs)
