#!/usr/bin/env python3
"""Derive data/compas/compas.csv from ProPublica's compas-scores-two-years.csv.

Applies ProPublica's row filter (screening within 30 days of arrest, known
recidivism outcome, non-ordinary charge degree, present score) and emits the
nine model columns plus the compas_high_risk target.

    python3 scripts/prepare_compas.py compas-scores-two-years.csv data/compas/compas.csv
"""
import sys

import pandas as pd


def main(src: str, dst: str) -> None:
    df = pd.read_csv(src)
    df = df[(df.days_b_screening_arrest <= 30)
            & (df.days_b_screening_arrest >= -30)
            & (df.is_recid != -1)
            & (df.c_charge_degree != "O")
            & (df.score_text != "N/A")]
    stay = (pd.to_datetime(df.c_jail_out) - pd.to_datetime(df.c_jail_in)).dt.days
    out = pd.DataFrame({
        "age": df.age,
        "two_year_recid": df.two_year_recid,
        "priors_count": df.priors_count,
        "length_of_stay": stay,
        "c_charge_degree_F": (df.c_charge_degree == "F").astype(int),
        "c_charge_degree_M": (df.c_charge_degree == "M").astype(int),
        "sex_Female": (df.sex == "Female").astype(int),
        "sex_Male": (df.sex == "Male").astype(int),
        "race": (df.race == "African-American").astype(int),
        "compas_high_risk": (df.score_text == "High").astype(int),
    })
    out.to_csv(dst, index=False)
    print(f"wrote {len(out)} rows to {dst}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
