#!/usr/bin/env python3
"""Build the benchmark CSVs and manifests under data/.

The raw files come from two PyPI wheels that bundle them (no other network
access is needed):

  * responsibly 0.1.2  -> German credit (UCI statlog), ProPublica COMPAS
  * ethicml 1.3.0      -> UCI Communities and Crime (normalized release)

Usage:
    pip download --no-deps responsibly==0.1.2 ethicml==1.3.0 -d /tmp/wheels
    python3 scripts/prepare_datasets.py /tmp/wheels data
"""
import csv
import io
import sys
import zipfile
from pathlib import Path

GERMAN_COLUMNS = [
    ("status", "discrete"),
    ("duration", "continuous"),
    ("credit_history", "discrete"),
    ("purpose", "discrete"),
    ("credit_amount", "continuous"),
    ("savings", "discrete"),
    ("employment", "discrete"),
    ("installment_rate", "continuous"),
    ("personal_status", "discrete"),
    ("other_debtors", "discrete"),
    ("residence_since", "continuous"),
    ("property", "discrete"),
    ("age", "continuous"),
    ("installment_plans", "discrete"),
    ("housing", "discrete"),
    ("existing_credits", "continuous"),
    ("job", "discrete"),
    ("people_liable", "continuous"),
    ("telephone", "binary"),
    ("foreign_worker", "binary"),
]

COMPAS_FEATURES = [
    ("sex", "binary"),
    ("age", "continuous"),
    ("juv_fel_count", "continuous"),
    ("juv_misd_count", "continuous"),
    ("juv_other_count", "continuous"),
    ("priors_count", "continuous"),
    ("c_charge_degree", "binary"),
    ("decile_score", "continuous"),
    ("v_decile_score", "continuous"),
]

CRIME_SENSITIVE = ["racepctblack", "racePctAsian", "racePctHisp"]
CRIME_TARGET = "ViolentCrimesPerPop"
CRIME_DROP = {"communityname", "fold", ">0.06black", "high_crime"}


def wheel(wheels: Path, prefix: str) -> zipfile.ZipFile:
    matches = sorted(wheels.glob(prefix + "-*.whl"))
    if not matches:
        sys.exit(f"no {prefix} wheel in {wheels}")
    return zipfile.ZipFile(matches[-1])


def write_manifest(path: Path, csv_name: str, task: str, columns):
    lines = [
        f'csv_path = "{csv_name}"',
        f'task = "{task}"',
        "seed = 0",
        "split = [0.6, 0.2, 0.2]",
        "",
    ]
    for name, role, dtype in columns:
        lines += ["[[columns]]", f'name = "{name}"', f'role = "{role}"', f'dtype = "{dtype}"', ""]
    path.write_text("\n".join(lines))


def german(wheels: Path, out: Path):
    raw = wheel(wheels, "responsibly").read("responsibly/dataset/german/german.data").decode()
    rows = [line.split() for line in raw.splitlines() if line.strip()]
    header = [c for c, _ in GERMAN_COLUMNS] + ["credit_risk"]
    with open(out / "german.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            # 1 = good, 2 = bad in the UCI coding
            w.writerow(r[:20] + ["bad" if r[20] == "2" else "good"])
    cols = []
    for name, dtype in GERMAN_COLUMNS:
        role = "sensitive" if name == "foreign_worker" else "feature"
        cols.append((name, role, dtype))
    cols.append(("credit_risk", "target", "binary"))
    write_manifest(out / "german.toml", "german.csv", "classification", cols)
    print(f"german: {len(rows)} rows")


def compas(wheels: Path, out: Path):
    raw = wheel(wheels, "responsibly").read(
        "responsibly/dataset/compas/compas-scores-two-years.csv"
    ).decode()
    reader = csv.reader(io.StringIO(raw))
    header = next(reader)
    idx = {}
    for i, name in enumerate(header):
        idx.setdefault(name, i)
    kept = []
    for r in reader:
        get = lambda k: r[idx[k]]
        # standard ProPublica filter, yields 6172 defendants
        if get("days_b_screening_arrest") == "":
            continue
        d = int(get("days_b_screening_arrest"))
        if d > 30 or d < -30:
            continue
        if get("is_recid") == "-1" or get("c_charge_degree") == "O" or get("score_text") == "N/A":
            continue
        race = "Caucasian" if get("race") == "Caucasian" else "Non-Caucasian"
        kept.append([get(c) for c, _ in COMPAS_FEATURES] + [race, get("is_violent_recid")])
    with open(out / "compas.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([c for c, _ in COMPAS_FEATURES] + ["race", "is_violent_recid"])
        w.writerows(kept)
    cols = [(c, "feature", t) for c, t in COMPAS_FEATURES]
    cols += [("race", "sensitive", "binary"), ("is_violent_recid", "target", "binary")]
    write_manifest(out / "compas.toml", "compas.csv", "classification", cols)
    print(f"compas: {len(kept)} rows")


def crime(wheels: Path, out: Path):
    raw = wheel(wheels, "ethicml").read("ethicml/data/csvs/crime.csv").decode()
    reader = csv.reader(io.StringIO(raw))
    header = next(reader)
    keep = [i for i, c in enumerate(header) if c not in CRIME_DROP and not c.startswith("state_")]
    names = [header[i] for i in keep]
    rows = [[r[i] for i in keep] for r in reader]
    with open(out / "crime.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        w.writerows(rows)
    cols = []
    for name in names:
        if name == CRIME_TARGET:
            cols.append((name, "target", "continuous"))
        elif name in CRIME_SENSITIVE:
            cols.append((name, "sensitive", "continuous"))
        else:
            cols.append((name, "feature", "continuous"))
    write_manifest(out / "crime.toml", "crime.csv", "regression", cols)
    print(f"crime: {len(rows)} rows, {len(names)} columns")


def main():
    wheels, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    german(wheels, out)
    compas(wheels, out)
    crime(wheels, out)


if __name__ == "__main__":
    main()
