#!/usr/bin/env python3
"""Write the tabular datasets used by the examples and acceptance tests as
header-bearing CSV files plus JSON schemas under ``data/``.

Sources:
  breast_cancer  scikit-learn's bundled copy of the Wisconsin diagnostic data
  adult          UCI adult.data + adult.test (pass --adult-dir, or have the
                 ``responsibly`` wheel installed, which ships both files)
  hepatitis      UCI hepatitis.data (pass --hepatitis)
  ilpd           UCI "Indian Liver Patient Dataset (ILPD).csv" (pass --ilpd)

Labels are written as 0/1 so the Rust loader never has to guess a mapping.
Missing cells are written as "?".
"""

import argparse
import csv
import json
import os
import sys


def write(out_dir, name, header, rows, schema):
    with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    with open(os.path.join(out_dir, f"{name}.schema.json"), "w") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")
    print(f"{name}: {len(rows)} rows, {len(schema['features'])} features")


def categories_of(rows, col):
    return sorted({r[col] for r in rows if r[col] != "?"})


def breast_cancer(out_dir):
    from sklearn.datasets import load_breast_cancer

    bc = load_breast_cancer()
    names = [n.replace(" ", "_") for n in bc.feature_names]
    rows = []
    for x, y in zip(bc.data, bc.target):
        # sklearn codes benign as 1; keep malignant as the positive class
        rows.append([repr(float(v)) for v in x] + [str(1 - int(y))])
    schema = {
        "label_column": "malignant",
        "features": [{"name": n, "kind": "numeric"} for n in names],
    }
    write(out_dir, "breast_cancer", names + ["malignant"], rows, schema)


ADULT_COLUMNS = [
    ("age", "numeric"),
    ("workclass", "categorical"),
    ("fnlwgt", "numeric"),
    ("education", "categorical"),
    ("education_num", "numeric"),
    ("marital_status", "categorical"),
    ("occupation", "categorical"),
    ("relationship", "categorical"),
    ("race", "categorical"),
    ("sex", "categorical"),
    ("capital_gain", "numeric"),
    ("capital_loss", "numeric"),
    ("hours_per_week", "numeric"),
    ("native_country", "categorical"),
]


def adult_sources(adult_dir):
    if adult_dir:
        return [
            open(os.path.join(adult_dir, f)).read()
            for f in ("adult.data", "adult.test")
        ]
    try:
        import importlib.util
        import zipfile

        spec = importlib.util.find_spec("responsibly")
        if spec is not None:
            base = os.path.join(os.path.dirname(spec.origin), "dataset", "adult")
            return [open(os.path.join(base, f)).read() for f in ("adult.data", "adult.test")]
        wheel = os.environ.get("RESPONSIBLY_WHEEL")
        if wheel:
            z = zipfile.ZipFile(wheel)
            return [
                z.read(f"responsibly/dataset/adult/{f}").decode()
                for f in ("adult.data", "adult.test")
            ]
    except OSError:
        pass
    return None


def adult(out_dir, adult_dir):
    texts = adult_sources(adult_dir)
    if texts is None:
        print("adult: source files not found, skipped", file=sys.stderr)
        return
    rows = []
    for text in texts:
        for line in text.splitlines():
            if not line.strip() or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            label = 1 if cells[-1].rstrip(".") == ">50K" else 0
            rows.append(cells[:-1] + [str(label)])
    features = []
    for i, (name, kind) in enumerate(ADULT_COLUMNS):
        f = {"name": name, "kind": kind}
        if kind == "categorical":
            f["categories"] = categories_of(rows, i)
        features.append(f)
    schema = {"label_column": "income_gt_50k", "features": features}
    header = [n for n, _ in ADULT_COLUMNS] + ["income_gt_50k"]
    write(out_dir, "adult", header, rows, schema)


HEPATITIS_COLUMNS = [
    ("age", "numeric"),
    ("sex", "categorical"),
    ("steroid", "categorical"),
    ("antivirals", "categorical"),
    ("fatigue", "categorical"),
    ("malaise", "categorical"),
    ("anorexia", "categorical"),
    ("liver_big", "categorical"),
    ("liver_firm", "categorical"),
    ("spleen_palpable", "categorical"),
    ("spiders", "categorical"),
    ("ascites", "categorical"),
    ("varices", "categorical"),
    ("bilirubin", "numeric"),
    ("alk_phosphate", "numeric"),
    ("sgot", "numeric"),
    ("albumin", "numeric"),
    ("protime", "numeric"),
    ("histology", "categorical"),
]


def hepatitis(out_dir, path):
    rows = []
    for line in open(path):
        cells = [c.strip() for c in line.strip().split(",")]
        if len(cells) != 20:
            continue
        # class 1 = DIE, 2 = LIVE
        label = 1 if cells[0] == "1" else 0
        rows.append(cells[1:] + [str(label)])
    features = []
    for name, kind in HEPATITIS_COLUMNS:
        f = {"name": name, "kind": kind}
        if kind == "categorical":
            f["categories"] = ["1", "2"]
        features.append(f)
    schema = {"label_column": "died", "features": features}
    write(out_dir, "hepatitis", [n for n, _ in HEPATITIS_COLUMNS] + ["died"], rows, schema)


ILPD_COLUMNS = [
    ("age", "numeric"),
    ("gender", "categorical"),
    ("total_bilirubin", "numeric"),
    ("direct_bilirubin", "numeric"),
    ("alkaline_phosphotase", "numeric"),
    ("alamine_aminotransferase", "numeric"),
    ("aspartate_aminotransferase", "numeric"),
    ("total_proteins", "numeric"),
    ("albumin", "numeric"),
    ("albumin_globulin_ratio", "numeric"),
]


def ilpd(out_dir, path):
    rows = []
    for line in open(path):
        cells = [c.strip() for c in line.strip().split(",")]
        if len(cells) != 11 or not cells[0][:1].isdigit():
            continue
        cells = [c if c != "" else "?" for c in cells]
        # selector 1 = liver patient
        label = 1 if cells[-1] == "1" else 0
        rows.append(cells[:-1] + [str(label)])
    features = []
    for name, kind in ILPD_COLUMNS:
        f = {"name": name, "kind": kind}
        if kind == "categorical":
            f["categories"] = ["Female", "Male"]
        features.append(f)
    schema = {"label_column": "liver_patient", "features": features}
    write(out_dir, "ilpd", [n for n, _ in ILPD_COLUMNS] + ["liver_patient"], rows, schema)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--adult-dir")
    ap.add_argument("--hepatitis", help="path to UCI hepatitis.data")
    ap.add_argument("--ilpd", help="path to UCI ILPD csv")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    breast_cancer(args.out)
    adult(args.out, args.adult_dir)
    if args.hepatitis:
        hepatitis(args.out, args.hepatitis)
    if args.ilpd:
        ilpd(args.out, args.ilpd)


if __name__ == "__main__":
    main()
