"""Assembly of the `table` output and JSON/CSV serialization of tables,
verification rows and benchmark rows.

Every matrix becomes one record with its object name, indices and entries.
JSON keeps matrices as row lists and sorts keys; CSV writes one matrix per
row with column-major "(i,j)" headers.
"""
import json
import logging
import os

import pandas as pd

from src.constants import SIGNIFICANT_DIGITS
from src.data_models import rows_to_dicts
from src.duality import dual_for, dual_norm, dual_weight_u
from src.exceptions import UsageError
from src.matrix_core import ModelParams
from src.mvop import family_for

FLOAT_FORMAT = f"%.{SIGNIFICANT_DIGITS}g"


def _record(obj, matrix, n=None, x=None, family=None):
    return {"object": obj, "n": n, "x": x, "family": family, "matrix": matrix.tolist()}


def table_metadata(p: ModelParams, n_max, x_max, families):
    return {"N": p.N, "a": p.a, "lambda": p.lam, "n_max": n_max, "x_max": x_max, "families": list(families)}


def build_tables(p: ModelParams, n_max, x_max, families):
    """Records for P_n(x), H_n, B_n, C_n, rho_i(n), Upsilon_i(x), U(n) and
    the dual norms (Upsilon_i(x) W(x) Upsilon_i(x)*)^{-1}.

    Args:
        p (ModelParams): Model.
        n_max (int): Largest degree.
        x_max (int): Largest support point.
        families (tuple): Dual family indices.

    Returns:
        dict: {"params": metadata, "records": list of records in emission order}.
    """
    mvop = family_for(p)
    records = []
    for n in range(n_max + 1):
        for x in range(x_max + 1):
            records.append(_record("P", mvop.p_eval(n, x), n=n, x=x))
    for n in range(n_max + 1):
        records.append(_record("H", mvop.norm_h(n), n=n))
    for n in range(n_max + 1):
        records.append(_record("B", mvop.rec_b(n), n=n))
    for n in range(n_max + 1):
        records.append(_record("C", mvop.rec_c(n), n=n))
    for i in families:
        dual = dual_for(p, i)
        records.extend(_record("rho", dual.rho(n), n=n, family=i) for n in range(n_max + 1))
        records.extend(_record("Upsilon", dual.upsilon(x), x=x, family=i) for x in range(x_max + 1))
    for n in range(n_max + 1):
        records.append(_record("U", dual_weight_u(p, n), n=n))
    for i in families:
        records.extend(_record("W_dual", dual_norm(p, i, x), x=x, family=i) for x in range(x_max + 1))
    logging.info(f"Built {len(records)} table records for N={p.N}, a={p.a}, lambda={p.lam}")
    return {"params": table_metadata(p, n_max, x_max, families), "records": records}


def tables_to_json(tables):
    return json.dumps(tables, sort_keys=True, indent=2)


def _entry_labels(size):
    """Column-major labels (1,1), (2,1), ..., (size,size)."""
    return [f"({i},{j})" for j in range(1, size + 1) for i in range(1, size + 1)]


def tables_to_frame(tables):
    """One row per matrix: parameter metadata, object, indices, then entries column-major."""
    params = tables["params"]
    size = params["N"]
    labels = _entry_labels(size)
    rows = []
    for record in tables["records"]:
        matrix = record["matrix"]
        row = {"N": params["N"], "a": params["a"], "lambda": params["lambda"], "object": record["object"],
               "family": record["family"], "n": record["n"], "x": record["x"]}
        for label, (i, j) in zip(labels, [(i, j) for j in range(size) for i in range(size)]):
            row[label] = matrix[i][j]
        rows.append(row)
    return pd.DataFrame(rows, columns=["N", "a", "lambda", "object", "family", "n", "x"] + labels)


def tables_to_csv(tables):
    return tables_to_frame(tables).to_csv(index=False, float_format=FLOAT_FORMAT)


def serialize_tables(tables, fmt):
    if fmt == "json":
        return tables_to_json(tables)
    if fmt == "csv":
        return tables_to_csv(tables)
    raise UsageError(f"Unknown output format '{fmt}'")


def serialize_rows(rows, fmt, summary=None):
    """Verification or benchmark rows as JSON ({"rows", "summary"}) or CSV."""
    dicts = rows_to_dicts(rows)
    if fmt == "json":
        return json.dumps({"rows": dicts, "summary": summary or {}}, sort_keys=True, indent=2)
    if fmt == "csv":
        frame = pd.DataFrame(dicts)
        if "extra" in frame.columns:
            frame["extra"] = frame["extra"].apply(lambda extra: json.dumps(extra, sort_keys=True))
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT)
    raise UsageError(f"Unknown output format '{fmt}'")


def write_output(text, out=None):
    """Writes text to out, or returns it for stdout when out is None or '-'.

    Raises:
        OSError: When the target cannot be written.
    """
    if out in (None, "", "-"):
        return text
    directory = os.path.dirname(os.path.abspath(out))
    os.makedirs(directory, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write(text)
        if not text.endswith("\n"):
            f.write("\n")
    logging.info(f"Wrote {len(text)} characters to {out}")
    return None
