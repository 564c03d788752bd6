"""

export-model command.

Expected Input:
    - --config, --out

Returns:
    - A.csv, B.csv, C.csv as (row, col, value) triplets of the nonzero entries
    - index.json mapping lifted state and input names to positions
"""

import argparse
import json

import numpy as np
import pandas as pd

from app.commands.common import Context, add_config_flags, command


def register(subparsers):
    parser = subparsers.add_parser("export-model", help="Write the lifted (A, B, C) matrices")
    add_config_flags(parser)
    parser.set_defaults(func=cmd_export_model)


def triplets(matrix: np.ndarray) -> pd.DataFrame:
    rows, cols = np.nonzero(matrix)
    return pd.DataFrame({"row": rows, "col": cols, "value": matrix[rows, cols]})


@command
def cmd_export_model(args: argparse.Namespace) -> int:
    ctx = Context(args)
    model = ctx.model
    store = ctx.store("export_model")
    for name, matrix in (("A", model.A), ("B", model.B), ("C", model.C)):
        store.write_frame(triplets(matrix), f"{name}.csv", kind="matrix")

    index = {
        "N": model.N,
        "M": model.M,
        "n": model.params.n,
        "shape": {"A": list(model.A.shape), "B": list(model.B.shape), "C": list(model.C.shape)},
        "fingerprint": model.fingerprint(),
        **model.layout.as_dict(),
    }
    store.write_text(json.dumps(index, indent=2), "index.json", kind="matrix")
    store.close()
    return 0
