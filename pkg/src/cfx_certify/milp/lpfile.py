"""Text dump of a MILP in the common LP file format, for cross-checking with external solvers."""

from __future__ import annotations

import math
import re

from .bnb import MILPProblem

_REL = {"<=": "<=", ">=": ">=", "==": "="}


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.]", "_", name)


def _expr(coefs, names) -> str:
    terms = [(j, v) for j, v in coefs if v != 0.0]
    if not terms:
        return "0 " + names[0] if names else "0"
    parts = []
    for k, (j, v) in enumerate(terms):
        sign = "-" if v < 0 else "+"
        if k == 0 and sign == "+":
            parts.append(f"{abs(float(v))!r} {names[j]}")
        else:
            parts.append(f"{sign} {abs(float(v))!r} {names[j]}")
    return " ".join(parts)


def to_lp_string(problem: MILPProblem) -> str:
    lp = problem.lp
    names = [_safe(n) for n in (problem.names or [f"x{j}" for j in range(lp.n_vars)])]
    lines = ["Minimize" if lp.sense == "min" else "Maximize"]
    lines.append(" obj: " + _expr(enumerate(lp.c), names))
    lines.append("Subject To")
    for i in range(lp.A.shape[0]):
        row = [(j, lp.A[i, j]) for j in range(lp.n_vars)]
        lines.append(f" c{i}: {_expr(row, names)} {_REL[lp.relations[i]]} {float(lp.b[i])!r}")
    lines.append("Bounds")
    binaries = set(problem.binaries)
    for j, name in enumerate(names):
        lo, hi = float(lp.lower[j]), float(lp.upper[j])
        if j in binaries and lo <= 0 and hi >= 1:
            continue
        if lo == hi:
            lines.append(f" {name} = {lo!r}")
        elif math.isinf(lo) and math.isinf(hi):
            lines.append(f" {name} free")
        else:
            left = "-inf" if math.isinf(lo) else repr(lo)
            right = "+inf" if math.isinf(hi) else repr(hi)
            lines.append(f" {left} <= {name} <= {right}")
    if binaries:
        lines.append("Binary")
        lines.append(" " + " ".join(names[j] for j in problem.binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp_file(problem: MILPProblem, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_lp_string(problem))
