"""Benchmark drivers, convergence tables and report serialisation."""
from dataclasses import asdict, dataclass, fields
import csv
import io
import json
import logging
import math

import numpy as np

from . import __version__
from .cases import LShapeCase, SmoothCase
from .estimator import eta_global, eta_local, exact_errors
from .forms import kernel_losses
from .mesh import build_coarse_mesh, uniform_refine
from .solver import SolverError, newton_solve
from .spaces import SolutionState, build_layout

__all__ = [
    "CASES",
    "CSV_HEADER",
    "RunRecord",
    "SmoothCase",
    "LShapeCase",
    "make_case",
    "coarse_mesh",
    "solve_level",
    "fill_rates",
    "run_uniform",
    "emit_report",
    "load_report",
]

log = logging.getLogger(__name__)

CASES = {"smooth2d": SmoothCase, "lshape": LShapeCase}

CSV_HEADER = (
    "dofs,h,err_u,rate_u,err_w,rate_w,err_p,rate_p,"
    "loss_div,loss_curl,newton_iters,eta_global,effectivity"
)


@dataclass
class RunRecord:
    """One row of a convergence table.  Rates are ``None`` on the first row."""

    dofs: int
    h: float
    err_u: float
    rate_u: float
    err_w: float
    rate_w: float
    err_p: float
    rate_p: float
    loss_div: float
    loss_curl: float
    newton_iters: int
    eta_global: float
    effectivity: float


def make_case(case, params):
    """Case instance bound to ``params`` from a name, class or instance."""
    if isinstance(case, str):
        try:
            cls = CASES[case]
        except KeyError:
            raise ValueError(f"unknown case {case!r}; expected one of {sorted(CASES)}") from None
    elif isinstance(case, type):
        cls = case
    else:
        cls = type(case)
    return cls(params)


def coarse_mesh(case):
    if case.domain == "unit_square":
        return build_coarse_mesh("unit_square", case.coarse_n)
    return build_coarse_mesh(case.domain)


def solve_level(case, params, mesh, level=0):
    """Solve on ``mesh`` from the zero state and measure everything.

    Singular Newton matrices (no jump penalty) are handled with minimum-norm
    steps.

    Returns
    -------
    record : RunRecord (rates unset)
    state : SolutionState
    eta : ndarray of local indicators
    """
    layout = build_layout(mesh, case.dirichlet)
    try:
        state, report = newton_solve(SolutionState.zeros(layout), params, case.forcing, singular="minnorm")
    except SolverError as exc:
        raise SolverError(f"level {level}: {exc}") from exc
    eta = eta_local(state, params, case.forcing)
    eg = eta_global(eta)
    eu, ew, ep = exact_errors(state, params, case)
    ld, lc = kernel_losses(state, params.nu)
    rec = RunRecord(
        dofs=layout.size,
        h=float(mesh.h),
        err_u=eu,
        rate_u=None,
        err_w=ew,
        rate_w=None,
        err_p=ep,
        rate_p=None,
        loss_div=ld,
        loss_curl=lc,
        newton_iters=report.iterations,
        eta_global=eg,
        effectivity=(eu + ew + ep) / eg if eg > 0 else 0.0,
    )
    log.info(
        "level %d: dofs=%d err_u=%.3e err_w=%.3e err_p=%.3e newton=%d eff=%.3f",
        level, rec.dofs, eu, ew, ep, rec.newton_iters, rec.effectivity,
    )
    return rec, state, eta


def fill_rates(records, mode="h"):
    """Set experimental orders between consecutive records in place.

    ``mode="h"``: ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``.
    ``mode="dofs"``: ``log(e_i / e_{i+1}) / (0.5 log(DoF_{i+1} / DoF_i))``.
    """
    if mode not in ("h", "dofs"):
        raise ValueError("mode must be 'h' or 'dofs'")
    for prev, cur in zip(records[:-1], records[1:]):
        if mode == "h":
            denom = math.log(prev.h / cur.h)
        else:
            denom = 0.5 * math.log(cur.dofs / prev.dofs)
        for name in ("u", "w", "p"):
            e0, e1 = getattr(prev, "err_" + name), getattr(cur, "err_" + name)
            rate = math.log(e0 / e1) / denom if denom != 0 and e0 > 0 and e1 > 0 else None
            setattr(cur, "rate_" + name, rate)
    return records


def run_uniform(case, params, levels, callback=None):
    """Uniform refinement study: ``levels`` meshes starting from the coarse one.

    ``levels`` of 0 or 1 both give the single coarse-mesh row.  ``callback``
    is called as ``callback(level, mesh, state, eta)`` after every solve.
    """
    case = make_case(case, params)
    mesh = coarse_mesh(case)
    records = []
    for k in range(max(1, int(levels))):
        if k:
            mesh = uniform_refine(mesh)
        rec, state, eta = solve_level(case, params, mesh, k)
        records.append(rec)
        if callback is not None:
            callback(k, mesh, state, eta)
    return fill_rates(records, "h")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def emit_report(records, format="csv", metadata=None):
    """Serialise records as CSV or JSON bytes.

    The JSON document carries ``metadata`` (case, parameters, scheme and so
    on) next to the records and a version string.
    """
    if format == "csv":
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        for r in records:
            w.writerow([_cell(getattr(r, f.name)) for f in fields(RunRecord)])
        return buf.getvalue().encode()
    if format == "json":
        doc = {"version": f"v{__version__}", **(metadata or {}), "records": [asdict(r) for r in records]}
        return (json.dumps(doc, indent=2) + "\n").encode()
    raise ValueError("format must be 'csv' or 'json'")


def load_report(data, format="json"):
    """Parse bytes produced by :func:`emit_report` back into records."""
    text = data.decode() if isinstance(data, bytes) else data
    if format == "json":
        return [RunRecord(**r) for r in json.loads(text)["records"]]
    if format == "csv":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or ",".join(rows[0]) != CSV_HEADER:
            raise ValueError("not a report CSV")
        out = []
        for row in rows[1:]:
            vals = {}
            for f, s in zip(fields(RunRecord), row):
                if s == "":
                    vals[f.name] = None
                elif f.name in ("dofs", "newton_iters"):
                    vals[f.name] = int(s)
                else:
                    vals[f.name] = float(s)
            out.append(RunRecord(**vals))
        return out
    raise ValueError("format must be 'csv' or 'json'")
