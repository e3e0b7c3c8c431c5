"""Batch front-end: job files in, JSON reports and statevector exports out.

A job is a single JSON document (``"schema": 1``) naming the molecule (AO
list plus named MO coefficient vectors), the simulation cell, the LF basis
layout (explicit per-direction centers or a box generator), initial widths,
the penalty strength, and the CP ranks to sweep.  ``fit`` runs the whole
pipeline and writes a deterministic report; ``decompose`` re-sweeps ranks on
an existing report; ``gate-count`` is a standalone resource calculator;
``export-state`` materializes grid statevectors as CSV or binary;
``two-center`` tabulates the interference sweep; ``verify`` runs the
built-in check battery.

Exit codes: 0 success, 1 failed run or failed verification, 2 malformed job
(the error names the offending field by JSON pointer), 3 resource guard.
"""

from __future__ import annotations

import argparse
import json
import math
import struct
import sys
import tempfile
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from . import __version__
from .basis import (
    DEFAULT_MAX_QUBITS,
    MolecularOrbital,
    SimulationCell,
    build_ideal_state,
    gaussian_ao,
)
from .cpd import CpdOptions, canonical_statevector, decompose_core
from .encoding import (
    ancilla_counts,
    cnot_count_canonical,
    cnot_count_tucker,
    lcu_postselect_oracle,
    success_prob_canonical,
    success_prob_tucker,
    tucker_success_from_core,
    two_center_analysis,
    two_center_csv_lines,
)
from .exceptions import ConditioningError, DegenerateInputError, ResourceLimitError
from .fitting import (
    FitProblem,
    OptimizeOptions,
    TuckerState,
    box_centers,
    fidelity_gradient,
    optimize_widths,
    overlap_3d,
    solve_core,
    t_tensor,
    tucker_statevector,
)
from .lorentzian import AXES, LorentzianBasisSpec, lf_profile, lf_profile_da, lf_state

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_SCHEMA = 2
EXIT_RESOURCE = 3

MAGIC = b"MFLO"
BINARY_VERSION = 1
FORM_TAGS = {"ideal": 0, "tucker": 1, "canonical": 2}
HEADER_FORMAT = "<4sIII16x"  # magic, version, n_qe, form tag, zero padding
IDENTITY_TOL = 1e-10

_POS3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_INT_LIST = {"type": "array", "items": {"type": "integer"}, "minItems": 1}

JOB_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "molecule", "cell", "lorentzian"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": 1},
        "molecule": {
            "type": "object",
            "required": ["aos", "mos"],
            "additionalProperties": False,
            "properties": {
                "atoms": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["symbol", "position"],
                        "additionalProperties": False,
                        "properties": {"symbol": {"type": "string"}, "position": _POS3},
                    },
                },
                "renormalize": {"type": "boolean"},
                "aos": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["exponents", "coefficients", "powers", "center"],
                        "additionalProperties": False,
                        "properties": {
                            "name": {"type": "string"},
                            "exponents": _NUM_LIST,
                            "coefficients": _NUM_LIST,
                            "powers": {
                                "type": "array",
                                "items": {"type": "integer", "minimum": 0},
                                "minItems": 3,
                                "maxItems": 3,
                            },
                            "center": _POS3,
                        },
                    },
                },
                "mos": {"type": "object", "minProperties": 1, "additionalProperties": _NUM_LIST},
            },
        },
        "cell": {
            "type": "object",
            "required": ["origin", "edge_lengths", "n_qe"],
            "additionalProperties": False,
            "properties": {
                "origin": _POS3,
                "edge_lengths": _POS3,
                "n_qe": {"type": "integer", "minimum": 1},
            },
        },
        "lorentzian": {
            "type": "object",
            "required": ["initial_widths"],
            "additionalProperties": False,
            "properties": {
                "centers": {
                    "type": "object",
                    "required": ["x", "y", "z"],
                    "additionalProperties": False,
                    "properties": {"x": _INT_LIST, "y": _INT_LIST, "z": _INT_LIST},
                },
                "box": {
                    "type": "object",
                    "required": ["box_min", "box_edges", "counts"],
                    "additionalProperties": False,
                    "properties": {
                        "box_min": _POS3,
                        "box_edges": _POS3,
                        "counts": {
                            "type": "array",
                            "items": {"type": "integer", "minimum": 1},
                            "minItems": 3,
                            "maxItems": 3,
                        },
                    },
                },
                "initial_widths": {
                    "anyOf": [
                        {"type": "number", "exclusiveMinimum": 0},
                        {
                            "type": "object",
                            "required": ["x", "y", "z"],
                            "additionalProperties": False,
                            "properties": {"x": _NUM_LIST, "y": _NUM_LIST, "z": _NUM_LIST},
                        },
                    ]
                },
                "alpha_pen": {"type": "number", "minimum": 0},
            },
            "oneOf": [{"required": ["centers"]}, {"required": ["box"]}],
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iter": {"type": "integer", "minimum": 1},
                "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                "f_tol": {"type": "number", "exclusiveMinimum": 0},
                "restarts": {"type": "integer", "minimum": 1},
                "restart_jitter": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "cpd": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ranks": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "n_restarts": {"type": "integer", "minimum": 1},
                "max_sweeps": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "report": {"type": "string"},
                "export_statevectors": {"type": "boolean"},
                "statevector_format": {"enum": ["csv", "binary"]},
                "history_csv": {"type": "boolean"},
            },
        },
    },
}


class JobError(Exception):
    """Malformed job file; ``pointer`` names the offending field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '<document>'}: {message}")
        self.pointer = pointer
        self.message = message


def _emit_error(kind: str, message: str, **extra) -> None:
    payload = {"error": kind, "message": message}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def load_job(path) -> dict:
    """Parse and validate a job file; raises JobError with a JSON pointer."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise JobError("", f"cannot read job file: {exc}") from exc
    try:
        job = json.loads(text)
    except json.JSONDecodeError as exc:
        raise JobError("", f"invalid JSON: {exc}") from exc
    err = best_match(Draft202012Validator(JOB_SCHEMA).iter_errors(job))
    if err is not None:
        pointer = "".join(f"/{part}" for part in err.absolute_path)
        raise JobError(pointer, err.message)
    _check_cross_references(job)
    return job


def _check_cross_references(job: dict) -> None:
    n_ao = len(job["molecule"]["aos"])
    for name, coeff in job["molecule"]["mos"].items():
        if len(coeff) != n_ao:
            raise JobError(
                f"/molecule/mos/{name}",
                f"MO has {len(coeff)} coefficients but the molecule lists {n_ao} AOs")
    lor = job["lorentzian"]
    n_qe = job["cell"]["n_qe"]
    N = 1 << n_qe
    if "centers" in lor:
        counts = {ax: len(lor["centers"][ax]) for ax in AXES}
        for ax in AXES:
            for i, k in enumerate(lor["centers"][ax]):
                if not 0 <= k < N:
                    raise JobError(
                        f"/lorentzian/centers/{ax}/{i}",
                        f"center {k} outside the grid range [0, {N})")
    else:
        counts = dict(zip(AXES, lor["box"]["counts"]))
    widths = lor["initial_widths"]
    if isinstance(widths, dict):
        for ax in AXES:
            if len(widths[ax]) != counts[ax]:
                raise JobError(
                    f"/lorentzian/initial_widths/{ax}",
                    f"{len(widths[ax])} widths for {counts[ax]} centers")
    n_prod = 1
    for ax in AXES:
        n_prod *= counts[ax]
    for i, rank in enumerate(job.get("cpd", {}).get("ranks", [])):
        if rank > n_prod:
            raise JobError(
                f"/cpd/ranks/{i}",
                f"rank {rank} exceeds the basis size n_prod={n_prod}")


def _job_cell(job: dict) -> SimulationCell:
    c = job["cell"]
    return SimulationCell(origin=c["origin"], edge_lengths=c["edge_lengths"], n_qe=c["n_qe"])


def _job_molecule(job: dict):
    mol = job["molecule"]
    renorm = mol.get("renormalize", True)
    aos = [gaussian_ao(entry["exponents"], entry["coefficients"], entry["powers"],
                       entry["center"], renormalize=renorm)
           for entry in mol["aos"]]
    mos = {name: MolecularOrbital(ao_list=tuple(aos), coefficients=coeff)
           for name, coeff in mol["mos"].items()}
    return aos, mos


def _job_spec(job: dict, cell: SimulationCell) -> LorentzianBasisSpec:
    lor = job["lorentzian"]
    if "centers" in lor:
        centers = tuple(np.asarray(lor["centers"][ax], dtype=np.int64) for ax in AXES)
    else:
        box = lor["box"]
        try:
            centers = box_centers(cell, box["box_min"], box["box_edges"], box["counts"])
        except ValueError as exc:
            raise JobError("/lorentzian/box", str(exc)) from exc
    w = lor["initial_widths"]
    if isinstance(w, dict):
        widths = tuple(np.asarray(w[ax], dtype=np.float64) for ax in AXES)
    else:
        widths = tuple(np.full(c.size, float(w)) for c in centers)
    try:
        return LorentzianBasisSpec(n=cell.n_qe, widths=widths, centers=centers)
    except ValueError as exc:
        raise JobError("/lorentzian", str(exc)) from exc


def _fit_options(job: dict, seed: int | None) -> OptimizeOptions:
    cfg = dict(job.get("fit", {}))
    if seed is not None:
        cfg["seed"] = int(seed)
    return OptimizeOptions(**cfg)


def _cpd_options(job: dict, seed: int | None, threads: int) -> CpdOptions:
    cfg = dict(job.get("cpd", {}))
    cfg.pop("ranks", None)
    if seed is not None:
        cfg["seed"] = int(seed)
    return CpdOptions(threads=max(1, threads), **cfg)


def _spec_payload(spec: LorentzianBasisSpec) -> dict:
    return {
        "widths": {ax: spec.widths[v] for v, ax in enumerate(AXES)},
        "centers": {ax: spec.centers[v] for v, ax in enumerate(AXES)},
    }


def _spec_from_payload(entry: dict, n_qe: int) -> LorentzianBasisSpec:
    return LorentzianBasisSpec(
        n=n_qe,
        widths=tuple(np.asarray(entry["widths"][ax], dtype=np.float64) for ax in AXES),
        centers=tuple(np.asarray(entry["centers"][ax], dtype=np.int64) for ax in AXES),
    )


def _core_from_payload(entry: dict) -> np.ndarray:
    return np.asarray(entry["core"]["values"], dtype=np.float64).reshape(entry["core"]["shape"])


def _tucker_from_payload(entry: dict, n_qe: int) -> TuckerState:
    return TuckerState(
        spec=_spec_from_payload(entry, n_qe),
        core=_core_from_payload(entry),
        fidelity=entry["fidelity"],
        squared_overlap=entry["squared_overlap"],
        penalty=entry["penalty"],
        kappa_max=entry["kappa_max"],
    )


def _identity_residuals(problem: FitProblem, tucker: TuckerState) -> dict:
    """Re-derive the solver's defining identities; raise if they fail."""
    spec = tucker.spec
    d = tucker.core
    S = overlap_3d(spec)
    t = t_tensor(problem.with_spec(spec)).values
    quad = float(d.ravel() @ (S @ d.ravel()))
    f = float(np.sum(t * d))
    res = {
        "core_metric_norm": abs(quad - 1.0),
        "overlap_kappa": abs(f * f - tucker.kappa_max),
        "fidelity_decomposition": abs(tucker.kappa_max - tucker.fidelity - tucker.penalty),
    }
    worst = max(res.values())
    if worst > IDENTITY_TOL:
        raise RuntimeError(f"report identity check failed (residual {worst:.3e})")
    return res


def _canonical_entry(tucker: TuckerState, rank: int, options: CpdOptions, n_qe: int) -> dict:
    canon = decompose_core(tucker, rank, options)
    counts = cnot_count_canonical(tucker.spec, n_qe, max(1, canon.R))
    prob = success_prob_canonical(canon)
    return {
        "requested_rank": int(rank),
        "rank": int(canon.R),
        "deviation": canon.deviation,
        "canon_norm2": canon.canon_norm2,
        "lambdas": canon.lambdas,
        "u": {ax: canon.u[v] for v, ax in enumerate(AXES)},
        "success_probability": prob,
        "n_a_canonical": counts.n_a_canonical,
        "cnot": {"total": counts.cx_total, "sph": counts.cx_sph, "amp": counts.cx_amp},
        "flags": list(canon.flags),
    }


def run_fit(job_path, out_path=None, seed=None, max_qubits=None, threads=1) -> tuple[dict, Path]:
    """Full pipeline for one job file; returns (report dict, report path)."""
    job = load_job(job_path)
    cell = _job_cell(job)
    _, mos = _job_molecule(job)
    spec = _job_spec(job, cell)
    guard = DEFAULT_MAX_QUBITS if max_qubits is None else int(max_qubits)
    opt = _fit_options(job, seed)
    cpd_opt = _cpd_options(job, seed, threads)
    ranks = job.get("cpd", {}).get("ranks", [])
    outputs = job.get("outputs", {})

    n_a, n_al, _ = ancilla_counts(spec)
    tucker_counts = cnot_count_tucker(spec, cell.n_qe)
    report = {
        "schema": 1,
        "generator": {"name": "mflo", "version": __version__},
        "job": job,
        "n_prod": spec.n_prod,
        "ancillae": {"per_axis": list(n_a), "lorentzian": n_al},
        "cnot_tucker": {
            "total": tucker_counts.cx_total,
            "sph": tucker_counts.cx_sph,
            "amp": tucker_counts.cx_amp,
            "qft_informational": tucker_counts.qft_cx_informational,
        },
        "mos": {},
    }
    for name, mo in mos.items():
        problem = FitProblem.build(mo, cell, spec, alpha_pen=job["lorentzian"].get("alpha_pen", 0.0),
                                   max_qubits=guard)
        tucker = optimize_widths(problem, options=opt)
        residuals = _identity_residuals(problem, tucker)
        prob = success_prob_tucker(tucker)
        if not 0.0 < prob <= 1.0 + 1e-12:
            raise RuntimeError(f"Tucker success probability {prob} outside (0, 1]")
        diag = tucker.diagnostics
        entry = {
            "norm_factor": problem.norm_factor,
            **_spec_payload(tucker.spec),
            "core": {"shape": list(tucker.core.shape), "values": tucker.core.ravel()},
            "fidelity": tucker.fidelity,
            "squared_overlap": tucker.squared_overlap,
            "penalty": tucker.penalty,
            "kappa_max": tucker.kappa_max,
            "success_probability_tucker": prob,
            "identity_residuals": residuals,
            "diagnostics": {
                "iterations": diag.iterations,
                "grad_norm": diag.grad_norm,
                "converged": diag.converged,
                "flags": list(diag.flags),
                "restart_fidelities": list(diag.restart_fidelities),
                "fidelity_history": list(diag.fidelity_history),
                "discarded_dim": diag.discarded_dim,
            },
            "canonical": {},
        }
        for rank in ranks:
            entry["canonical"][str(rank)] = _canonical_entry(tucker, rank, cpd_opt, cell.n_qe)
        report["mos"][name] = entry

    report_path = _resolve_report_path(job_path, out_path, outputs)
    _write_report(report, report_path)
    if outputs.get("history_csv", False):
        _write_history_csvs(report, report_path)
    if outputs.get("export_statevectors", False):
        fmt = outputs.get("statevector_format", "csv")
        for name in report["mos"]:
            for which in ("ideal", "tucker"):
                export_state(report, which, fmt, mo=name,
                             out_path=_export_path(report_path, name, which, None, fmt),
                             max_qubits=guard)
            for rank_key in report["mos"][name]["canonical"]:
                export_state(report, "canonical", fmt, mo=name, rank=int(rank_key),
                             out_path=_export_path(report_path, name, "canonical", rank_key, fmt),
                             max_qubits=guard)
    return report, report_path


def _resolve_report_path(job_path, out_path, outputs: dict) -> Path:
    if out_path is not None:
        return Path(out_path)
    if "report" in outputs:
        return Path(job_path).parent / outputs["report"]
    return Path(job_path).with_suffix(".report.json")


def _write_report(report: dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")


def _write_history_csvs(report: dict, report_path: Path) -> None:
    for name, entry in report["mos"].items():
        rows = ["iteration,fidelity"]
        history = entry["diagnostics"].get("fidelity_history")
        if history is None:
            continue
        rows += [f"{i},{float(v)!r}" for i, v in enumerate(history)]
        Path(report_path).with_suffix(f".{name}.history.csv").write_text("\n".join(rows) + "\n")


def _export_path(report_path: Path, mo: str, which: str, rank, fmt: str) -> Path:
    ext = "csv" if fmt == "csv" else "bin"
    tag = which if rank is None else f"{which}{rank}"
    return Path(report_path).with_suffix(f".{mo}.{tag}.{ext}")


def _rebuild_state(report: dict, which: str, mo: str, rank: int | None, max_qubits: int) -> np.ndarray:
    job = report["job"]
    n_qe = job["cell"]["n_qe"]
    if mo not in report["mos"]:
        raise ValueError(f"report has no MO named {mo!r}")
    entry = report["mos"][mo]
    if which == "ideal":
        cell = _job_cell(job)
        _, mos = _job_molecule(job)
        state, _ = build_ideal_state(mos[mo], cell, max_qubits=max_qubits)
        return state.amplitudes
    if n_qe > max_qubits:
        raise ResourceLimitError(
            f"n_qe={n_qe} exceeds the guard of {max_qubits} qubits per axis")
    spec = _spec_from_payload(entry, n_qe)
    if which == "tucker":
        return tucker_statevector(spec, _core_from_payload(entry))
    if which == "canonical":
        keys = sorted(entry["canonical"], key=int)
        if not keys:
            raise ValueError(f"MO {mo!r} has no canonical decompositions in the report")
        key = keys[-1] if rank is None else str(rank)
        if key not in entry["canonical"]:
            raise ValueError(f"MO {mo!r} has no rank-{rank} decomposition in the report")
        canon = entry["canonical"][key]
        u = tuple(np.asarray(canon["u"][ax], dtype=np.float64) for ax in AXES)
        return canonical_statevector(spec, np.asarray(canon["lambdas"]), u)
    raise ValueError(f"unknown state selector {which!r}")


def export_state(report: dict, which: str, fmt: str, mo: str | None = None,
                 rank: int | None = None, out_path=None,
                 max_qubits: int = DEFAULT_MAX_QUBITS) -> Path:
    """Write one grid statevector from a report as CSV or raw binary.

    CSV rows are ``k_x,k_y,k_z,amplitude``; binary files carry a 32-byte
    header (magic ``MFLO``, format version, n_qe, form tag) followed by the
    amplitudes as little-endian 8-byte reals, k_z fastest.
    """
    if fmt not in ("csv", "binary"):
        raise ValueError(f"format must be 'csv' or 'binary', got {fmt!r}")
    if mo is None:
        mo = sorted(report["mos"])[0]
    amplitudes = _rebuild_state(report, which, mo, rank, max_qubits)
    n_qe = report["job"]["cell"]["n_qe"]
    if out_path is None:
        out_path = Path(f"{mo}.{which}.{'csv' if fmt == 'csv' else 'bin'}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        N = 1 << n_qe
        k = np.arange(N)
        kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
        lines = ["k_x,k_y,k_z,amplitude"]
        lines += [f"{x},{y},{z},{a!r}" for x, y, z, a in
                  zip(kx.ravel(), ky.ravel(), kz.ravel(), map(float, amplitudes))]
        out_path.write_text("\n".join(lines) + "\n")
    else:
        header = struct.pack(HEADER_FORMAT, MAGIC, BINARY_VERSION, n_qe, FORM_TAGS[which])
        out_path.write_bytes(header + amplitudes.astype("<f8").tobytes())
    return out_path


def read_state_export(path) -> tuple[np.ndarray, dict]:
    """Load a statevector export (either format); returns (amplitudes, meta)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == MAGIC:
        magic, version, n_qe, tag = struct.unpack(HEADER_FORMAT, data[:32])
        amps = np.frombuffer(data[32:], dtype="<f8")
        if amps.size != 1 << (3 * n_qe):
            raise ValueError(f"{path}: expected {1 << (3 * n_qe)} amplitudes, found {amps.size}")
        form = {v: k for k, v in FORM_TAGS.items()}[tag]
        return amps.copy(), {"format": "binary", "version": version, "n_qe": n_qe, "form": form}
    lines = data.decode().splitlines()
    vals = np.asarray([float(line.rsplit(",", 1)[1]) for line in lines[1:]])
    return vals, {"format": "csv", "header": lines[0]}


def run_decompose(report_path, ranks, mo_names=None, out_path=None, seed=None,
                  n_restarts=None, threads=1) -> tuple[dict, Path]:
    """Re-run the rank sweep on an existing report, updating it in place."""
    report_path = Path(report_path)
    report = json.loads(report_path.read_text())
    job = report["job"]
    n_qe = job["cell"]["n_qe"]
    cfg = dict(job.get("cpd", {}))
    cfg.pop("ranks", None)
    if n_restarts is not None:
        cfg["n_restarts"] = int(n_restarts)
    if seed is not None:
        cfg["seed"] = int(seed)
    options = CpdOptions(threads=max(1, threads), **cfg)
    names = list(report["mos"]) if not mo_names else list(mo_names)
    for name in names:
        if name not in report["mos"]:
            raise ValueError(f"report has no MO named {name!r}")
        entry = report["mos"][name]
        tucker = _tucker_from_payload(entry, n_qe)
        if any(r > tucker.spec.n_prod for r in ranks):
            raise ValueError(f"rank sweep exceeds n_prod={tucker.spec.n_prod}")
        for rank in ranks:
            entry["canonical"][str(rank)] = _canonical_entry(tucker, rank, options, n_qe)
    out = Path(out_path) if out_path is not None else report_path
    _write_report(report, out)
    return report, out


def gate_count_table(n_l, n_qe: int, ranks=()) -> dict:
    """Standalone resource calculator for one basis layout."""
    n_a, n_al, _ = ancilla_counts(n_l)
    tucker = cnot_count_tucker(n_l, n_qe)
    out = {
        "n_l": [int(v) for v in n_l],
        "n_qe": int(n_qe),
        "ancillae": {"per_axis": list(n_a), "lorentzian": n_al},
        "tucker": {"total": tucker.cx_total, "sph": tucker.cx_sph, "amp": tucker.cx_amp},
        "qft_informational": tucker.qft_cx_informational,
        "canonical": {},
    }
    for rank in ranks:
        c = cnot_count_canonical(n_l, n_qe, rank)
        out["canonical"][str(int(rank))] = {
            "total": c.cx_total, "sph": c.cx_sph, "amp": c.cx_amp,
            "n_a_canonical": c.n_a_canonical,
        }
    return out


# ---------------------------------------------------------------------------
# verification battery

_GATE_COUNT_CASES = (
    # (n_l, n_qe, rank, tucker_total, tucker_sph, canonical_total)
    ((3, 3, 3), 7, 3, 305, 243, 281),
    ((3, 4, 2), 7, 2, 231, 201, 215),
    ((3, 3, 2), 7, 3, 231, 201, 231),
    ((4, 2, 2), 7, 2, 173, 159, 169),
)
_H2_GATE_CASE = ((2, 1, 1), 6, 63)
_PROB_CASES = (
    # (core over a 2-state basis, frozen 1/(n_prod sum d^2), printed value)
    ((0.523, 0.581), 0.8182100836210706, 0.82),
    ((1.56, -1.55), 0.1033890945183102, 0.10),
)


def _check_profile_invariants() -> str:
    worst = 0.0
    for n in (3, 5):
        N = 1 << n
        for a in (0.1, 0.5, 1.0, 2.0, 5.0):
            vals, _ = lf_profile(n, a)
            worst = max(worst, abs(float(vals @ vals) - 1.0))
            if np.any(vals <= 0.0):
                raise AssertionError(f"non-positive profile entry at n={n}, a={a}")
            sym = vals[1:] - vals[1:][::-1]
            worst = max(worst, float(np.max(np.abs(sym))))
            shifted = np.roll(np.roll(lf_state(n, a, 0), 5), N - 5)
            worst = max(worst, float(np.max(np.abs(shifted - vals))))
    if worst > 1e-12:
        raise AssertionError(f"profile invariant residual {worst:.3e}")
    return f"worst residual {worst:.1e}"


def _check_profile_limits() -> str:
    vals, _ = lf_profile(4, 1e-6)
    if not (vals[0] >= 1.0 - 1e-8 and float(np.max(vals[1:])) < 1e-4):
        raise AssertionError("small-width profile is not concentrated on k=0")
    flat, _ = lf_profile(4, 50.0)
    spread = float(np.ptp(flat))
    if spread > 1e-12:
        raise AssertionError(f"large-width profile spread {spread:.3e}")
    return "delta and flat limits hold"


def _check_gate_counts() -> str:
    for n_l, n_qe, rank, total, sph, canon_total in _GATE_COUNT_CASES:
        t = cnot_count_tucker(n_l, n_qe)
        c = cnot_count_canonical(n_l, n_qe, rank)
        if (t.cx_total, t.cx_sph, c.cx_total) != (total, sph, canon_total):
            raise AssertionError(
                f"n_l={n_l}: got {(t.cx_total, t.cx_sph, c.cx_total)}, "
                f"expected {(total, sph, canon_total)}")
    n_l, n_qe, total = _H2_GATE_CASE
    if cnot_count_tucker(n_l, n_qe).cx_total != total:
        raise AssertionError(f"two-LF layout: expected Tucker total {total}")
    return f"{len(_GATE_COUNT_CASES) + 1} layouts exact"


def _check_probability_constants() -> str:
    for core, frozen, printed in _PROB_CASES:
        p = tucker_success_from_core(np.asarray(core).reshape(len(core), 1, 1))
        if abs(p - frozen) > 1e-12:
            raise AssertionError(f"core {core}: got {p!r}, expected {frozen!r}")
        if abs(p - printed) > 0.005:
            raise AssertionError(f"core {core}: {p:.4f} vs published {printed}")
    return "both reference cores match"


def _check_two_center_oracle() -> str:
    worst = 0.0
    thetas = np.linspace(-math.pi / 2, math.pi / 2, 21)
    for a in (0.5, 2.0):
        table = two_center_analysis(5, a, 6, 10, thetas)
        la, lb = lf_state(5, a, 6), lf_state(5, a, 10)
        for theta, prob in zip(table[:, 0], table[:, 1]):
            oracle = lcu_postselect_oracle(
                [(math.cos(theta), la), (math.sin(theta), lb)])
            worst = max(worst, abs(oracle - prob))
    if worst > 1e-12:
        raise AssertionError(f"oracle mismatch {worst:.3e}")
    return f"worst |oracle - curve| = {worst:.1e}"


def _check_profile_derivative() -> str:
    worst = 0.0
    h = 1e-6
    for a in (0.5, 2.0):
        grad = lf_profile_da(5, a)
        fd = (lf_profile(5, a + h)[0] - lf_profile(5, a - h)[0]) / (2 * h)
        worst = max(worst, float(np.max(np.abs(grad - fd))) / float(np.max(np.abs(grad))))
    if worst > 1e-6:
        raise AssertionError(f"profile derivative relative error {worst:.3e}")
    return f"relative error {worst:.1e}"


def _verify_problem(alpha: float) -> FitProblem:
    ao = gaussian_ao([0.5], [1.0], (0, 0, 0), [4.2, 3.8, 4.0])
    mo = MolecularOrbital(ao_list=(ao,), coefficients=[1.0])
    cell = SimulationCell(origin=[0.0, 0.0, 0.0], edge_lengths=[8.0, 8.0, 8.0], n_qe=4)
    spec = LorentzianBasisSpec(
        n=4, widths=(np.array([0.8, 1.3]), np.array([1.0]), np.array([0.9])),
        centers=(np.array([7, 9]), np.array([8]), np.array([8])))
    return FitProblem.build(mo, cell, spec, alpha_pen=alpha)


def _check_gradient_fd() -> str:
    worst = 0.0
    h = 1e-5
    for alpha in (0.0, 0.1):
        problem = _verify_problem(alpha)
        w0 = problem.spec.widths_flat()
        d, kappa, _ = solve_core(t_tensor(problem), overlap_3d(problem.spec), alpha)
        grad = fidelity_gradient(problem, d, kappa)
        fd = np.empty_like(grad)
        for i in range(w0.size):
            shift = np.zeros_like(w0)
            shift[i] = h
            fp = solve_core(t_tensor(problem.with_spec(problem.spec.with_widths(w0 + shift))),
                            overlap_3d(problem.spec.with_widths(w0 + shift)), alpha)[2]
            fm = solve_core(t_tensor(problem.with_spec(problem.spec.with_widths(w0 - shift))),
                            overlap_3d(problem.spec.with_widths(w0 - shift)), alpha)[2]
            fd[i] = (fp - fm) / (2 * h)
        rel = float(np.max(np.abs(grad - fd))) / max(float(np.max(np.abs(grad))), 1e-12)
        worst = max(worst, rel)
    if worst > 1e-5:
        raise AssertionError(f"gradient relative error {worst:.3e}")
    return f"relative error {worst:.1e}"


def _check_pipeline(report: dict) -> str:
    worst = 0.0
    for name, entry in report["mos"].items():
        for value in entry["identity_residuals"].values():
            worst = max(worst, float(value))
        p = entry["success_probability_tucker"]
        if not 0.0 < p <= 1.0 + 1e-12:
            raise AssertionError(f"MO {name}: probability {p} outside (0, 1]")
    if worst > IDENTITY_TOL:
        raise AssertionError(f"identity residual {worst:.3e}")
    return f"worst identity residual {worst:.1e}"


def _check_statevector_overlap(report: dict, max_qubits: int) -> str:
    job = report["job"]
    cell = _job_cell(job)
    _, mos = _job_molecule(job)
    worst = 0.0
    for name, entry in report["mos"].items():
        spec = _spec_from_payload(entry, cell.n_qe)
        core = _core_from_payload(entry)
        ideal, _ = build_ideal_state(mos[name], cell, max_qubits=max_qubits)
        f = float(ideal.amplitudes @ tucker_statevector(spec, core))
        worst = max(worst, abs(f * f - entry["squared_overlap"]))
        S = overlap_3d(spec)
        branches = [(w, e) for w, e in zip(core.ravel(), np.eye(spec.n_prod))]
        oracle = lcu_postselect_oracle(branches, metric=S)
        worst = max(worst, abs(oracle - entry["success_probability_tucker"]))
    if worst > 1e-8:
        raise AssertionError(f"statevector oracle residual {worst:.3e}")
    return f"worst residual {worst:.1e}"


def _check_cp_exactness(report: dict) -> str:
    job = report["job"]
    n_qe = job["cell"]["n_qe"]
    name = sorted(report["mos"])[0]
    tucker = _tucker_from_payload(report["mos"][name], n_qe)
    n_prod = tucker.spec.n_prod
    canon = decompose_core(tucker, n_prod, CpdOptions(n_restarts=2))
    if canon.deviation >= 1e-10:
        raise AssertionError(f"full-rank deviation {canon.deviation:.3e}")
    prob = success_prob_canonical(canon)
    lam_flat = np.einsum("r,ra,rb,rc->rabc", canon.lambdas,
                         canon.u[0], canon.u[1], canon.u[2]).reshape(canon.R * n_prod)
    states = np.tile(np.eye(n_prod), (canon.R, 1))
    oracle = lcu_postselect_oracle(list(zip(lam_flat, states)), metric=overlap_3d(tucker.spec))
    if abs(oracle - prob) > 1e-10:
        raise AssertionError(f"canonical probability vs oracle {abs(oracle - prob):.3e}")
    return f"deviation {canon.deviation:.1e}, probability oracle agrees"


def _check_export_roundtrip(report: dict, tmp: Path, max_qubits: int) -> str:
    name = sorted(report["mos"])[0]
    csv_path = export_state(report, "ideal", "csv", mo=name,
                            out_path=tmp / "ideal.csv", max_qubits=max_qubits)
    bin_path = export_state(report, "ideal", "binary", mo=name,
                            out_path=tmp / "ideal.bin", max_qubits=max_qubits)
    from_csv, _ = read_state_export(csv_path)
    from_bin, meta = read_state_export(bin_path)
    if meta["form"] != "ideal" or meta["n_qe"] != report["job"]["cell"]["n_qe"]:
        raise AssertionError("binary header does not describe the export")
    if not np.array_equal(from_csv, from_bin):
        raise AssertionError("CSV and binary exports disagree")
    norm_err = abs(float(from_bin @ from_bin) - 1.0)
    if norm_err > 1e-12:
        raise AssertionError(f"reloaded norm off by {norm_err:.3e}")
    return f"formats agree, norm residual {norm_err:.1e}"


def run_verify(job_path, seed=None, max_qubits=None, threads=1, stream=None) -> int:
    """Invariant battery; prints a per-check table, returns an exit code."""
    stream = stream or sys.stdout
    guard = DEFAULT_MAX_QUBITS if max_qubits is None else int(max_qubits)
    results = []

    def run(name, fn):
        try:
            results.append((name, True, fn()))
        except Exception as exc:  # noqa: BLE001 - each check reports independently
            results.append((name, False, str(exc)))

    run("profile-invariants", _check_profile_invariants)
    run("profile-limits", _check_profile_limits)
    run("profile-derivative-fd", _check_profile_derivative)
    run("gate-count-constants", _check_gate_counts)
    run("probability-constants", _check_probability_constants)
    run("two-center-oracle", _check_two_center_oracle)
    run("gradient-fd", _check_gradient_fd)

    report = None
    with tempfile.TemporaryDirectory() as td:
        tmp = Path(td)

        def pipeline():
            nonlocal report
            report, _ = run_fit(job_path, out_path=tmp / "run1.json", seed=seed,
                                max_qubits=guard, threads=threads)
            return _check_pipeline(report)

        run("pipeline-identities", pipeline)
        if report is not None:
            run("statevector-overlap", lambda: _check_statevector_overlap(report, guard))
            run("cp-exactness", lambda: _check_cp_exactness(report))
            run("export-roundtrip", lambda: _check_export_roundtrip(report, tmp, guard))

            def determinism():
                run_fit(job_path, out_path=tmp / "run2.json", seed=seed,
                        max_qubits=guard, threads=threads)
                if (tmp / "run1.json").read_bytes() != (tmp / "run2.json").read_bytes():
                    raise AssertionError("repeated runs differ")
                return "repeated runs byte-identical"

            run("determinism", determinism)
        else:
            for name in ("statevector-overlap", "cp-exactness", "export-roundtrip", "determinism"):
                results.append((name, False, "skipped: pipeline run failed"))

    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'pass' if ok else 'FAIL'}  {detail}", file=stream)
    n_pass = sum(ok for _, ok, _ in results)
    print(f"{n_pass}/{len(results)} checks passed", file=stream)
    if n_pass != len(results):
        failed = [name for name, ok, _ in results if not ok]
        print("failed: " + ", ".join(failed), file=stream)
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _parse_triple(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    return tuple(parts)


def _parse_ranks(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mflo",
        description="Fit molecular orbitals with discrete Lorentzian product bases "
                    "and report qubit-encoding costs.")
    parser.add_argument("--version", action="version", version=f"mflo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run the fit/decompose/report pipeline on a job file")
    fit.add_argument("--job", required=True)
    fit.add_argument("--out", default=None, help="report path (default from the job file)")
    fit.add_argument("--seed", type=int, default=None, help="override the job seeds")
    fit.add_argument("--max-qubits", type=int, default=None)
    fit.add_argument("--threads", type=int, default=1)

    dec = sub.add_parser("decompose", help="re-run the CP rank sweep on an existing report")
    dec.add_argument("--report", required=True)
    dec.add_argument("--ranks", required=True, type=_parse_ranks)
    dec.add_argument("--mo", action="append", default=None, help="restrict to named MOs")
    dec.add_argument("--out", default=None, help="write here instead of updating in place")
    dec.add_argument("--seed", type=int, default=None)
    dec.add_argument("--restarts", type=int, default=None)
    dec.add_argument("--threads", type=int, default=1)

    gc = sub.add_parser("gate-count", help="ancilla/CNOT calculator for a basis layout")
    gc.add_argument("--job", default=None, help="take the layout from a job file")
    gc.add_argument("--n-l", type=_parse_triple, default=None, help="e.g. 3,3,3")
    gc.add_argument("--n-qe", type=int, default=None)
    gc.add_argument("--rank", action="append", type=int, default=None)
    gc.add_argument("--out", default=None, help="write JSON here instead of stdout")

    exp = sub.add_parser("export-state", help="write a grid statevector from a report")
    exp.add_argument("--report", required=True)
    exp.add_argument("--which", required=True, choices=("ideal", "tucker", "canonical"))
    exp.add_argument("--mo", default=None, help="MO name (default: first alphabetically)")
    exp.add_argument("--rank", type=int, default=None, help="canonical rank (default: largest)")
    exp.add_argument("--format", default="csv", choices=("csv", "binary"))
    exp.add_argument("--out", default=None)
    exp.add_argument("--max-qubits", type=int, default=None)

    two = sub.add_parser("two-center", help="interference sweep for two LF branches")
    two.add_argument("--n", type=int, required=True, help="grid qubits per direction")
    two.add_argument("--a", type=float, required=True, help="shared LF width")
    two.add_argument("--center-a", type=int, required=True)
    two.add_argument("--center-b", type=int, required=True)
    two.add_argument("--points", type=int, default=21)
    two.add_argument("--out", default=None, help="CSV path (default stdout)")

    ver = sub.add_parser("verify", help="run the built-in check battery")
    ver.add_argument("--job", required=True)
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--max-qubits", type=int, default=None)
    ver.add_argument("--threads", type=int, default=1)
    return parser


def _cmd_fit(args) -> int:
    report, path = run_fit(args.job, out_path=args.out, seed=args.seed,
                           max_qubits=args.max_qubits, threads=args.threads)
    for name, entry in sorted(report["mos"].items()):
        flags = ",".join(entry["diagnostics"]["flags"]) or "-"
        print(f"{name}: squared_overlap={entry['squared_overlap']:.6f} "
              f"P_tucker={entry['success_probability_tucker']:.6f} flags={flags}")
    print(f"report written to {path}")
    return EXIT_OK


def _cmd_decompose(args) -> int:
    report, path = run_decompose(args.report, args.ranks, mo_names=args.mo,
                                 out_path=args.out, seed=args.seed,
                                 n_restarts=args.restarts, threads=args.threads)
    for name in sorted(report["mos"]):
        for key in sorted(report["mos"][name]["canonical"], key=int):
            entry = report["mos"][name]["canonical"][key]
            print(f"{name} R={key}: deviation={entry['deviation']:.3e} "
                  f"P_canonical={entry['success_probability']:.6f}")
    print(f"report written to {path}")
    return EXIT_OK


def _cmd_gate_count(args) -> int:
    if args.job is not None:
        job = load_job(args.job)
        cell = _job_cell(job)
        spec = _job_spec(job, cell)
        n_l, n_qe = spec.n_l, cell.n_qe
        ranks = args.rank if args.rank else job.get("cpd", {}).get("ranks", [])
    else:
        if args.n_l is None or args.n_qe is None:
            raise ValueError("gate-count needs either --job or both --n-l and --n-qe")
        n_l, n_qe = args.n_l, args.n_qe
        ranks = args.rank or []
    table = gate_count_table(n_l, n_qe, ranks)
    text = json.dumps(_jsonable(table), sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def _cmd_export_state(args) -> int:
    report = json.loads(Path(args.report).read_text())
    guard = DEFAULT_MAX_QUBITS if args.max_qubits is None else args.max_qubits
    path = export_state(report, args.which, args.format, mo=args.mo,
                        rank=args.rank, out_path=args.out, max_qubits=guard)
    print(f"written to {path}")
    return EXIT_OK


def _cmd_two_center(args) -> int:
    thetas = np.linspace(-math.pi / 2, math.pi / 2, args.points)
    table = two_center_analysis(args.n, args.a, args.center_a, args.center_b, thetas)
    lines = two_center_csv_lines(table)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"written to {args.out}")
    else:
        print("\n".join(lines))
    return EXIT_OK


def _cmd_verify(args) -> int:
    return run_verify(args.job, seed=args.seed, max_qubits=args.max_qubits,
                      threads=args.threads)


_HANDLERS = {
    "fit": _cmd_fit,
    "decompose": _cmd_decompose,
    "gate-count": _cmd_gate_count,
    "export-state": _cmd_export_state,
    "two-center": _cmd_two_center,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except JobError as exc:
        _emit_error("schema", exc.message, pointer=exc.pointer)
        return EXIT_SCHEMA
    except ResourceLimitError as exc:
        _emit_error("resource", str(exc))
        return EXIT_RESOURCE
    except (ConditioningError, DegenerateInputError, RuntimeError,
            ValueError, OSError, KeyError) as exc:
        _emit_error("run", str(exc))
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
