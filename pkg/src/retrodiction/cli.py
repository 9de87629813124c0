"""Command-line pipeline: scenario file in, CSV tables and a JSON report out.

Subcommands::

    retrodiction run <file> --out <dir> [--seed N] [--tol X] [--plot]
    retrodiction reverse <file>
    retrodiction verify <dir> [--tol X]
    retrodiction batch <dir> [--out <dir>] [--jobs N]

Exit codes: 0 when every identity holds within tolerance, 2 when one is
violated, 1 for input or configuration errors (a JSON error object is
written to stderr).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import jsonschema
import numpy as np

from .errors import (
    IoError,
    ParseError,
    RetrodictionError,
    SchemaError,
    VersionError,
)
from .fluctuation import (
    MERGE_TOL,
    DiscreteMeasure,
    FamilyReport,
    crooks_residuals,
    evaluate_family,
    make_f_family,
    max_residual,
)
from .prob_core import Distribution, make_channel, validate_distribution
from .quantum import kraus_channel, povm, quantum_process
from . import scenarios as sc

SCHEMA_VERSION = 1
DEFAULT_TOL = 1e-10
ATOM_TOL = 1e-9
JOINT_CSV, MEASURES_CSV, SUMMARY_JSON = "joint.csv", "measures.csv", "summary.json"

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION = 0, 1, 2

# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_CPLX = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]}
_CMAT = {"type": "array", "minItems": 1,
         "items": {"type": "array", "items": _CPLX, "minItems": 1}}
_CMATS = {"type": "array", "items": _CMAT, "minItems": 1}
_LABELS = {"type": "array", "minItems": 1, "uniqueItems": True,
           "items": {"type": ["string", "integer"]}}


def _params(required: Sequence[str], **props) -> dict:
    return {"type": "object", "required": list(required), "properties": props,
            "additionalProperties": False}


PARAMETER_SCHEMAS = {
    "classical": _params(["channel", "p", "q"], channel=_MAT, p=_VEC, q=_VEC, gamma=_VEC,
                         alphabet=_LABELS),
    "tasaki": _params(["eps", "eta", "unitary", "beta"], eps=_VEC, eta=_VEC, unitary=_CMAT,
                      beta=_POS, eps_basis=_CMAT, eta_basis=_CMAT),
    "deterministic": _params(["perm", "energies"], perm={"type": "array", "items": _INT},
                             energies=_VEC, final_energies=_VEC, beta=_POS,
                             prior={"enum": ["thermal", "microcanonical"]},
                             initial_shell=_NUM, final_shell=_NUM),
    "reservoir": _params(["perm", "reservoir_energies", "beta", "p", "q"],
                         perm={"type": "array", "items": {"oneOf": [
                             _INT, {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2}]}},
                         reservoir_energies=_VEC, beta=_POS, p=_VEC, q=_VEC),
    "crooks-relaxation": _params(["e_pre", "e_post", "relax", "beta"], e_pre=_VEC, e_post=_VEC,
                                 beta=_POS, relax={"oneOf": [
                                     {"type": "number", "minimum": 0, "maximum": 1}, _MAT]}),
    "two-measurement": _params(["kraus", "eps", "eta", "beta"], kraus=_CMATS, eps=_VEC, eta=_VEC,
                               beta=_POS, eps_basis=_CMAT, eta_basis=_CMAT, gamma=_VEC),
    "amplitude-damping": _params(["damping", "beta"],
                                 damping={"type": "number", "minimum": 0, "maximum": 1},
                                 beta=_POS, energies=_VEC, basis_angle=_NUM),
    "quantum-process": _params(["preparations", "kraus", "povm", "p", "q"], preparations=_CMATS,
                               kraus=_CMATS, povm=_CMATS, p=_VEC, q=_VEC, gamma=_VEC),
    "random": _params(["scenario", "dims"],
                      scenario={"enum": ["classical-channel", "doubly-stochastic",
                                         "quantum-process", "two-measurement", "reservoir"]},
                      dims={"oneOf": [{"type": "integer", "minimum": 1},
                                      {"type": "array", "items": {"type": "integer", "minimum": 1},
                                       "minItems": 2, "maxItems": 2}]},
                      seed={"type": "integer", "minimum": 0}),
}

FILE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "kind", "parameters"],
    "additionalProperties": False,
    "properties": {
        "schema_version": _INT,
        "kind": {"enum": sorted(PARAMETER_SCHEMAS)},
        "description": {"type": "string"},
        "parameters": {"type": "object"},
        "f_families": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["kind"], "additionalProperties": False,
            "properties": {"kind": {"enum": ["log", "power", "exp"]}, "parameter": _NUM}}},
    },
}

DEFAULT_FAMILIES = ({"kind": "log", "parameter": 1.0},)


@dataclass(frozen=True)
class ScenarioFile:
    schema_version: int
    kind: str
    parameters: dict
    f_families: tuple
    source_sha256: str = ""
    path: str = ""


def _where(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _validate(instance, schema, prefix=()) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise SchemaError(f"{_where(tuple(prefix) + tuple(err.absolute_path))}: {err.message}")


def _check_rows(matrix, name) -> None:
    widths = {len(row) for row in matrix}
    if len(widths) != 1:
        raise SchemaError(f"parameters.{name}: rows have different lengths {sorted(widths)}")


def _check_distribution(values, name) -> None:
    try:
        validate_distribution(values)
    except RetrodictionError as exc:
        raise SchemaError(f"parameters.{name}: {exc}") from None


def _check_stochastic(matrix, name) -> None:
    _check_rows(matrix, name)
    for i, row in enumerate(matrix):
        try:
            validate_distribution(row)
        except RetrodictionError as exc:
            raise SchemaError(f"parameters.{name}[{i}]: row is not a distribution ({exc})") from None


def _semantic_checks(kind: str, params: dict) -> None:
    for key in ("p", "q", "gamma"):
        if key in params:
            _check_distribution(params[key], key)
    for key in ("unitary", "eps_basis", "eta_basis"):
        if key in params:
            _check_rows(params[key], key)
    for key in ("kraus", "preparations", "povm"):
        for i, m in enumerate(params.get(key, ())):
            _check_rows(m, f"{key}[{i}]")
    if kind == "classical":
        _check_stochastic(params["channel"], "channel")
        n = len(params["channel"])
        if len(params["channel"][0]) != n:
            raise SchemaError("parameters.channel: matrix must be square")
        for key in ("p", "q", "gamma", "alphabet"):
            if key in params and len(params[key]) != n:
                raise SchemaError(f"parameters.{key}: expected {n} entries, got {len(params[key])}")
    if kind == "crooks-relaxation" and isinstance(params["relax"], list):
        _check_stochastic(params["relax"], "relax")


def parse_scenario_data(data, *, source_sha256: str = "", path: str = "") -> ScenarioFile:
    """Validate an already-decoded JSON document."""
    if not isinstance(data, dict):
        raise SchemaError("<root>: scenario file must be a JSON object")
    version = data.get("schema_version")
    if isinstance(version, int) and not isinstance(version, bool) and version != SCHEMA_VERSION:
        raise VersionError(f"schema_version {version} is not supported (expected {SCHEMA_VERSION})")
    _validate(data, FILE_SCHEMA)
    kind = data["kind"]
    params = data["parameters"]
    _validate(params, PARAMETER_SCHEMAS[kind], ("parameters",))
    _semantic_checks(kind, params)
    families = tuple(data.get("f_families", DEFAULT_FAMILIES))
    for i, spec in enumerate(families):
        try:
            make_f_family(spec["kind"], spec.get("parameter"))
        except RetrodictionError as exc:
            raise SchemaError(f"f_families[{i}]: {exc}") from None
    return ScenarioFile(version, kind, params, families, source_sha256, path)


def parse_scenario_file(path) -> ScenarioFile:
    """Read, decode and validate a scenario file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc.reason} at byte {exc.start})") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario_data(data, source_sha256=hashlib.sha256(raw).hexdigest(), path=str(path))


# ---------------------------------------------------------------------------
# building scenarios
# ---------------------------------------------------------------------------

def _cmatrix(rows) -> np.ndarray:
    return np.array([[complex(v[0], v[1]) if isinstance(v, list) else complex(v) for v in row]
                     for row in rows])


def _dist(values, alphabet=None) -> Distribution:
    return validate_distribution(values, alphabet)


def build_scenario(sf: ScenarioFile, seed: Optional[int] = None) -> sc.ScenarioRun:
    """Run the scenario constructor named by ``sf.kind``."""
    k, p = sf.kind, sf.parameters
    if k == "classical":
        labels = tuple(p["alphabet"]) if "alphabet" in p else None
        channel = make_channel(p["channel"], labels, labels)
        labels = channel.input_alphabet
        gamma = _dist(p["gamma"], labels) if "gamma" in p else None
        return sc.classical_scenario(channel, _dist(p["p"], labels), _dist(p["q"], labels), gamma)
    if k == "tasaki":
        return sc.tasaki_scenario(p["eps"], p["eta"], _cmatrix(p["unitary"]), p["beta"],
                                  _basis_or_none(p, "eps_basis"), _basis_or_none(p, "eta_basis"))
    if k == "deterministic":
        return sc.deterministic_hamiltonian_scenario(
            p["perm"], p["energies"], prior=p.get("prior", "thermal"), beta=p.get("beta"),
            final_energies=p.get("final_energies"), initial_shell=p.get("initial_shell"),
            final_shell=p.get("final_shell"))
    if k == "reservoir":
        n = len(p["p"])
        return sc.jarz2000_scenario(p["perm"], p["reservoir_energies"], p["beta"],
                                    _dist(p["p"], range(n)), _dist(p["q"], range(n)))
    if k == "crooks-relaxation":
        relax = p["relax"]
        if isinstance(relax, list):
            relax = make_channel(relax)
        return sc.crooks_work_relaxation_scenario(p["e_pre"], p["e_post"], relax, p["beta"])
    if k == "two-measurement":
        d = len(p["eps"])
        gamma = _dist(p["gamma"], range(d)) if "gamma" in p else None
        return sc.general_two_measurement_scenario(
            [_cmatrix(m) for m in p["kraus"]], p["eps"], p["eta"], p["beta"],
            _basis_or_none(p, "eps_basis"), _basis_or_none(p, "eta_basis"), gamma)
    if k == "amplitude-damping":
        return sc.amplitude_damping_scenario(p["damping"], p["beta"],
                                             tuple(p.get("energies", (0.0, 1.0))),
                                             p.get("basis_angle", math.pi / 8))
    if k == "quantum-process":
        n = len(p["povm"])
        meas = povm([_cmatrix(m) for m in p["povm"]], tuple(range(n)))
        gamma = _dist(p["gamma"], range(n)) if "gamma" in p else None
        qp = quantum_process([_cmatrix(m) for m in p["preparations"]],
                             kraus_channel([_cmatrix(m) for m in p["kraus"]]), meas, gamma)
        return sc.quantum_process_scenario(qp, _dist(p["p"], range(n)), _dist(p["q"], range(n)))
    if k == "random":
        dims = tuple(p["dims"]) if isinstance(p["dims"], list) else p["dims"]
        chosen = seed if seed is not None else p.get("seed", 0)
        return sc.random_scenario(p["scenario"], dims, chosen).run()
    raise SchemaError(f"kind: unknown scenario {k!r}")


def _basis_or_none(params, key):
    return _cmatrix(params[key]) if key in params else None


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def fmt(v: float) -> str:
    """17 significant digits; round-trips every double."""
    return format(float(v), ".17g")


def fmt_label(label) -> str:
    if isinstance(label, tuple):
        return "(" + ", ".join(fmt_label(part) for part in label) + ")"
    if isinstance(label, float):
        return fmt(label)
    return str(label)


def _json_number(v):
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _digest(text: str) -> dict:
    return {"rows": text.count("\n") - 1, "sha256": hashlib.sha256(text.encode()).hexdigest()}


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    """Everything written to ``summary.json``; every identity carries its residual."""

    kind: str
    seed: Optional[int]
    tolerance: float
    atom_tolerance: float
    source_sha256: str
    families: list
    checks: dict
    efficacy: Optional[float]
    steady_state: Optional[dict]
    metadata: dict
    tables: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.ok else EXIT_VIOLATION

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "seed": self.seed,
            "source_sha256": self.source_sha256,
            "tolerance": self.tolerance,
            "atom_tolerance": self.atom_tolerance,
            "status": "ok" if self.ok else "violation",
            "violations": self.violations,
            "families": self.families,
            "checks": {k: _json_number(v) for k, v in self.checks.items()},
            "efficacy": None if self.efficacy is None else _json_number(self.efficacy),
            "steady_state": self.steady_state,
            "metadata": self.metadata,
            "tables": self.tables,
        }


def _family_entry(rep: FamilyReport) -> dict:
    return {
        "family": rep.family.spec(),
        "name": rep.family.name,
        "jarzynski_average": _json_number(rep.jarzynski_average),
        "jarzynski_target": _json_number(rep.reverse_mass),
        "jarzynski_residual": _json_number(rep.jarzynski_residual),
        "max_crooks_residual": _json_number(rep.max_crooks_residual),
        "f_divergence": _json_number(rep.f_divergence),
        "atoms_forward": len(rep.mu_f),
        "atoms_reverse": len(rep.mu_r),
    }


def _metadata_json(meta: Mapping) -> dict:
    out = {}
    for key, value in sorted(meta.items()):
        if isinstance(value, (list, tuple)):
            out[key] = [_json_number(v) for v in value]
        elif isinstance(value, (float, np.floating)):
            out[key] = _json_number(value)
        else:
            out[key] = value
    return out


def _joint_rows(run: sc.ScenarioRun, reports: Sequence[FamilyReport]):
    pf, pr, ratio = run.forward, run.reverse, run.ratio
    r = ratio.as_dict()
    f_mass, r_mass = pf.as_dict(), pr.as_dict()
    omegas = [(rep.omega.forward(), rep.omega.reverse()) for rep in reports]
    label_names = sorted(run.labels)
    header = ["x", "y", "P_F", "P_R", "ratio"]
    for rep in reports:
        header += [f"omega_F[{rep.family.name}]", f"omega_R[{rep.family.name}]"]
    header += label_names
    rows = []
    for x in pf.x_alphabet:
        for y in pf.y_alphabet:
            a, b = f_mass.get((x, y), 0.0), r_mass.get((x, y), 0.0)
            if a == 0 and b == 0:
                continue
            row = [fmt_label(x), fmt_label(y), fmt(a), fmt(b),
                   fmt(r[(x, y)]) if (x, y) in r else fmt(0.0)]
            for om_f, om_r in omegas:
                row += [fmt(om_f[(x, y)]), fmt(om_r[(x, y)])] if (x, y) in om_f else ["", ""]
            for name in label_names:
                v = run.labels[name].get((x, y))
                row.append("" if v is None else fmt(v))
            rows.append(row)
    return header, rows


def _measure_rows(reports: Sequence[FamilyReport]):
    rows = []
    for rep in reports:
        for direction, mu in (("forward", rep.mu_f), ("reverse", rep.mu_r)):
            rows += [[rep.family.name, direction, fmt(v), fmt(w)] for v, w in mu.atoms()]
    return ["family", "direction", "omega", "weight"], rows


def run_pipeline(sf: ScenarioFile, out_dir, seed: Optional[int] = None,
                 tol: float = DEFAULT_TOL, plot: bool = False) -> RunReport:
    """Build the scenario, evaluate every family and write the three artefacts."""
    run = build_scenario(sf, seed)
    atom_tol = max(ATOM_TOL, tol)
    reports = [evaluate_family(run.forward, run.reverse, run.ratio,
                               make_f_family(spec["kind"], spec.get("parameter")), MERGE_TOL)
               for spec in sf.f_families]

    checks = dict(sorted(run.checks.items()))
    checks["log_ratio_closed_form"] = run.log_ratio_residual()
    violations = []
    for rep in reports:
        if not rep.jarzynski_residual <= tol:
            violations.append(f"{rep.family.name}: jarzynski residual {rep.jarzynski_residual:.3e}")
        if not rep.max_crooks_residual <= atom_tol:
            violations.append(f"{rep.family.name}: crooks residual {rep.max_crooks_residual:.3e}")
    for name, value in checks.items():
        limit = atom_tol if name == "log_ratio_closed_form" else tol
        if not value <= limit:
            violations.append(f"{name}: {value:.3e}")

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        joint_text = _csv_text(*_joint_rows(run, reports))
        measures_text = _csv_text(*_measure_rows(reports))
        (out / JOINT_CSV).write_text(joint_text, encoding="utf-8")
        (out / MEASURES_CSV).write_text(measures_text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write to {out}: {exc.strerror or exc}") from None

    gamma = None
    if run.gamma is not None:
        gamma = {fmt_label(x): _json_number(m) for x, m in zip(run.gamma.alphabet, run.gamma.mass)}
    meta = dict(run.metadata)
    efficacy = meta.pop("efficacy", None)
    report = RunReport(
        kind=sf.kind, seed=seed if sf.kind != "random" else (
            seed if seed is not None else sf.parameters.get("seed", 0)),
        tolerance=tol, atom_tolerance=atom_tol, source_sha256=sf.source_sha256,
        families=[_family_entry(rep) for rep in reports], checks=checks, efficacy=efficacy,
        steady_state=gamma, metadata=_metadata_json(meta),
        tables={JOINT_CSV: _digest(joint_text), MEASURES_CSV: _digest(measures_text)},
        violations=violations)
    write_json(out / SUMMARY_JSON, report.to_json())
    if plot:
        for rep in reports:
            safe = rep.family.name.replace("(", "_").replace(")", "")
            emit_plot({"forward": rep.mu_f, "reverse": rep.mu_r}, out / f"measures_{safe}.svg",
                      title=rep.family.name)
    return report


def write_json(path: Path, payload) -> None:
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# verification from emitted files
# ---------------------------------------------------------------------------

def _read_csv(path: Path):
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None


def verify_outputs(out_dir, tol: Optional[float] = None) -> dict:
    """Recompute Jarzynski and Crooks residuals from the CSVs alone.

    Returns per-family residuals plus whether they match ``summary.json``
    and whether the table digests still match.
    """
    out = Path(out_dir)
    try:
        summary = json.loads((out / SUMMARY_JSON).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {out / SUMMARY_JSON}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{out / SUMMARY_JSON}: {exc.msg}") from None
    tol = summary["tolerance"] if tol is None else tol
    atom_tol = max(ATOM_TOL, tol)
    digests = {}
    for name, expected in summary["tables"].items():
        text = (out / name).read_text(encoding="utf-8")
        digests[name] = _digest(text) == expected
    joint = _read_csv(out / JOINT_CSV)
    measures = _read_csv(out / MEASURES_CSV)

    results, violations = [], []
    for entry in summary["families"]:
        fam = make_f_family(entry["family"]["kind"], entry["family"]["parameter"])
        col = f"omega_F[{fam.name}]"
        live = [row for row in joint if row[col] != ""]
        # scalar evaluation, as in the library, so the sum is reproduced exactly
        avg = math.fsum(float(row["P_F"]) * float(fam.f_inverse(fam.g(float(row[col]))))
                        for row in live)
        target = math.fsum(float(row["P_R"]) for row in live)
        mus = {}
        for direction in ("forward", "reverse"):
            atoms = [(float(r["omega"]), float(r["weight"])) for r in measures
                     if r["family"] == fam.name and r["direction"] == direction]
            values = np.array([a for a, _ in atoms])
            weights = np.array([w for _, w in atoms])
            mus[direction] = DiscreteMeasure(values, weights, MERGE_TOL, math.fsum(weights))
        crooks = max_residual(crooks_residuals(mus["forward"], mus["reverse"], fam))
        jres = abs(avg - target)
        results.append({"name": fam.name, "jarzynski_average": avg, "jarzynski_residual": jres,
                        "max_crooks_residual": crooks,
                        "matches_summary": (avg == entry["jarzynski_average"]
                                            and crooks == entry["max_crooks_residual"])})
        if not jres <= tol:
            violations.append(f"{fam.name}: jarzynski residual {jres:.3e}")
        if not crooks <= atom_tol:
            violations.append(f"{fam.name}: crooks residual {crooks:.3e}")
    if not all(digests.values()):
        violations.append("table digest mismatch")
    return {"families": results, "digests_match": digests, "violations": violations,
            "status": "ok" if not violations else "violation"}


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------

_COLOURS = {"forward": "#1f77b4", "reverse": "#d62728"}


def emit_plot(measures: Mapping[str, DiscreteMeasure], path, title: str = "") -> Path:
    """Stem plot of atomic measures on one omega axis, as plain SVG text.

    ``measures`` maps a direction name (``forward``/``reverse``) to its
    measure.  Reverse stems point down so coinciding atoms stay visible.
    Nothing is written when every measure is empty.
    """
    atoms = [(name, v, w) for name, mu in measures.items() for v, w in mu.atoms()]
    if not atoms:
        raise IoError("nothing to plot: every measure is empty")
    width, height, pad = 640, 360, 40
    mid = height / 2
    values = [v for _, v, _ in atoms]
    lo, hi = min(values), max(values)
    span = hi - lo if hi > lo else 1.0
    lo, hi = (lo - 0.05 * span, hi + 0.05 * span) if hi > lo else (lo - 0.5, hi + 0.5)
    top = max(w for _, _, w in atoms) or 1.0

    def sx(v):
        return pad + (v - lo) / (hi - lo) * (width - 2 * pad)

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<title>{title}</title>',
             f'<line class="axis" x1="{pad}" y1="{mid}" x2="{width - pad}" y2="{mid}" '
             'stroke="black"/>']
    for name, v, w in atoms:
        sign = 1 if name != "reverse" else -1
        x = sx(v)
        y = mid - sign * (w / top) * (mid - pad)
        colour = _COLOURS.get(name, "#555555")
        lines.append(f'<line class="stem {name}" x1="{x:.6f}" y1="{mid}" x2="{x:.6f}" '
                     f'y2="{y:.6f}" stroke="{colour}" stroke-width="2">'
                     f'<title>omega={fmt(v)} weight={fmt(w)}</title></line>')
        lines.append(f'<circle class="head {name}" cx="{x:.6f}" cy="{y:.6f}" r="3" fill="{colour}"/>')
    lines.append(f'<text x="{pad}" y="{height - 10}" font-size="12">omega in [{lo:.4g}, {hi:.4g}]; '
                 'forward up, reverse down</text>')
    lines.append("</svg>")
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _error(exc: Exception) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return EXIT_INPUT


def _cmd_run(args) -> int:
    sf = parse_scenario_file(args.file)
    report = run_pipeline(sf, args.out, seed=args.seed, tol=args.tol, plot=args.plot)
    print(json.dumps({"status": "ok" if report.ok else "violation",
                      "violations": report.violations, "out": str(args.out)}))
    return report.exit_code


def _cmd_reverse(args) -> int:
    run = build_scenario(parse_scenario_file(args.file), args.seed)
    rc = run.reverse_channel
    payload = {
        "gamma": None if run.gamma is None else {
            fmt_label(x): _json_number(m) for x, m in zip(run.gamma.alphabet, run.gamma.mass)},
        "reverse_channel": {fmt_label(y): {fmt_label(x): _json_number(rc.table[i, j])
                                           for j, x in enumerate(rc.output_alphabet)
                                           if rc.table[i, j] != 0}
                            for i, y in enumerate(rc.input_alphabet)},
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_verify(args) -> int:
    result = verify_outputs(args.dir, args.tol)
    print(json.dumps(result, indent=2))
    return EXIT_OK if result["status"] == "ok" else EXIT_VIOLATION


def _run_one(task):
    file, out, seed, tol = task
    try:
        report = run_pipeline(parse_scenario_file(file), out, seed=seed, tol=tol)
        return str(file), report.exit_code, report.violations
    except (RetrodictionError, ValueError, ArithmeticError) as exc:
        return str(file), EXIT_INPUT, [f"{type(exc).__name__}: {exc}"]


def _cmd_batch(args) -> int:
    root = Path(args.dir)
    files = sorted(root.glob("*.json"))
    if not files:
        raise IoError(f"no scenario files in {root}")
    out_root = Path(args.out) if args.out else root / "out"
    tasks = [(f, out_root / f.stem, args.seed, args.tol) for f in files]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    print(json.dumps([{"file": f, "exit_code": c, "violations": v} for f, c, v in results],
                     indent=2))
    codes = {c for _, c, _ in results}
    return EXIT_INPUT if EXIT_INPUT in codes else (EXIT_VIOLATION if EXIT_VIOLATION in codes else EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrodiction",
                                     description="Bayesian reverse processes and fluctuation relations.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate one scenario file")
    run.add_argument("file")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--tol", type=float, default=DEFAULT_TOL)
    run.add_argument("--plot", action="store_true", help="also write SVG stem plots")
    run.set_defaults(handler=_cmd_run)

    rev = sub.add_parser("reverse", help="print the steady state and reverse channel")
    rev.add_argument("file")
    rev.add_argument("--seed", type=int)
    rev.set_defaults(handler=_cmd_reverse)

    ver = sub.add_parser("verify", help="recheck residuals from an output directory")
    ver.add_argument("dir")
    ver.add_argument("--tol", type=float)
    ver.set_defaults(handler=_cmd_verify)

    bat = sub.add_parser("batch", help="run every *.json in a directory")
    bat.add_argument("dir")
    bat.add_argument("--out")
    bat.add_argument("--seed", type=int)
    bat.add_argument("--tol", type=float, default=DEFAULT_TOL)
    bat.add_argument("--jobs", type=int, default=1)
    bat.set_defaults(handler=_cmd_batch)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (RetrodictionError, ValueError, ArithmeticError) as exc:
        return _error(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
