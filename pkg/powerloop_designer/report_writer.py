"""Design reports, trajectory CSVs and the metrics summary on disk.

Every file is a pure function of its inputs: no timestamps or host details,
so rerunning a configuration reproduces the files byte for byte.
"""

import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from loguru import logger

from .exceptions import DomainError
from .models import TRAJECTORY_COLUMNS, CaseReport, DesignReport, OutputSettings, Trajectory
from .pole_design import pair_to_damping

REPORT_FILENAME = "design_report.txt"
JSON_FILENAME = "design_report.json"
METRICS_FILENAME = "metrics.csv"
CSV_FORMAT = "%.9g"
METRICS_HEADER = ("case", "status", "overshoot_pct", "settling_s", "peak_s", "final_value")


def _num(value: float) -> str:
    return f"{value:.6f}"


def _complex(z: complex) -> str:
    return f"{z.real:.6f}{z.imag:+.6f}j"


def _matrix(rows: np.ndarray, indent: str = "    ") -> List[str]:
    return [indent + "[" + ", ".join(f"{v:12.6f}" for v in row) + "]" for row in np.atleast_2d(rows)]


def render_case(case: CaseReport) -> List[str]:
    """Text lines for one case, following the design steps in order."""
    lines = [f"== {case.name} ==", f"status: {case.status}"]
    if case.message:
        lines.append(f"message: {case.message}")

    if case.spec is not None:
        spec = case.spec
        lines.append(
            f"spec: xi={_num(spec.xi)} ts={_num(spec.ts)} a={_num(spec.a)} "
            f"(omega_n={_num(spec.omega_n)}, P.O.={spec.percent_overshoot:.2f}%, "
            f"separation {spec.separation_ratio:.2f}x)"
        )
    if case.operating_point is not None:
        op = case.operating_point
        lines.append(f"step 1  operating point: delta0={_num(op.delta0)} V0={_num(op.v0)}")
    if case.gains is not None:
        g = case.gains
        lines.append(
            f"step 2  gains: K_pdelta={_num(g.k_pdelta)} K_pV={_num(g.k_pv)} "
            f"K_qdelta={_num(g.k_qdelta)} K_qV={_num(g.k_qv)}"
        )
    if case.plant is not None:
        lines.append("step 3  A =")
        lines.extend(_matrix(case.plant.a))
        lines.append("        B =")
        lines.extend(_matrix(case.plant.b))
    if case.controllability is not None:
        c = case.controllability
        verdict = "controllable" if c.controllable else "NOT controllable"
        lines.append(f"step 4  controllability: rank {c.rank} ({verdict}), rank_tol {c.rank_tol:.1e}")
        lines.append("        singular values: " + ", ".join(f"{s:.6e}" for s in c.singular_values))
        lines.append("        P =")
        lines.extend(_matrix(c.p_matrix))
    if case.targets is not None:
        lines.append("step 5  targets: " + ", ".join(_complex(z) for z in case.targets.lambdas))
    if case.gain is not None:
        gain = case.gain
        lines.append("step 6  K =")
        lines.extend(_matrix(gain.k))
        lines.append("        achieved: " + ", ".join(_complex(z) for z in gain.achieved_eigs))
        lines.append(f"        max relative eigenvalue error: {gain.max_rel_error:.3e}")
        if gain.parameter_matrix is not None:
            lines.append(
                "        parameter matrix G: "
                + "; ".join(", ".join(f"{v:g}" for v in row) for row in gain.parameter_matrix)
                + f" (cond(X) = {gain.transform_condition:.3e})"
            )
        try:
            xi, omega_n = pair_to_damping(gain.achieved_eigs)
            lines.append(f"        dominant pair: xi={_num(xi)} omega_n={_num(omega_n)}")
        except DomainError:
            lines.append("        dominant pair: none (all eigenvalues real)")
    if case.published_gain_eigs is not None:
        lines.append(
            "published gain eigenvalues: "
            + ", ".join(_complex(complex(re, im)) for re, im in case.published_gain_eigs)
        )
    if case.metrics is not None:
        m = case.metrics
        lines.append(
            f"step response ({m.signal}): overshoot {m.overshoot:.3f}% settling {m.settling_time:.4f} "
            f"peak {m.peak_time:.4f} initial {_num(m.initial_value)} final {_num(m.final_value)}"
        )
    elif case.settled is False:
        lines.append(f"step response: NOT SETTLED ({case.metrics_message})")
    elif case.metrics_message:
        lines.append(f"step response: {case.metrics_message}")
    if case.trajectory_file is not None:
        lines.append(f"trajectory: {case.trajectory_file}")
    return lines


def render_report(report: DesignReport) -> str:
    """Deterministic plain-text design report."""
    failed = len(report.failed_cases)
    lines = [
        "Power-loop design report",
        f"Units: {report.units}",
        f"Cases: {len(report.cases)} ({len(report.cases) - failed} ok, {failed} not ok)",
        "",
    ]
    for case in report.cases:
        lines.extend(render_case(case))
        lines.append("")
    return "\n".join(lines)


def report_to_json(report: DesignReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def write_trajectory(trajectory: Trajectory, path: Path) -> Path:
    """Write a trajectory as CSV with header t,delta,omega,v,p,q,e1,e2."""
    np.savetxt(
        path,
        trajectory.to_matrix(),
        fmt=CSV_FORMAT,
        delimiter=",",
        header=",".join(TRAJECTORY_COLUMNS),
        comments="",
    )
    return path


def read_trajectory(path: Path) -> Trajectory:
    """Read back a trajectory CSV written by write_trajectory."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if tuple(header) != TRAJECTORY_COLUMNS:
        raise DomainError(f"{path}: unexpected CSV header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(**{name: data[:, i] for i, name in enumerate(TRAJECTORY_COLUMNS)})


def metrics_rows(cases: Iterable[CaseReport]) -> List[List[str]]:
    """Summary rows (case, status, overshoot %, settling s, peak s, final value).

    A response still outside its band at t_end has "not-settled" in the
    settling column.
    """
    rows = []
    for case in cases:
        m = case.metrics
        if m is None:
            settling = "not-settled" if case.settled is False else ""
            rows.append([case.name, case.status, "", settling, "", ""])
        else:
            rows.append([
                case.name,
                case.status,
                f"{m.overshoot:.6g}",
                f"{m.settling_time:.6g}",
                f"{m.peak_time:.6g}",
                f"{m.final_value:.9g}",
            ])
    return rows


class ReportWriter:
    """Writes the requested output formats into the output directory."""

    def __init__(self, settings: OutputSettings):
        """Initialize the writer.

        Args:
            settings: Output directory and formats
        """
        self.settings = settings
        self.directory = Path(settings.directory)

    def write(
        self,
        report: DesignReport,
        trajectories: Optional[Dict[str, Trajectory]] = None,
    ) -> List[Path]:
        """Write report, JSON and CSV files as configured.

        Trajectory CSVs and metrics.csv are only written when trajectories
        are given.

        Returns:
            Paths of the written files, in writing order

        Raises:
            OSError: If the directory cannot be created or a file written
        """
        self.directory.mkdir(parents=True, exist_ok=True)
        formats = set(self.settings.formats)
        written: List[Path] = []

        if "csv" in formats and trajectories:
            for case in report.cases:
                if case.name in trajectories:
                    path = write_trajectory(trajectories[case.name], self.directory / f"{case.name}.csv")
                    case.trajectory_file = path.name
                    written.append(path)
            written.append(self.write_metrics(report.cases))

        if "report" in formats:
            path = self.directory / REPORT_FILENAME
            path.write_text(render_report(report), encoding="utf-8")
            written.append(path)

        if "json" in formats:
            path = self.directory / JSON_FILENAME
            path.write_text(report_to_json(report), encoding="utf-8")
            written.append(path)

        for path in written:
            logger.debug(f"Wrote {path}")
        logger.info(f"Wrote {len(written)} files to {self.directory}")
        return written

    def write_metrics(self, cases: Sequence[CaseReport]) -> Path:
        path = self.directory / METRICS_FILENAME
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(METRICS_HEADER)
            writer.writerows(metrics_rows(cases))
        return path
