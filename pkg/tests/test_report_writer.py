from pathlib import Path
import json
import sys
from typing import Dict, List, Tuple

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from powerloop_designer.core import PowerLoopDesigner
from powerloop_designer.exceptions import DomainError
from powerloop_designer.models import (
    TRAJECTORY_COLUMNS,
    CaseReport,
    DesignConfig,
    DesignReport,
    OutputFormat,
    OutputSettings,
    SetpointEvent,
    SimSettings,
    SystemParams,
    Trajectory,
)
from powerloop_designer.report_writer import (
    JSON_FILENAME,
    METRICS_FILENAME,
    METRICS_HEADER,
    REPORT_FILENAME,
    ReportWriter,
    metrics_rows,
    read_trajectory,
    render_report,
    write_trajectory,
)
from powerloop_designer.verification import REFERENCE_CASES


def make_run(simulate: bool = True, system: SystemParams = SystemParams()) -> Tuple[DesignReport, Dict[str, Trajectory]]:
    config = DesignConfig(
        system=system,
        cases=list(REFERENCE_CASES[:2]),
        sim=SimSettings(
            t_end=5.0,
            dt=2e-3,
            record_every=5,
            events=[SetpointEvent(time=0.5, target="p_set", value=1.0)],
        ),
    )
    return PowerLoopDesigner(config).run(simulate=simulate)


def make_writer(directory: Path, formats: List[OutputFormat]) -> ReportWriter:
    return ReportWriter(OutputSettings(directory=directory, formats=formats))


def test_report_text_is_deterministic() -> None:
    first, _ = make_run(simulate=False)
    second, _ = make_run(simulate=False)
    assert render_report(first) == render_report(second)


def test_report_walks_through_the_design_steps() -> None:
    report, _ = make_run()
    text = render_report(report)

    assert text.startswith("Power-loop design report\nUnits: ")
    assert "Cases: 2 (2 ok, 0 not ok)" in text
    for marker in ("step 1  operating point", "step 2  gains", "step 3  A =", "step 4  controllability",
                   "step 5  targets", "step 6  K =", "published gain eigenvalues", "step response (p)"):
        assert text.count(marker) == 2
    assert "rank 3 (controllable)" in text
    assert "dominant pair: xi=0.400000 omega_n=10.000000" in text


def test_report_of_uncontrollable_case_has_no_gain() -> None:
    report, _ = make_run(simulate=False, system=SystemParams(d_p=0.0))
    text = render_report(report)
    assert "status: uncontrollable" in text
    assert "NOT controllable" in text
    assert "step 6" not in text
    assert "Cases: 2 (0 ok, 2 not ok)" in text


def test_writer_creates_every_requested_file(tmp_path: Path) -> None:
    report, trajectories = make_run()
    directory = tmp_path / "nested" / "output"
    written = make_writer(directory, ["report", "json", "csv"]).write(report, trajectories)

    names = sorted(path.name for path in written)
    assert names == sorted(["case1.csv", "case2.csv", METRICS_FILENAME, REPORT_FILENAME, JSON_FILENAME])
    assert all(path.parent == directory for path in written)
    assert [case.trajectory_file for case in report.cases] == ["case1.csv", "case2.csv"]
    assert "trajectory: case1.csv" in (directory / REPORT_FILENAME).read_text(encoding="utf-8")


def test_design_only_run_writes_no_csv(tmp_path: Path) -> None:
    report, trajectories = make_run(simulate=False)
    written = make_writer(tmp_path, ["report", "csv"]).write(report, trajectories)
    assert [path.name for path in written] == [REPORT_FILENAME]


def test_trajectory_csv_round_trips_to_nine_digits(tmp_path: Path) -> None:
    _, trajectories = make_run()
    original = trajectories["case1"]
    path = write_trajectory(original, tmp_path / "case1.csv")

    assert path.read_text(encoding="utf-8").splitlines()[0] == "t,delta,omega,v,p,q,e1,e2"
    restored = read_trajectory(path)
    assert len(restored) == len(original)
    np.testing.assert_allclose(restored.to_matrix(), original.to_matrix(), rtol=1e-8, atol=1e-15)


def test_foreign_csv_is_rejected(tmp_path: Path) -> None:
    path = tmp_path / "other.csv"
    path.write_text("time,value\n0,1\n", encoding="utf-8")
    with pytest.raises(DomainError):
        read_trajectory(path)


def test_metrics_summary(tmp_path: Path) -> None:
    report, trajectories = make_run()
    make_writer(tmp_path, ["csv"]).write(report, trajectories)

    lines = (tmp_path / METRICS_FILENAME).read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert [line.split(",")[0] for line in lines[1:]] == ["case1", "case2"]
    overshoot = float(lines[1].split(",")[2])
    assert overshoot == pytest.approx(report.cases[0].metrics.overshoot, rel=1e-5)


def test_json_report_carries_the_numbers(tmp_path: Path) -> None:
    report, _ = make_run(simulate=False)
    make_writer(tmp_path, ["json"]).write(report)

    document = json.loads((tmp_path / JSON_FILENAME).read_text(encoding="utf-8"))
    first = document["cases"][0]
    assert first["status"] == "ok"
    assert np.array(first["gain"]["k"]).shape == (2, 3)
    assert np.array(first["gain"]["achieved_eigs"]).shape == (3, 2)
    assert first["controllability"]["rank"] == 3
    assert first["operating_point"]["delta0"] == pytest.approx(0.0435, abs=5e-4)


def test_unsettled_case_is_reported(tmp_path: Path) -> None:
    case = CaseReport(name="slow", settled=False, metrics_message="signal 'p' is still outside the 2% band at t=8s")
    report = DesignReport(cases=[case])

    assert "step response: NOT SETTLED (signal 'p' is still outside" in render_report(report)
    assert metrics_rows(report.cases) == [["slow", "ok", "", "not-settled", "", ""]]

    trajectory = Trajectory(**{column: np.zeros(1) for column in TRAJECTORY_COLUMNS})
    make_writer(tmp_path, ["csv"]).write(report, {"slow": trajectory})
    assert (tmp_path / METRICS_FILENAME).read_text(encoding="utf-8").splitlines()[1] == "slow,ok,,not-settled,,"
