"""Core orchestration of the step-by-step power-loop design procedure."""

import time
from typing import Dict, Optional, Tuple

from loguru import logger
from tqdm import tqdm

from .exceptions import NotSettledError, NumericalBlowupError, PowerLoopError, UncontrollableError
from .models import CaseReport, CaseSpec, DesignConfig, DesignReport, Trajectory
from .pole_design import closed_loop_eigs, place_poles, spec_to_targets
from .powerflow_model import linearize, solve_operating_point
from .simulator import simulate_nonlinear, step_metrics
from .statespace import build_state_space, controllability
from .verification import published_gain_for

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3
EXIT_USAGE = 64


class PowerLoopDesigner:
    """Runs the design pipeline, and optionally the step simulation, for every case."""

    def __init__(self, config: DesignConfig):
        """Initialize the designer with a validated configuration.

        Args:
            config: Design configuration
        """
        self.config = config
        self.params = config.system
        logger.debug(f"Configuration: {config}")

    def design_case(self, case: CaseSpec) -> CaseReport:
        """Run steps 1-6 of the design procedure for one case.

        Module errors never escape: they end the case with a status and the
        report keeps whatever the earlier steps produced.

        Args:
            case: Placement case

        Returns:
            CaseReport with status "ok", "uncontrollable" or "unsolvable"
        """
        report = CaseReport(name=case.name)
        try:
            report.spec = case.to_performance_spec()

            logger.info(f"[{case.name}] Step 1: solving the operating point...")
            report.operating_point = solve_operating_point(self.params)

            logger.info(f"[{case.name}] Step 2: linearizing the power equations...")
            report.gains = linearize(self.params, report.operating_point)

            logger.info(f"[{case.name}] Step 3: assembling A and B...")
            report.plant = build_state_space(self.params, report.gains)

            logger.info(f"[{case.name}] Step 4: checking controllability...")
            report.controllability = controllability(report.plant, self.config.rank_tol)
            published = published_gain_for(report.spec)
            if published is not None:
                report.published_gain_eigs = [
                    (float(z.real), float(z.imag)) for z in closed_loop_eigs(report.plant, published)
                ]

            logger.info(f"[{case.name}] Step 5: choosing eigenvalues...")
            report.targets = spec_to_targets(report.spec)

            logger.info(f"[{case.name}] Step 6: solving for K...")
            report.gain = place_poles(
                report.plant,
                report.targets,
                parameter_matrix=case.parameter_matrix,
                rank_tol=self.config.rank_tol,
                report=report.controllability,
            )
        except UncontrollableError as e:
            report.status, report.message = "uncontrollable", str(e)
        except PowerLoopError as e:
            report.status, report.message = "unsolvable", f"{type(e).__name__}: {e}"

        if report.succeeded:
            logger.info(f"[{case.name}] Designed K with eigenvalue error {report.gain.max_rel_error:.2e}")
        else:
            logger.warning(f"[{case.name}] {report.status}: {report.message}")
        return report

    def design(self) -> DesignReport:
        """Design every configured case in order."""
        start_time = time.time()
        logger.info(f"Designing {len(self.config.cases)} cases")

        cases = [
            self.design_case(case)
            for case in tqdm(self.config.cases, desc="Designing", unit="case", disable=len(self.config.cases) < 2)
        ]
        logger.info(f"Design finished in {time.time() - start_time:.2f}s")
        return DesignReport(cases=cases)

    def simulate_case(self, report: CaseReport) -> Optional[Trajectory]:
        """Simulate a designed case and attach its step metrics.

        A numerical blowup marks the case "failed". A signal still outside its
        band at t_end sets ``settled`` to False and leaves the metrics empty.
        """
        if not report.succeeded:
            return None

        sim = self.config.sim
        try:
            trajectory = simulate_nonlinear(self.params, report.gain, sim.events, sim.to_sim_config())
        except NumericalBlowupError as e:
            report.status, report.message = "failed", f"NumericalBlowupError: {e}"
            logger.error(f"[{report.name}] simulation diverged at t={e.time:.4f}s")
            return None

        if sim.events:
            event_time = min(event.time for event in sim.events)
            try:
                report.metrics = step_metrics(trajectory, sim.metric_signal, event_time, sim.band)
                report.settled = True
            except NotSettledError as e:
                report.settled, report.metrics_message = False, str(e)
                logger.warning(f"[{report.name}] not settled: {e}")
            except PowerLoopError as e:
                report.metrics_message = f"no step metrics: {e}"
                logger.warning(f"[{report.name}] {report.metrics_message}")
        return trajectory

    def run(self, simulate: bool = False) -> Tuple[DesignReport, Dict[str, Trajectory]]:
        """Design all cases and, when requested, simulate the designed ones.

        Returns:
            The report and the trajectories of the cases that simulated
        """
        report = self.design()
        trajectories: Dict[str, Trajectory] = {}
        if simulate:
            logger.info(f"Simulating {sum(c.succeeded for c in report.cases)} designed cases")
            for case in tqdm(report.cases, desc="Simulating", unit="case", disable=len(report.cases) < 2):
                trajectory = self.simulate_case(case)
                if trajectory is not None:
                    trajectories[case.name] = trajectory
        return report, trajectories


def exit_code(report: DesignReport) -> int:
    """EXIT_OK when every case succeeded, EXIT_INFEASIBLE otherwise."""
    return EXIT_OK if report.all_succeeded else EXIT_INFEASIBLE
