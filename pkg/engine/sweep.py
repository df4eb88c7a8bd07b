#!/usr/bin/env python3
"""
SplitFlow Efficiency Sweep
Max energy variation versus tau/s for a set of methods and step sizes
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import structlog

from dynamics.flows import PhaseState
from dynamics.models import SplitSystem
from engine.integrator import IntegrationPlan, PlanError, integrate
from methods.coefficients import SplittingMethod
from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Sweep')

DEFAULT_NITER = 100000
DEFAULT_SAMPLES = 1000

SWEEP_COLUMNS = ["method", "tau", "tau_over_s", "stages", "niter", "max_dE_rel", "final_t"]
EXTRA_COLUMNS = ["status", "mean_dE_rel"]


def default_tau_grid(count: int = 15) -> List[float]:
    """tau_i = 1 / 2^i, i = 1..count"""
    return [1.0 / 2 ** i for i in range(1, count + 1)]


@dataclass
class SweepRow:
    """One (method, tau) run"""
    method: str
    tau: float
    tau_over_s: float
    stages: int
    niter: int
    max_dE_rel: float
    final_t: float
    mean_dE_rel: float = 0.0
    status: str = "ok"

    def as_list(self, with_status: bool = True) -> List[str]:
        values = [self.method, repr(float(self.tau)), repr(float(self.tau_over_s)),
                  str(self.stages), str(self.niter), repr(float(self.max_dE_rel)),
                  repr(float(self.final_t))]
        if with_status:
            values += [self.status, repr(float(self.mean_dE_rel))]
        return values


def _run_single(method: SplittingMethod, system: SplitSystem, tau: float, n_steps: int,
                samples: int, compensated: bool, allow_degraded: bool,
                initial_state: Optional[PhaseState]) -> SweepRow:
    sample_every = max(1, n_steps // samples) if samples else max(1, n_steps)
    try:
        plan = IntegrationPlan(method=method, system=system, tau=tau, n_steps=n_steps,
                               sample_every=sample_every, compensated=compensated,
                               allow_degraded=allow_degraded, initial_state=initial_state)
        record = integrate(plan)
    except SplitFlowError as e:
        logger.warning("sweep run rejected", method=method.id, tau=tau, error=str(e))
        return SweepRow(method.id, tau, abs(tau) / method.stages, method.stages, n_steps,
                        float('nan'), 0.0, float('nan'), status=f"error: {e}")

    status = "ok" if not record.failed else f"failed: {record.error}"
    return SweepRow(method=method.id, tau=tau, tau_over_s=record.tau_over_s,
                    stages=method.stages, niter=record.steps_done,
                    max_dE_rel=record.max_energy_deviation, final_t=record.final_time,
                    mean_dE_rel=record.mean_energy_deviation, status=status)


def efficiency_sweep(methods: Sequence[SplittingMethod], system: SplitSystem,
                     tau_list: Sequence[float], horizon: Optional[float] = None,
                     niter: int = DEFAULT_NITER, jobs: int = 1, compensated: bool = False,
                     allow_degraded: bool = False, samples: int = DEFAULT_SAMPLES,
                     initial_state: Optional[PhaseState] = None) -> List[SweepRow]:
    """Integrate every (method, tau) pair; failures are recorded, not raised

    Each run takes niter steps, or horizon/|tau| steps when horizon is given.
    Rows come back in plan order regardless of completion order.
    """
    if not methods:
        raise PlanError("No methods to sweep")
    if not tau_list:
        raise PlanError("No step sizes to sweep")

    jobs_list = []
    for method in methods:
        for tau in tau_list:
            n_steps = int(round(horizon / abs(tau))) if horizon else niter
            jobs_list.append((method, tau, n_steps))

    logger.info("sweep started", methods=[m.id for m in methods], runs=len(jobs_list), jobs=jobs)

    results: Dict[int, SweepRow] = {}
    if jobs <= 1:
        for index, (method, tau, n_steps) in enumerate(jobs_list):
            results[index] = _run_single(method, system, tau, n_steps, samples, compensated,
                                         allow_degraded, initial_state)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            futures = {
                executor.submit(_run_single, method, system, tau, n_steps, samples, compensated,
                                allow_degraded, initial_state): index
                for index, (method, tau, n_steps) in enumerate(jobs_list)
            }
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    rows = [results[index] for index in range(len(jobs_list))]
    failures = sum(1 for row in rows if row.status != "ok")
    logger.info("sweep finished", runs=len(rows), failures=failures)
    return rows


def sweep_to_csv(rows: Sequence[SweepRow], with_status: bool = True) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(SWEEP_COLUMNS + (EXTRA_COLUMNS if with_status else []))
    for row in rows:
        writer.writerow(row.as_list(with_status))
    return buffer.getvalue()


def format_plot_data(rows: Sequence[SweepRow]) -> str:
    """Whitespace-separated `method tau_over_s max_dE_rel mean_dE_rel` sorted by tau/s per method"""
    lines = ["# method tau_over_s max_dE_rel mean_dE_rel"]
    order = []
    for row in rows:
        if row.method not in order:
            order.append(row.method)

    for method_id in order:
        method_rows = sorted((row for row in rows if row.method == method_id and row.status == "ok"),
                             key=lambda row: row.tau_over_s)
        for row in method_rows:
            lines.append(f"{method_id} {row.tau_over_s!r} {row.max_dE_rel!r} {row.mean_dE_rel!r}")
        lines.append("")
    return "\n".join(lines)
