#!/usr/bin/env python3
"""
SplitFlow Integrator
Splitting-step composition, FSAL concatenation and the sampled integration loop
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import mpmath
import numpy as np
import structlog

from dynamics.flows import PhaseState
from dynamics.models import SplitSystem
from methods.coefficients import (MethodKind, SplittingMethod, exact_sequences,
                                  working_sequences)
from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Engine')

REFERENCE_METHOD = "ABA1064"
REFERENCE_SUBSTEPS = 100


class PlanError(SplitFlowError):
    """Raised for invalid integration plans"""
    pass


class CompatibilityError(PlanError):
    """Method kind does not fit the system's B-flow"""
    pass


class StageError(SplitFlowError):
    """An elementary flow failed inside a step"""

    def __init__(self, message: str, stage: int, part: str):
        super().__init__(message)
        self.stage = stage
        self.part = part


def check_compatibility(method: SplittingMethod, system: SplitSystem,
                        allow_degraded: bool = False):
    """ABA on an approximate B-flow degrades to (r,4,2); refuse unless asked"""
    if system.approximate_symmetric2 and method.kind != MethodKind.ABAH and not allow_degraded:
        raise CompatibilityError(
            f"{method.id} assumes an exact B-flow but {system.name} approximates it; "
            f"pass allow_degraded to accept the reduced order")
    if system.approximate_symmetric2 and method.kind != MethodKind.ABAH:
        logger.warning("exact-flow method on approximate B-flow", method=method.id,
                       system=system.name)


def _sequences(method: SplittingMethod, dps: Optional[int]):
    if dps is None:
        return working_sequences(method)
    return exact_sequences(method, dps)


def _apply(flow, state: PhaseState, h, stage: int, part: str) -> PhaseState:
    if h == 0:
        return state
    try:
        return flow(state, h)
    except StageError:
        raise
    except SplitFlowError as e:
        raise StageError(f"{part}-flow failed at stage {stage}: {e}", stage, part) from e


def _compose(system: SplitSystem, state: PhaseState, a: list, b: list, tau) -> PhaseState:
    """a1 first, then b1, a2, ..., b_s, a_{s+1}"""
    state = _apply(system.flow_a, state, a[0] * tau, 0, "A")
    for i, bi in enumerate(b):
        state = _apply(system.flow_b, state, bi * tau, i + 1, "B")
        state = _apply(system.flow_a, state, a[i + 1] * tau, i + 1, "A")
    return state


def step(method: SplittingMethod, system: SplitSystem, state: PhaseState, tau,
         dps: Optional[int] = None, allow_degraded: bool = False) -> PhaseState:
    """One step of the palindromic composition

    With dps given the coefficients are taken at that precision and the
    state may carry mpmath entries.
    """
    check_compatibility(method, system, allow_degraded)
    if dps is None:
        a, b = _sequences(method, None)
        return _compose(system, state, a, b, tau).advance(dt=tau)

    with mpmath.workdps(dps):
        a, b = _sequences(method, dps)
        tau = mpmath.mpf(tau)
        return _compose(system, state, a, b, tau).advance(dt=tau)


def local_error(method: SplittingMethod, system: SplitSystem, state: PhaseState, tau,
                dps: Optional[int] = None, reference: Optional[SplittingMethod] = None,
                substeps: int = REFERENCE_SUBSTEPS, allow_degraded: bool = False):
    """Max-norm distance between one step and substeps reference steps of tau/substeps

    The reference defaults to ABA1064. On an approximate B-flow both methods
    need allow_degraded unless they are ABAH.
    """
    if reference is None:
        from methods.registry import registry_lookup

        reference = registry_lookup(REFERENCE_METHOD)

    with mpmath.workdps(dps or mpmath.mp.dps):
        result = step(method, system, state, tau, dps=dps, allow_degraded=allow_degraded)
        exact = state
        sub = tau / substeps if dps is None else mpmath.mpf(tau) / substeps
        for _ in range(substeps):
            exact = step(reference, system, exact, sub, dps=dps, allow_degraded=allow_degraded)
        difference = np.concatenate([(result.q - exact.q).ravel(), (result.p - exact.p).ravel()])
        return max(abs(x) for x in difference)


@dataclass(frozen=True)
class IntegrationPlan:
    """Everything needed for one deterministic run"""
    method: SplittingMethod
    system: SplitSystem
    tau: float
    n_steps: int
    sample_every: int = 1
    compensated: bool = False
    fsal: bool = True
    allow_degraded: bool = False
    initial_state: Optional[PhaseState] = None

    def __post_init__(self):
        if not self.tau or not np.isfinite(self.tau):
            raise PlanError("Step size must be finite and nonzero")
        if self.sample_every < 1:
            raise PlanError("sample_every must be >= 1")
        if self.n_steps < 0:
            raise PlanError("n_steps must be >= 0")
        check_compatibility(self.method, self.system, self.allow_degraded)

    @property
    def tau_over_s(self) -> float:
        return abs(self.tau) / self.method.stages


@dataclass
class TrajectoryRecord:
    """Sampled output of one integration"""
    method_id: str
    tau: float
    stages: int
    initial_state: PhaseState
    initial_energy: float
    times: List[float] = field(default_factory=list)
    states: List[PhaseState] = field(default_factory=list)
    energy_deviation: List[float] = field(default_factory=list)
    a_evaluations: int = 0
    b_evaluations: int = 0
    steps_done: int = 0
    final_state: Optional[PhaseState] = None
    failed: bool = False
    error: str = ""

    @property
    def tau_over_s(self) -> float:
        return abs(self.tau) / self.stages

    @property
    def stage_evaluations(self) -> int:
        """Merged A-flow evaluations, the cost proxy"""
        return self.a_evaluations

    @property
    def max_energy_deviation(self) -> float:
        return max(self.energy_deviation) if self.energy_deviation else 0.0

    @property
    def mean_energy_deviation(self) -> float:
        return float(np.mean(self.energy_deviation)) if self.energy_deviation else 0.0

    @property
    def final_time(self) -> float:
        return self.steps_done * self.tau


def integrate(plan: IntegrationPlan) -> TrajectoryRecord:
    """Run plan.n_steps steps, sampling every plan.sample_every steps"""
    method, system, tau = plan.method, plan.system, plan.tau
    a, b = working_sequences(method)
    s = len(b)

    state = plan.initial_state if plan.initial_state is not None else system.initial_state()
    if plan.compensated:
        state = state.with_compensation()

    h0 = float(system.energy(state))
    if h0 == 0:
        raise PlanError("Relative energy error undefined for H(0) = 0")

    record = TrajectoryRecord(method_id=method.id, tau=tau, stages=method.stages,
                              initial_state=state, initial_energy=h0)

    def flow_a(current, coefficient, stage):
        if coefficient == 0:
            return current
        record.a_evaluations += 1
        return _apply(system.flow_a, current, coefficient * tau, stage, "A")

    def flow_b(current, coefficient, stage):
        record.b_evaluations += 1
        return _apply(system.flow_b, current, coefficient * tau, stage, "B")

    logger.info("integration started", method=method.id, system=system.name, tau=tau,
                steps=plan.n_steps, compensated=plan.compensated)

    pending = a[0]
    try:
        for n in range(1, plan.n_steps + 1):
            state = flow_a(state, pending, 0)
            for i in range(s - 1):
                state = flow_b(state, b[i], i + 1)
                state = flow_a(state, a[i + 1], i + 1)
            state = flow_b(state, b[s - 1], s)

            sample_now = n % plan.sample_every == 0
            if plan.fsal and not sample_now and n < plan.n_steps:
                pending = a[s] + a[0]
            else:
                state = flow_a(state, a[s], s)
                pending = a[0]

            state = state.advance(dt=tau)
            record.steps_done = n

            if sample_now:
                record.times.append(n * tau)
                record.states.append(state)
                record.energy_deviation.append(abs(float(system.energy(state)) - h0) / abs(h0))
    except StageError as e:
        record.failed = True
        record.error = str(e)
        logger.error("integration aborted", method=method.id, step=record.steps_done + 1,
                     stage=e.stage, error=str(e))

    record.final_state = state
    logger.info("integration finished", method=method.id, steps=record.steps_done,
                max_dE_rel=record.max_energy_deviation, a_evaluations=record.a_evaluations)
    return record


def trajectory_to_csv(record: TrajectoryRecord, include_states: bool = False,
                      extra_columns: Optional[Dict[str, Sequence[float]]] = None) -> str:
    """`t,deltaE_rel[,q...,p...][,extra...]` rows for every sample"""
    extra_columns = extra_columns or {}
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')

    header = ["t", "deltaE_rel"]
    if include_states:
        dim = record.initial_state.q.size
        header += [f"q{i + 1}" for i in range(dim)] + [f"p{i + 1}" for i in range(dim)]
    header += list(extra_columns)
    writer.writerow(header)

    for k, (t, state, deviation) in enumerate(zip(record.times, record.states, record.energy_deviation)):
        row = [repr(float(t)), repr(float(deviation))]
        if include_states:
            row += [repr(float(x)) for x in state.q.ravel()]
            row += [repr(float(x)) for x in state.p.ravel()]
        row += [repr(float(values[k])) for values in extra_columns.values()]
        writer.writerow(row)

    return buffer.getvalue()
