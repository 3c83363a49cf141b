"""Load-step driver: substepping, target-time clamping, halving contingency.

One load step advances the solution from its start time to its end time
through substeps of the configured increment.  Each substep target is
clamped so the final substep lands exactly on the end time.  When a substep
fails to converge the increment is halved and the substep retried; after k
consecutive failures the increment is exactly initial/2^k.  The increment
never regrows.  The total number of solution attempts is capped by
max_substeps, after which the load step reports failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class SteppingError(RuntimeError):
    """Configuration that cannot drive a well-defined substep sequence."""


@dataclass
class TimeData:
    start: float
    end: float
    current: float
    target: float
    increment: float


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int = 0
    outer_iterations: int = 0
    group_norms: dict = field(default_factory=dict)
    message: str = ""
    energies: list = field(default_factory=list)


@dataclass
class LoadStepConfig:
    index: int
    start_time: float
    end_time: float
    initial_increment: float
    max_substeps: int
    boundary_conditions: list = field(default_factory=list)
    field_conditions: list = field(default_factory=list)
    solution_methods: dict = field(default_factory=dict)   # stage -> method
    write_interval: int = 0
    preprocessing: list = field(default_factory=list)
    postprocessing: list = field(default_factory=list)

    def validate(self):
        if self.end_time <= self.start_time:
            raise SteppingError("load step %d: end time %g not after start %g"
                                % (self.index, self.end_time, self.start_time))
        if self.max_substeps < 1:
            raise SteppingError("load step %d: max_substeps must be >= 1"
                                % self.index)
        if self.initial_increment <= 0.0:
            raise SteppingError("load step %d: nonpositive time increment"
                                % self.index)


@dataclass
class LoadStepOutcome:
    converged: bool
    substeps: int
    attempts: int
    final_time: float
    reports: list


def run_load_step(model, config, log=None):
    """Drive one load step to its end time.

    The model provides the solution machinery:
      prepare_substep(time, config)   impose constraints at the target time
      solve_substep(time, config)     run every stage, return ConvergenceReport
      finalize_substep(time, config)  commit converged values and history
      rollback_substep()              restore the last committed state
    """
    config.validate()
    time = TimeData(start=config.start_time, end=config.end_time,
                    current=config.start_time, target=config.start_time,
                    increment=config.initial_increment)

    model.begin_load_step(config)
    for directive in config.preprocessing:
        model.run_directive(directive, time, config)

    reports = []
    substeps = 0
    attempts = 0
    increment = config.initial_increment
    while time.current < time.end:
        # clamp so the last substep lands on the end time bitwise
        target = time.current + increment
        if target > time.end:
            target = time.end
        time.target = target
        time.increment = target - time.current

        attempts += 1
        model.prepare_substep(time, config)
        report = model.solve_substep(time, config)
        reports.append(report)

        if report.converged:
            time.current = time.target
            substeps += 1
            model.finalize_substep(time, config)
            if log:
                log("substep %d converged at t=%.17g" % (substeps, time.current))
        else:
            model.rollback_substep()
            increment *= 0.5
            if log:
                log("substep failed at t=%.17g; increment halved to %.17g"
                    % (time.target, increment))

        if attempts >= config.max_substeps and time.current < time.end:
            for directive in config.postprocessing:
                model.run_directive(directive, time, config)
            model.end_load_step(config, converged=False)
            return LoadStepOutcome(False, substeps, attempts,
                                   time.current, reports)

    for directive in config.postprocessing:
        model.run_directive(directive, time, config)
    model.end_load_step(config, converged=True)
    return LoadStepOutcome(True, substeps, attempts, time.current, reports)
