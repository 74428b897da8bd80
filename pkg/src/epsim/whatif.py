"""Scenario transforms and closed-form speedup/savings bounds.

Scenarios rescale the ensemble, divide category wall-clocks and multiply
category energy terms; speedups and energy factors are independent knobs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .energy import job_energy, suite_total
from .errors import DegeneratePath, InvalidScenario, SchemaError
from .model import EnsembleConfig, JobCategory, MemberPath, SuiteModel


@dataclass(frozen=True)
class Scenario:
    """A what-if transform; the default instance is the identity."""

    n_prime: int | None = None
    N_prime: int | None = None
    speedup: dict[JobCategory, float] = field(default_factory=dict)
    energy_factor: dict[JobCategory, float] = field(default_factory=dict)
    io_scale: float = 1.0
    compute_scale: float = 1.0

    def check(self) -> None:
        for cat, s in self.speedup.items():
            if s < 1:
                raise InvalidScenario(f"speedup divisor for {cat.value} must be >= 1, got {s}")
        for cat, f in self.energy_factor.items():
            if f < 0:
                raise InvalidScenario(f"energy factor for {cat.value} must be >= 0, got {f}")
        if self.io_scale < 0 or self.compute_scale < 0:
            raise InvalidScenario("io_scale and compute_scale must be >= 0")
        if (self.n_prime is None) != (self.N_prime is None):
            raise InvalidScenario("n_prime and N_prime must be given together")
        if self.n_prime is not None and not (1 <= self.n_prime <= self.N_prime):
            raise InvalidScenario(
                f"need 1 <= n_prime <= N_prime, got ({self.n_prime}, {self.N_prime})"
            )


def apply_scenario(model: SuiteModel, scenario: Scenario) -> SuiteModel:
    """New model with rescaled wall-clocks, energies and ensemble; input untouched."""
    scenario.check()
    jobs = []
    for job in model.jobs:
        divisor = scenario.speedup.get(job.category, 1.0)
        factor = scenario.energy_factor.get(job.category, 1.0)
        jobs.append(
            replace(
                job,
                wallclock_ctrl_s=job.wallclock_ctrl_s / divisor,
                wallclock_pert_s=job.wallclock_pert_s / divisor,
                energy=job.energy.scaled(factor),
            )
        )
    ensemble = model.ensemble
    if scenario.n_prime is not None:
        ensemble = EnsembleConfig(scenario.n_prime, scenario.N_prime)
    return replace(model, jobs=tuple(jobs), ensemble=ensemble)


def max_speedup(model: SuiteModel, category: JobCategory, path: MemberPath) -> float:
    """Limit of T / (T − T_category) on the selected serial member path.

    Returns 1.0 when the category is absent from the path and infinity when it
    is the whole path; raises DegeneratePath when the path itself is empty.
    """
    total = 0.0
    cat_part = 0.0
    for job in model.jobs:
        if not job.runs_on(path):
            continue
        w = job.wallclock_for(path)
        total += w
        if job.category is category:
            cat_part += w
    if total == 0:
        raise DegeneratePath(f"the {path.value} member path has zero wall-clock")
    if cat_part == total:
        return math.inf
    return total / (total - cat_part)


def energy_savings(
    model: SuiteModel,
    cfg: EnsembleConfig,
    category: JobCategory,
    factor: float,
) -> tuple[float, float]:
    """(kJ saved, fraction of the suite total) for scaling one category's energy."""
    if not 0 <= factor <= 1:
        raise InvalidScenario(f"savings factor must be in [0, 1], got {factor}")
    cat_energy = sum(
        job_energy(j.energy, cfg) for j in model.jobs if j.category is category
    )
    total = suite_total(model, cfg)
    saved = (1.0 - factor) * cat_energy
    return saved, (saved / total if total else 0.0)


def compose(first: Scenario, second: Scenario) -> Scenario:
    """Pointwise product; the ensemble target of the later scenario wins."""
    speedup = dict(first.speedup)
    for cat, s in second.speedup.items():
        speedup[cat] = speedup.get(cat, 1.0) * s
    factor = dict(first.energy_factor)
    for cat, f in second.energy_factor.items():
        factor[cat] = factor.get(cat, 1.0) * f
    return Scenario(
        n_prime=second.n_prime if second.n_prime is not None else first.n_prime,
        N_prime=second.N_prime if second.N_prime is not None else first.N_prime,
        speedup=speedup,
        energy_factor=factor,
        io_scale=first.io_scale * second.io_scale,
        compute_scale=first.compute_scale * second.compute_scale,
    )


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise SchemaError("scenario must be a JSON object")

    def cat_map(key: str) -> dict[JobCategory, float]:
        out = {}
        for name, value in raw.get(key, {}).items():
            try:
                cat = JobCategory(name)
            except ValueError:
                raise SchemaError(f"scenario.{key}: unknown category {name!r}") from None
            out[cat] = float(value)
        return out

    n_prime = raw.get("n_prime")
    N_prime = raw.get("N_prime")
    scenario = Scenario(
        n_prime=None if n_prime is None else int(n_prime),
        N_prime=None if N_prime is None else int(N_prime),
        speedup=cat_map("speedup"),
        energy_factor=cat_map("energy_factor"),
        io_scale=float(raw.get("io_scale", 1.0)),
        compute_scale=float(raw.get("compute_scale", 1.0)),
    )
    scenario.check()
    return scenario


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "n_prime": s.n_prime,
        "N_prime": s.N_prime,
        "speedup": {c.value: v for c, v in s.speedup.items()},
        "energy_factor": {c.value: v for c, v in s.energy_factor.items()},
        "io_scale": s.io_scale,
        "compute_scale": s.compute_scale,
    }


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    return scenario_from_dict(raw)
