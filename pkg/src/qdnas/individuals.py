"""Units of search: network genomes with measured metrics, prompt individuals.

Networks compete on test loss inside one archive; (prompt, temperature)
pairs compete on collective fitness inside the other. Curiosity is the
selection signal that decides which archived prompt gets reused.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .archive import CvtArchive, Descriptor, EmptyArchiveError, InsertOutcome

__all__ = [
    "BestLossTracker",
    "GenerationOutcome",
    "NetworkGenome",
    "NetworkIndividual",
    "NetworkMetrics",
    "PromptIndividual",
    "PromptStats",
    "SEED_NETWORK_SOURCE",
    "curiosity_delta",
    "most_curious",
    "network_descriptor",
    "outcome_from_insert",
    "prompt_descriptor",
    "seed_genome",
    "update_collective_fitness",
    "update_curiosity",
]

DW_RATIO_CAP = 200.0
FLOPS_CAP = 5.0e9
MUTATION_PROMPT_COUNT = 15
PROMPT_SLOT_COUNT = 16  # 15 mutation slots plus the reserved crossover slot

CURIOSITY_ADDED = 1.0
CURIOSITY_NOT_ADDED = -0.5
CURIOSITY_UNTRAINABLE = -1.0

ORIGINS = ("seed", "mutation", "crossover")

SEED_NETWORK_SOURCE = """\
import torch
import torch.nn as nn
import torch.nn.functional as F

class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 1, 1)
        self.fc1 = nn.Linear(1024, 10)

    def forward(self, x):
        x = F.relu(self.conv1(x))
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        return x
"""


@dataclass(frozen=True)
class NetworkGenome:
    """Program text defining one network class, plus its lineage."""

    source: str
    id: str
    parent_ids: tuple[str, ...] = ()
    origin: str = "seed"
    prompt_id: int | None = None

    def __post_init__(self) -> None:
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        expected_parents = {"seed": 0, "mutation": 1, "crossover": 2}[self.origin]
        if len(self.parent_ids) != expected_parents:
            raise ValueError(
                f"{self.origin} genome needs {expected_parents} parent ids, "
                f"got {len(self.parent_ids)}"
            )
        if self.origin == "mutation":
            if self.prompt_id is None or not 0 <= self.prompt_id < MUTATION_PROMPT_COUNT:
                raise ValueError("mutation genome needs a prompt_id in [0, 14]")


def seed_genome() -> NetworkGenome:
    return NetworkGenome(source=SEED_NETWORK_SOURCE, id="seed")


@dataclass(frozen=True)
class NetworkMetrics:
    """Evaluation result; untrainable networks carry an infinite loss."""

    trainable: bool
    loss: float
    flops: float
    depth: int
    width: int
    error: str | None = None

    def __post_init__(self) -> None:
        if self.trainable:
            if self.depth < 1 or self.width < 1:
                raise ValueError("trainable network needs depth and width >= 1")
            if not math.isfinite(self.loss):
                raise ValueError("trainable network needs a finite loss")
        if self.flops < 0 or self.depth < 0 or self.width < 0:
            raise ValueError("flops, depth and width must be >= 0")

    @classmethod
    def untrainable(cls, error: str) -> "NetworkMetrics":
        return cls(trainable=False, loss=math.inf, flops=0.0, depth=0, width=0, error=error)


@dataclass(frozen=True)
class NetworkIndividual:
    genome: NetworkGenome
    metrics: NetworkMetrics


def network_descriptor(metrics: NetworkMetrics) -> Descriptor:
    """Map a trainable network to (depth/width ratio, FLOPS), both normalized.

    Depth-to-width divides by 200 and FLOPS by 5e9 before clamping; networks
    past either cap land on the boundary of the unit square.
    """
    if not metrics.trainable:
        raise ValueError("untrainable networks have no descriptor")
    ratio = metrics.depth / metrics.width
    return Descriptor(ratio / DW_RATIO_CAP, metrics.flops / FLOPS_CAP)


@dataclass
class PromptIndividual:
    """A (prompt slot, sampling temperature) pair with its curiosity score."""

    prompt_id: int
    temperature: float
    curiosity: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.prompt_id < PROMPT_SLOT_COUNT:
            raise ValueError("prompt_id must be in [0, 15]")
        self.temperature = min(1.0, max(0.0, float(self.temperature)))


def prompt_descriptor(individual: PromptIndividual) -> Descriptor:
    return Descriptor(individual.prompt_id / PROMPT_SLOT_COUNT, individual.temperature)


class GenerationOutcome(Enum):
    ADDED = "added"
    NOT_ADDED = "not_added"
    UNTRAINABLE = "untrainable"


def outcome_from_insert(outcome: InsertOutcome) -> GenerationOutcome:
    if outcome.added:
        return GenerationOutcome.ADDED
    return GenerationOutcome.NOT_ADDED


def curiosity_delta(outcome: GenerationOutcome) -> float:
    if outcome is GenerationOutcome.ADDED:
        return CURIOSITY_ADDED
    if outcome is GenerationOutcome.NOT_ADDED:
        return CURIOSITY_NOT_ADDED
    return CURIOSITY_UNTRAINABLE


def update_curiosity(individual: PromptIndividual, outcome: GenerationOutcome) -> float:
    """Apply the outcome's delta in place and return the new curiosity."""
    individual.curiosity += curiosity_delta(outcome)
    return individual.curiosity


@dataclass
class PromptStats:
    """Per-prompt counters of networks that matched or beat the running best."""

    collective_fitness: dict[int, int] = field(default_factory=dict)

    def score(self, prompt_id: int) -> int:
        return self.collective_fitness.get(prompt_id, 0)


def update_collective_fitness(
    stats: PromptStats, prompt_id: int, loss: float, best_loss: float
) -> bool:
    """Credit the prompt iff the network's loss is <= the running best.

    The comparison is non-strict, so matching the best exactly still counts.
    """
    credited = loss <= best_loss
    if credited:
        stats.collective_fitness[prompt_id] = stats.score(prompt_id) + 1
    return credited


def most_curious(prompt_archive: CvtArchive) -> PromptIndividual:
    """Occupant with the highest curiosity; ties go to the lowest niche index."""
    best: PromptIndividual | None = None
    for cell in prompt_archive.filled():
        occupant = cell.occupant
        if best is None or occupant.curiosity > best.curiosity:
            best = occupant
    if best is None:
        raise EmptyArchiveError("prompt archive has no occupants")
    return best


@dataclass
class BestLossTracker:
    """Running minimum over every finite evaluated loss."""

    best_loss: float = math.inf

    def observe(self, loss: float) -> bool:
        improved = loss < self.best_loss
        if improved:
            self.best_loss = loss
        return improved
