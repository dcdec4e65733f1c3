"""Variation operators: prompt assembly, temperature moves, genome extraction.

The catalog's instruction strings are the fixed vocabulary of edits; a
mutation prompt shows the model one parent network, a crossover prompt shows
two renamed parents. Completions are mined for the first complete network
class definition.
"""
from __future__ import annotations

import ast
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .individuals import (
    MUTATION_PROMPT_COUNT,
    NetworkGenome,
    PromptIndividual,
    most_curious,
)

__all__ = [
    "CROSSOVER_PROMPT_ID",
    "ExtractionFailed",
    "GenerationRequest",
    "IMPORT_PREAMBLE",
    "PromptCatalog",
    "SlotPromptSelector",
    "SlotSelection",
    "build_crossover_prompt",
    "build_mutation_prompt",
    "extract_genome",
    "mutate_temperature_feedback",
    "perturb_temperature_uniform",
]

IMPORT_PREAMBLE = "import torch\nimport torch.nn as nn\nimport torch.nn.functional as F"

CROSSOVER_PROMPT_ID = 15

TEMPERATURE_FEEDBACK_STEP = 0.05
TEMPERATURE_PERTURBATION = 0.1
DEFAULT_MAX_TOKENS = 768

_MUTATION_PROMPTS = (
    "Add a layer to improve the above network",
    "Delete a layer to improve the above network",
    "Improve the above network",
    "Network:",
    "Network in pytorch:",
    "Improve the above network by reducing the size drastically",
    "Improve the above network by increasing the size drastically",
    "Add fully connected layer to improve the above network",
    "Add convolutional layer to improve the above network",
    "Add pooling layer to improve the above network",
    "Add residual connection to improve the above network",
    "Add multiple residual connections to improve the above network",
    "Add dropout layer to improve the above network",
    "Add normalization layer to improve the above network",
    "Add recurrent layer to improve the above network",
)

_CROSSOVER_PROMPT = (
    "Combine the above two neural networks and create a third neural network "
    "class that also inherits from nn.Module and performs better than the "
    "above two neural networks"
)


class ExtractionFailed(Exception):
    """No complete network class definition found in a completion."""


@dataclass(frozen=True)
class PromptCatalog:
    mutation_prompts: tuple[str, ...]
    crossover_prompt: str

    def __post_init__(self) -> None:
        if len(self.mutation_prompts) != MUTATION_PROMPT_COUNT:
            raise ValueError(f"need exactly {MUTATION_PROMPT_COUNT} mutation prompts")
        if any(not p for p in self.mutation_prompts) or not self.crossover_prompt:
            raise ValueError("prompt strings must be non-empty")

    @classmethod
    def default(cls) -> "PromptCatalog":
        return cls(mutation_prompts=_MUTATION_PROMPTS, crossover_prompt=_CROSSOVER_PROMPT)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "PromptCatalog":
        """Load an ordered array of 16 strings; the last one is the crossover prompt."""
        data = json.loads(Path(path).read_text())
        if not isinstance(data, list) or len(data) != MUTATION_PROMPT_COUNT + 1:
            raise ValueError("prompt catalog must be a JSON array of 16 strings")
        if not all(isinstance(s, str) for s in data):
            raise ValueError("prompt catalog entries must be strings")
        return cls(mutation_prompts=tuple(data[:-1]), crossover_prompt=data[-1])


@dataclass(frozen=True)
class GenerationRequest:
    prompt_text: str
    temperature: float
    max_tokens: int = DEFAULT_MAX_TOKENS


def _strip_preamble(source: str) -> str:
    """Drop leading import and blank lines so a source can be re-embedded."""
    lines = source.splitlines()
    start = 0
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped == "" or stripped.startswith(("import ", "from ")):
            start = i + 1
            continue
        break
    return "\n".join(lines[start:])


def _class_name(source: str) -> str:
    m = re.search(r"^class\s+(\w+)", source, re.MULTILINE)
    if m is None:
        raise ValueError("source has no class definition")
    return m.group(1)


def _rename_class(source: str, new_name: str) -> str:
    old = _class_name(source)
    return re.sub(rf"\b{re.escape(old)}\b", new_name, source)


def build_mutation_prompt(genome: NetworkGenome, prompt_id: int, catalog: PromptCatalog) -> str:
    """Parent source followed by one triple-quoted instruction line."""
    if not 0 <= prompt_id < MUTATION_PROMPT_COUNT:
        raise ValueError("mutation prompt_id must be in [0, 14]")
    body = genome.source
    if not body.startswith("import "):
        body = f"{IMPORT_PREAMBLE}\n\n{body}"
    instruction = catalog.mutation_prompts[prompt_id]
    return f'{body.rstrip()}\n\n"""{instruction}"""\n'


def build_crossover_prompt(
    g1: NetworkGenome, g2: NetworkGenome, catalog: PromptCatalog
) -> str:
    """Both parents renamed Net1/Net2 under a single import preamble."""
    if g1.id == g2.id:
        raise ValueError("crossover needs two distinct parents")
    c1 = _rename_class(_strip_preamble(g1.source), "Net1")
    c2 = _rename_class(_strip_preamble(g2.source), "Net2")
    return (
        f"{IMPORT_PREAMBLE}\n\n{c1.rstrip()}\n\n{c2.rstrip()}\n\n"
        f'"""{catalog.crossover_prompt}"""\n'
    )


def _clamp_unit(temperature: float) -> float:
    # the 12-decimal rounding keeps repeated 0.05 steps on the exact decimal
    # grid, so 0.6 -> 0.65 -> 0.7 holds with == instead of drifting by ulps
    return min(1.0, max(0.0, round(temperature, 12)))


def mutate_temperature_feedback(temperature: float, loss: float, best_loss: float) -> float:
    """Step temperature up when the network matched or beat the running best."""
    if loss <= best_loss:
        temperature += TEMPERATURE_FEEDBACK_STEP
    else:
        temperature -= TEMPERATURE_FEEDBACK_STEP
    return _clamp_unit(temperature)


def perturb_temperature_uniform(temperature: float, rng: np.random.Generator) -> float:
    """Add one Uniform(-0.1, 0.1) draw and clamp into [0, 1]."""
    temperature += float(rng.uniform(-TEMPERATURE_PERTURBATION, TEMPERATURE_PERTURBATION))
    return _clamp_unit(temperature)


@dataclass(frozen=True)
class SlotSelection:
    prompt_id: int
    temperature: float
    # archived individual whose curiosity absorbs this slot's outcome,
    # None when the slot built a transient individual
    source: PromptIndividual | None


class SlotPromptSelector:
    """Per-slot prompt choice for one mutation generation.

    Even slots reuse the most curious archived individual and remember its
    temperature; odd slots draw a uniformly random mutation prompt and
    perturb that remembered temperature. When the archive is empty (or
    disabled) every slot takes the random branch off the initial
    temperature. Odd slots consume exactly two RNG draws, prompt id first.
    """

    def __init__(
        self,
        prompt_archive,
        rng: np.random.Generator,
        initial_temperature: float,
    ) -> None:
        self._archive = prompt_archive
        self._rng = rng
        self._base_temperature = initial_temperature

    def select(self, slot: int) -> SlotSelection:
        archive_ready = self._archive is not None and self._archive.cell_count > 0
        if slot % 2 == 0 and archive_ready:
            source = most_curious(self._archive)
            self._base_temperature = source.temperature
            return SlotSelection(source.prompt_id, source.temperature, source)
        prompt_id = int(self._rng.integers(0, MUTATION_PROMPT_COUNT))
        temperature = perturb_temperature_uniform(self._base_temperature, self._rng)
        return SlotSelection(prompt_id, temperature, None)


_CLASS_LINE = re.compile(r"^class\s+\w+\s*\(")


def _candidate_blocks(completion: str):
    """Yield top-level class blocks in order of appearance."""
    lines = completion.splitlines()
    for i, line in enumerate(lines):
        if not _CLASS_LINE.match(line):
            continue
        block = [line]
        for nxt in lines[i + 1:]:
            if nxt.strip() == "" or nxt[0] in (" ", "\t"):
                block.append(nxt)
            else:
                break
        yield "\n".join(block).rstrip()


def _is_network_class(block: str) -> bool:
    try:
        tree = ast.parse(block)
    except SyntaxError:
        return False
    if len(tree.body) != 1 or not isinstance(tree.body[0], ast.ClassDef):
        return False
    methods = {n.name for n in tree.body[0].body if isinstance(n, ast.FunctionDef)}
    return "__init__" in methods and "forward" in methods


def extract_genome(
    completion: str,
    parent_ids: tuple[str, ...],
    origin: str,
    prompt_id: int | None = None,
    genome_id: str | None = None,
) -> NetworkGenome:
    """Pull the first complete network class out of a completion.

    A block qualifies when it parses on its own and defines both __init__
    and forward. Surrounding prose is discarded and the import preamble is
    prepended so the stored source is a runnable program.
    """
    for block in _candidate_blocks(completion):
        if not _is_network_class(block):
            continue
        source = f"{IMPORT_PREAMBLE}\n\n{block}\n"
        if genome_id is None:
            genome_id = "n" + hashlib.sha1(source.encode()).hexdigest()[:12]
        return NetworkGenome(
            source=source,
            id=genome_id,
            parent_ids=tuple(parent_ids),
            origin=origin,
            prompt_id=prompt_id,
        )
    raise ExtractionFailed("no complete network class definition in completion")
