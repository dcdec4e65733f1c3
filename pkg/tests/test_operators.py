"""Prompt catalog, prompt assembly, temperature rules, genome extraction."""
from __future__ import annotations

import json

import numpy as np
import pytest

from qdnas.archive import CentroidSet, CvtArchive, Descriptor
from qdnas.individuals import PromptIndividual, seed_genome
from qdnas.operators import (
    CROSSOVER_PROMPT_ID,
    ExtractionFailed,
    GenerationRequest,
    IMPORT_PREAMBLE,
    PromptCatalog,
    SlotPromptSelector,
    build_crossover_prompt,
    build_mutation_prompt,
    extract_genome,
    mutate_temperature_feedback,
    perturb_temperature_uniform,
)

EXPECTED_MUTATION_PROMPTS = (
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

EXPECTED_CROSSOVER_PROMPT = (
    "Combine the above two neural networks and create a third neural network "
    "class that also inherits from nn.Module and performs better than the "
    "above two neural networks"
)


# --- catalog ---

def test_default_catalog_strings():
    cat = PromptCatalog.default()
    assert cat.mutation_prompts == EXPECTED_MUTATION_PROMPTS
    assert cat.crossover_prompt == EXPECTED_CROSSOVER_PROMPT
    assert len(cat.mutation_prompts) == 15
    assert CROSSOVER_PROMPT_ID == 15


def test_catalog_round_trips_through_json(tmp_path):
    cat = PromptCatalog.default()
    path = tmp_path / "prompts.json"
    path.write_text(json.dumps(list(cat.mutation_prompts) + [cat.crossover_prompt]))
    loaded = PromptCatalog.from_json_file(path)
    assert loaded == cat


def test_catalog_rejects_wrong_length(tmp_path):
    path = tmp_path / "prompts.json"
    path.write_text(json.dumps(["a"] * 15))
    with pytest.raises(ValueError):
        PromptCatalog.from_json_file(path)


def test_generation_request_defaults():
    req = GenerationRequest(prompt_text="hi", temperature=0.6)
    assert req.max_tokens == 768


# --- prompt assembly ---

def test_mutation_prompt_layout():
    prompt = build_mutation_prompt(seed_genome(), 0, PromptCatalog.default())
    assert prompt.startswith("import torch\nimport torch.nn as nn\n")
    assert prompt.count("import torch\n") == 1
    assert prompt.endswith('\n\n"""Add a layer to improve the above network"""\n')


def test_mutation_prompt_id_range():
    with pytest.raises(ValueError):
        build_mutation_prompt(seed_genome(), 15, PromptCatalog.default())
    with pytest.raises(ValueError):
        build_mutation_prompt(seed_genome(), -1, PromptCatalog.default())


def test_mutation_prompt_round_trips_through_extraction():
    prompt = build_mutation_prompt(seed_genome(), 3, PromptCatalog.default())
    recovered = extract_genome(prompt, parent_ids=(), origin="seed", genome_id="r")
    assert recovered.source == seed_genome().source


def test_crossover_prompt_layout():
    g1 = seed_genome()
    g2 = extract_genome(
        "class Wide(nn.Module):\n"
        "    def __init__(self):\n"
        "        super(Wide, self).__init__()\n"
        "        self.fc1 = nn.Linear(3072, 10)\n"
        "    def forward(self, x):\n"
        "        return self.fc1(torch.flatten(x, 1))\n",
        parent_ids=("seed",),
        origin="mutation",
        prompt_id=7,
        genome_id="w",
    )
    prompt = build_crossover_prompt(g1, g2, PromptCatalog.default())
    assert prompt.count(IMPORT_PREAMBLE) == 1
    assert "class Net1(nn.Module):" in prompt
    assert "class Net2(nn.Module):" in prompt
    # rename rewrites every class-name token, including the super() call
    assert "super(Net2, self).__init__()" in prompt
    assert "Wide" not in prompt
    assert prompt.endswith(f'"""{EXPECTED_CROSSOVER_PROMPT}"""\n')
    assert prompt.index("class Net1") < prompt.index("class Net2")


def test_crossover_prompt_needs_distinct_parents():
    with pytest.raises(ValueError):
        build_crossover_prompt(seed_genome(), seed_genome(), PromptCatalog.default())


# --- temperature rules ---

def test_feedback_direction_and_clamp():
    assert mutate_temperature_feedback(0.6, loss=1.0, best_loss=2.0) == 0.65
    assert mutate_temperature_feedback(0.6, loss=2.0, best_loss=2.0) == 0.65
    assert mutate_temperature_feedback(0.6, loss=2.5, best_loss=2.0) == 0.55
    assert mutate_temperature_feedback(0.98, loss=1.0, best_loss=2.0) == 1.0
    assert mutate_temperature_feedback(0.02, loss=3.0, best_loss=2.0) == 0.0


def test_perturbation_bounds_and_center():
    rng = np.random.default_rng(0)
    deltas = []
    for _ in range(4000):
        t = perturb_temperature_uniform(0.5, rng)
        assert 0.4 <= t <= 0.6
        deltas.append(t - 0.5)
    assert abs(sum(deltas) / len(deltas)) < 0.005


def test_perturbation_clamps_at_bounds():
    rng = np.random.default_rng(1)
    for _ in range(200):
        assert 0.0 <= perturb_temperature_uniform(0.02, rng) <= 0.12
        assert 0.88 <= perturb_temperature_uniform(0.98, rng) <= 1.0


def test_perturbation_deterministic_by_seed():
    a = perturb_temperature_uniform(0.5, np.random.default_rng(9))
    b = perturb_temperature_uniform(0.5, np.random.default_rng(9))
    assert a == b


# --- slot selection ---

def prompt_archive_with_curious(curiosity=3.0):
    pts = np.array([[0.1, 0.5], [0.9, 0.5]])
    arch = CvtArchive(CentroidSet(pts, seed=0), lower_is_better=False)
    arch.try_insert(PromptIndividual(6, 0.8, curiosity=curiosity), Descriptor(6 / 16, 0.8), 1.0)
    arch.try_insert(PromptIndividual(2, 0.3, curiosity=0.0), Descriptor(2 / 16, 0.3), 1.0)
    return arch


def test_even_slots_use_most_curious():
    arch = prompt_archive_with_curious()
    sel = SlotPromptSelector(arch, np.random.default_rng(0), initial_temperature=0.6)
    picks = [sel.select(slot) for slot in range(10)]
    for slot in range(0, 10, 2):
        assert picks[slot].prompt_id == 6
        assert picks[slot].temperature == 0.8
        assert picks[slot].source is not None
    curious_count = sum(1 for p in picks if p.source is not None)
    assert curious_count == 5


def test_odd_slots_perturb_latest_even_temperature():
    arch = prompt_archive_with_curious()
    sel = SlotPromptSelector(arch, np.random.default_rng(0), initial_temperature=0.6)
    sel.select(0)
    for slot in (1, 3, 5):
        pick = sel.select(slot)
        assert 0.7 <= pick.temperature <= 0.9
        assert 0 <= pick.prompt_id <= 14
        assert pick.source is None


def test_empty_archive_forces_random_branch():
    pts = np.array([[0.1, 0.5], [0.9, 0.5]])
    arch = CvtArchive(CentroidSet(pts, seed=0), lower_is_better=False)
    sel = SlotPromptSelector(arch, np.random.default_rng(0), initial_temperature=0.6)
    picks = [sel.select(slot) for slot in range(8)]
    assert all(p.source is None for p in picks)
    for p in picks:
        assert 0.5 <= p.temperature <= 0.7


def test_random_branch_never_picks_crossover_slot():
    pts = np.array([[0.1, 0.5], [0.9, 0.5]])
    arch = CvtArchive(CentroidSet(pts, seed=0), lower_is_better=False)
    sel = SlotPromptSelector(arch, np.random.default_rng(5), initial_temperature=0.6)
    ids = {sel.select(slot).prompt_id for slot in range(600)}
    assert ids == set(range(15))


# --- genome extraction ---

VALID_COMPLETION = """\
Sure, here is an improved network:

class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, 3, padding=1)
        self.fc1 = nn.Linear(16384, 10)

    def forward(self, x):
        x = F.relu(self.conv1(x))
        x = torch.flatten(x, 1)
        return self.fc1(x)

This network should perform better because it has more filters.
"""


def test_extract_strips_prose_and_adds_preamble():
    g = extract_genome(
        VALID_COMPLETION, parent_ids=("seed",), origin="mutation", prompt_id=0, genome_id="g1"
    )
    assert g.source.startswith(IMPORT_PREAMBLE)
    assert g.source.rstrip().endswith("return self.fc1(x)")
    assert "Sure, here" not in g.source
    assert "perform better because" not in g.source
    assert g.parent_ids == ("seed",)
    assert g.origin == "mutation"
    assert g.prompt_id == 0
    assert g.id == "g1"


def test_extract_takes_first_complete_definition():
    completion = VALID_COMPLETION + "\nclass Net2(nn.Module):\n    def __init__(self):\n        pass\n    def forward(self, x):\n        return x\n"
    g = extract_genome(completion, parent_ids=(), origin="seed", genome_id="g")
    assert "conv1" in g.source
    assert "Net2" not in g.source


def test_extract_skips_incomplete_definition():
    completion = (
        "class Broken(nn.Module):\n"
        "    def __init__(self):\n"
        "        self.fc = nn.Linear(10\n"  # unbalanced paren
        "\n" + VALID_COMPLETION
    )
    g = extract_genome(completion, parent_ids=(), origin="seed", genome_id="g")
    assert "class Net(nn.Module):" in g.source


def test_extract_requires_both_methods():
    with pytest.raises(ExtractionFailed):
        extract_genome(
            "class Net(nn.Module):\n    def __init__(self):\n        pass\n",
            parent_ids=(),
            origin="seed",
            genome_id="g",
        )


def test_extract_fails_on_empty_and_garbage():
    for text in ("", "no code here at all", "def forward(x):\n    return x\n"):
        with pytest.raises(ExtractionFailed):
            extract_genome(text, parent_ids=(), origin="seed", genome_id="g")


def test_extract_without_id_hashes_content():
    a = extract_genome(VALID_COMPLETION, parent_ids=(), origin="seed", genome_id=None)
    b = extract_genome(VALID_COMPLETION, parent_ids=(), origin="seed", genome_id=None)
    assert a.id == b.id
    assert len(a.id) > 4
