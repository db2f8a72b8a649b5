"""Entropy seed integration, stream checkout, and seed budgeting.

Four sampling types control how external entropy seeds are consumed:

- ``default``: one root stream seeded from OS entropy; every sampling
  operation gets a fresh stream that mixes in the common seed bank, shuffled
  by the root stream.
- ``bulk_seeds``: every sampled entry receives its own primary seed from the
  bank; no OS entropy is mixed in.
- ``sampling_seed``: every sampling operation consumes one supplemental seed.
- ``transform_seed``: every noise transform consumes one supplemental seed;
  all of its operations share the resulting stream.

Seeding type ``primary_seeds`` (the default for ``bulk_seeds``) drops OS
entropy entirely, making output a pure function of the seed bank.
``supplemental_seeds`` mixes the bank with OS material.

The manager counts operations and consumed seeds so reported budgets can be
verified exactly. When the bank runs dry, replacement seeds come from the
extra seed generator; with that generator off, exhaustion is a hard error.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConfigError, SeedExhaustedError
from .rng import (
    BulkSampler,
    GENERATOR_KINDS,
    StreamSampler,
    make_stream,
    mix_seed,
)

SAMPLING_TYPES = ("default", "bulk_seeds", "sampling_seed", "transform_seed")
SEEDING_TYPES = ("supplemental_seeds", "primary_seeds")

MAX_SUGGESTED_SEED = 2**31 - 1


@dataclass
class GeneratorSpec:
    """Which word-stream generator backs sampling; external sources drop in."""

    kind: str = "default_pcg"
    external: object = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ConfigError(f"unknown generator kind: {self.kind!r}")
        if self.kind == "external" and self.external is None:
            raise ConfigError("external generator requires a word source")


@dataclass
class SamplingPlan:
    sampling_type: str = "default"
    seeding_type: str | None = None
    entropy_seeds: list[int] = field(default_factory=list)
    stochastic_count_safety_factor: float = 0.15
    sampling_generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    extra_seed_generator: GeneratorSpec | str | None = None
    os_material: bytes | None = None  # injectable for reproducible tests

    def __post_init__(self):
        if self.sampling_type not in SAMPLING_TYPES:
            raise ConfigError(f"unknown sampling_type: {self.sampling_type!r}")
        if self.seeding_type is None:
            self.seeding_type = (
                "primary_seeds" if self.sampling_type == "bulk_seeds" else "supplemental_seeds"
            )
        if self.seeding_type not in SEEDING_TYPES:
            raise ConfigError(f"unknown seeding_type: {self.seeding_type!r}")
        if not 0.0 <= self.stochastic_count_safety_factor <= 1.0:
            raise ConfigError("stochastic_count_safety_factor must be in [0, 1]")
        seeds = []
        for seed in self.entropy_seeds:
            seed = int(seed)
            if seed < 0:
                raise ConfigError("entropy seeds must be nonnegative integers")
            seeds.append(seed)
        self.entropy_seeds = seeds

    @property
    def primary(self) -> bool:
        return self.seeding_type == "primary_seeds"


@dataclass
class SeedReport:
    """How many entropy seeds each sampling type needs for one preparation."""

    bulk_seeds_total_train: int = 0
    bulk_seeds_total_test: int = 0
    rowcount_basis_train: int = 0
    rowcount_basis_test: int = 0
    sampling_seed_total_train: int = 0
    sampling_seed_total_test: int = 0
    transform_seed_total: int = 0
    stochastic_count_safety_factor: float = 0.15

    def to_dict(self) -> dict:
        return {
            "bulk_seeds_total_train": self.bulk_seeds_total_train,
            "bulk_seeds_total_test": self.bulk_seeds_total_test,
            "rowcount_basis_train": self.rowcount_basis_train,
            "rowcount_basis_test": self.rowcount_basis_test,
            "sampling_seed_total_train": self.sampling_seed_total_train,
            "sampling_seed_total_test": self.sampling_seed_total_test,
            "transform_seed_total": self.transform_seed_total,
            "stochastic_count_safety_factor": self.stochastic_count_safety_factor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeedReport":
        return cls(**{k: data[k] for k in cls().to_dict() if k in data})


def rescale_budget(total: int, rowcount_basis: int, rowcount_new: int) -> int:
    """Proportional budget rescaling: total * new_rows / basis_rows."""
    if rowcount_basis <= 0:
        return 0
    return math.ceil(total * rowcount_new / rowcount_basis)


@dataclass
class OpCost:
    """Cost model entry for one sampling operation of a planned transform.

    ``entries`` is the expected number of sampled entries at the basis
    rowcount; ``stochastic`` marks counts that vary run to run (budgeted with
    the safety factor). ``phase`` is 'train' or 'test'; calibration and
    parameter-resolution operations happen at fit time and land in the train
    totals. ``bank_entries`` covers the bulk_seeds budget; operations that
    never touch the per-entry bank (calibration substreams) set it to 0.
    """

    phase: str
    entries: float
    stochastic: bool
    transform_key: str
    counts_toward_bulk: bool = True


def compute_seed_report(
    op_costs: Sequence[OpCost],
    transform_count: int,
    rowcount_train: int,
    rowcount_test: int,
    safety_factor: float = 0.15,
) -> SeedReport:
    report = SeedReport(
        rowcount_basis_train=rowcount_train,
        rowcount_basis_test=rowcount_test,
        transform_seed_total=transform_count,
        stochastic_count_safety_factor=safety_factor,
    )
    for cost in op_costs:
        if cost.phase == "train":
            report.sampling_seed_total_train += 1
        else:
            report.sampling_seed_total_test += 1
        if not cost.counts_toward_bulk:
            continue
        if cost.stochastic:
            entries = math.ceil(cost.entries * (1.0 + safety_factor))
        else:
            entries = math.ceil(cost.entries)
        if cost.phase == "train":
            report.bulk_seeds_total_train += entries
        else:
            report.bulk_seeds_total_test += entries
    return report


class StreamManager:
    """Serves samplers for sampling operations under one plan.

    One manager backs one preparation call. Checkout order is the canonical
    operation order (callers iterate columns lexicographically and operations
    within a transform in fixed order), so seed assignment never depends on
    scheduling.
    """

    def __init__(self, plan: SamplingPlan):
        self.plan = plan
        if plan.primary:
            self._os_material = b""
        else:
            self._os_material = plan.os_material if plan.os_material is not None else os.urandom(32)
        self._bank = list(plan.entropy_seeds)
        self._bank_pos = 0
        self._root = None
        self._transform_streams: dict[str, StreamSampler] = {}
        self._calibration_counts: dict[str, int] = {}
        self._extra = None
        self._extra_built = False
        self.ops_executed = 0
        self.seeds_consumed = 0
        self.bulk_entries_drawn = 0

    # -- seed bank -----------------------------------------------------------

    def _extra_generator(self):
        if self._extra_built:
            return self._extra
        self._extra_built = True
        spec = self.plan.extra_seed_generator
        if spec is None or spec == "off":
            self._extra = None
        else:
            if isinstance(spec, str):
                kind_map = {"PCG64": "default_pcg", "default_pcg": "default_pcg",
                            "MersenneTwister": "mersenne", "mersenne": "mersenne"}
                if spec not in kind_map:
                    raise ConfigError(f"unknown extra_seed_generator: {spec!r}")
                spec = GeneratorSpec(kind=kind_map[spec])
            state, seq = mix_seed(self._os_material + b"extra", self.plan.entropy_seeds)
            self._extra = make_stream(spec.kind, state, seq, spec.external)
        return self._extra

    def next_seed(self) -> int:
        if self._bank_pos < len(self._bank):
            seed = self._bank[self._bank_pos]
            self._bank_pos += 1
            self.seeds_consumed += 1
            return seed
        extra = self._extra_generator()
        if extra is None:
            raise SeedExhaustedError(
                f"entropy seed bank exhausted after {self.seeds_consumed} seeds "
                "and extra_seed_generator is off"
            )
        self.seeds_consumed += 1
        return extra.next_word() & MAX_SUGGESTED_SEED

    # -- stream construction -------------------------------------------------

    def _make(self, initstate: int, initseq: int):
        gen = self.plan.sampling_generator
        return make_stream(gen.kind, initstate, initseq, gen.external)

    def _root_sampler(self) -> StreamSampler:
        if self._root is None:
            state, seq = mix_seed(self._os_material + b"root", [])
            self._root = StreamSampler(self._make(state, seq))
        return self._root

    def _bulk_seed_source(self):
        gen = self.plan.sampling_generator
        mix_os = None if self.plan.primary else self._os_material

        def source():
            seed = self.next_seed()
            self.bulk_entries_drawn += 1
            state, seq = mix_seed(mix_os, [seed])
            return state, seq, gen.kind, gen.external

        return source

    def op_sampler(self, transform_key: str):
        """Sampler for one sampling operation of the given transform."""
        self.ops_executed += 1
        mode = self.plan.sampling_type
        if mode == "bulk_seeds":
            return BulkSampler(self._bulk_seed_source())
        if mode == "sampling_seed":
            seed = self.next_seed()
            state, seq = mix_seed(self._os_material, [seed])
            return StreamSampler(self._make(state, seq))
        if mode == "transform_seed":
            return self._transform_sampler(transform_key)
        # default: shuffle the common bank, mix with a per-call nonce
        root = self._root_sampler()
        nonce = root.stream.next_word()
        shuffled = root.shuffled(self._bank) if self._bank else []
        state, seq = mix_seed(self._os_material + nonce.to_bytes(8, "little"), shuffled)
        return StreamSampler(self._make(state, seq))

    def _transform_sampler(self, transform_key: str) -> StreamSampler:
        sampler = self._transform_streams.get(transform_key)
        if sampler is None:
            seed = self.next_seed()
            state, seq = mix_seed(self._os_material, [seed])
            sampler = StreamSampler(self._make(state, seq))
            self._transform_streams[transform_key] = sampler
        return sampler

    def register_transform(self, transform_key: str) -> None:
        """Pre-assign a transform's seed under ``transform_seed``.

        Called for every noise transform in the plan before any operation
        runs, so expended seed counts do not depend on which phases fire.
        """
        if self.plan.sampling_type == "transform_seed":
            self._transform_sampler(transform_key)

    def calibration_sampler(self, transform_key: str, phase: str = "train"):
        """Sampler for fit-time calibration draws.

        Under ``bulk_seeds`` calibration runs on a dedicated substream rather
        than draining the per-entry bank; the substream is keyed by transform
        and phase so equivalent transforms calibrate identically regardless
        of which other phases the plan fires. Under ``sampling_seed`` each
        calibration sampling counts as a normal operation.
        """
        if self.plan.sampling_type == "bulk_seeds":
            self.ops_executed += 1
            counter_key = f"{transform_key}:{phase}"
            count = self._calibration_counts.get(counter_key, 0)
            self._calibration_counts[counter_key] = count + 1
            tag = f"calibration:{counter_key}:{count}".encode()
            state, seq = mix_seed(self._os_material + tag, self.plan.entropy_seeds)
            return StreamSampler(self._make(state, seq))
        return self.op_sampler(transform_key)

    def utility_sampler(self, tag: str) -> StreamSampler:
        """Non-bank stream for plumbing draws (row shuffles, validation splits)."""
        state, seq = mix_seed(
            self._os_material + b"utility:" + tag.encode(), self.plan.entropy_seeds
        )
        return StreamSampler(self._make(state, seq))


def read_seed_file(path) -> list[int]:
    """Newline-delimited decimal integers."""
    seeds = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                seeds.append(int(line))
            except ValueError:
                raise ConfigError(f"{path}: line {lineno} is not an integer seed")
    return seeds


def write_seed_report(report: SeedReport, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
