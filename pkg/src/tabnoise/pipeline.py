"""Fit/apply orchestration: schema resolution, splits, noise semantics, persistence.

``fit`` resolves a root category per input column (explicit assignment wins
over automation), removes validation rows before any statistic is computed,
fits every column's transform tree on the remaining training rows, and emits
the prepared training set with train-phase noise. The returned basis holds
everything needed to prepare later data with no access to the training set:
fitted statistics, resolved parameters, applied steps, and the seed report.

``apply`` replays the recorded steps on new data. The traindata mode crossed
with each transform's train/test flags decides where noise fires:

    mode            noise applied
    train           transforms flagged trainnoise, with train parameters
    test            transforms flagged testnoise, with test parameters
    train_no_noise  none (encodings identical to train mode)
    test_no_noise   none (encodings identical to test mode)
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .encoders import (
    CategoricBasis,
    NumericBasis,
    apply_categoric,
    apply_numeric,
    column_as_floats,
    fit_categoric,
    fit_numeric,
    onehot_to_codes,
    bits_to_codes,
    codes_to_bits,
    codes_to_onehot,
)
from .errors import BasisFormatError, ConfigError, SchemaError
from .noise import (
    NoiseSpec,
    ProtectedBasis,
    adjust_noise_mean,
    fit_protected_categoric,
    fit_protected_numeric,
    flip_boolean_direct,
    inject_numeric,
    is_randomized_param,
    mask_noise,
    protected_ratio_vector,
    protected_weight_matrix,
    resolve_param,
    rescale_sigma_passthrough,
    sample_bernoulli_mask,
    sample_noise,
    scale_noise_minmax,
    swap_noise,
    weighted_flip,
)
from .sampling import OpCost, SamplingPlan, SeedReport, StreamManager, compute_seed_report
from .table import DataTable, infer_feature_kind, suffixed_name
from .trees import (
    KIND_PARAMS,
    NOISE_KINDS,
    ParamAssignments,
    apply_root_category,
    builtin_catalog,
    resolve_params,
)

BASIS_FORMAT_VERSION = "tabnoise-basis/1"

TRAINDATA_MODES = ("test", "train", "train_no_noise", "test_no_noise")

# Root categories applied under automation, by feature kind.
_AUTOMATION_BASE = {"numeric": "nmbr", "boolean_categoric": "bnry", "categoric": "1010"}
_POWERTRANSFORM_STEMS = {
    "1": {"numeric": "nb", "boolean_categoric": "bn", "categoric": "10"},
    "2": {"numeric": "rt", "boolean_categoric": "bn", "categoric": "od"},
}

_NOISE_FLAG_FIELDS = ("trainnoise", "testnoise", "retain_basis", "protected_feature",
                      "rescale_sigmas", "noise_scaling_bias_offset", "direct_flip",
                      "swap_noise")


@dataclass
class AugmentSpec:
    """Duplicate count for noise augmentation.

    Integer-typed counts prepare one duplicate without noise; float-typed
    counts (``all_noisy``) prepare every duplicate with noise.
    """

    count: int
    all_noisy: bool = False

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("augment count must be nonnegative")

    @classmethod
    def from_literal(cls, text: str) -> "AugmentSpec":
        value = float(text)
        if value < 0 or value != int(value):
            raise ConfigError(f"augment count must be a nonnegative integer, got {text!r}")
        is_float = any(ch in text for ch in ".eE")
        return cls(count=int(value), all_noisy=is_float)


@dataclass
class FitConfig:
    labels_column: str | None = None
    validation_ratio: float = 0.0
    powertransform: str | None = None
    shuffletrain: bool = True
    orig_headers: bool = False
    assigncat: dict = field(default_factory=dict)
    assignparam: dict = field(default_factory=dict)
    transformdict: dict = field(default_factory=dict)
    processdict: dict = field(default_factory=dict)
    noise_augment: float | int = 0

    _KEYS = ("labels_column", "validation_ratio", "powertransform", "shuffletrain",
             "orig_headers", "assigncat", "assignparam", "transformdict",
             "processdict", "noise_augment")

    @classmethod
    def from_dict(cls, config: dict | None) -> "FitConfig":
        config = dict(config or {})
        unknown = set(config) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**config)
        if not 0.0 <= cfg.validation_ratio < 1.0:
            raise ConfigError("validation_ratio must be in [0, 1)")
        if cfg.powertransform is not None:
            prefix, digit = cfg.powertransform[:2], cfg.powertransform[2:]
            if prefix not in ("DP", "DT", "DB") or digit not in _POWERTRANSFORM_STEMS:
                raise ConfigError(f"unknown powertransform mode: {cfg.powertransform!r}")
        return cfg


@dataclass
class AppliedStep:
    category: str
    kind: str
    input_base: str
    output_base: str
    output_columns: list
    payload: dict

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "kind": self.kind,
            "input_base": self.input_base,
            "output_base": self.output_base,
            "output_columns": list(self.output_columns),
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AppliedStep":
        return cls(
            category=data["category"],
            kind=data["kind"],
            input_base=data["input_base"],
            output_base=data["output_base"],
            output_columns=list(data["output_columns"]),
            payload=data["payload"],
        )


@dataclass
class ColumnPlan:
    input_column: str
    root: str
    kind: str  # feature kind
    steps: list = field(default_factory=list)
    output_columns: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "input_column": self.input_column,
            "root": self.root,
            "kind": self.kind,
            "steps": [s.to_dict() for s in self.steps],
            "output_columns": list(self.output_columns),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ColumnPlan":
        return cls(
            input_column=data["input_column"],
            root=data["root"],
            kind=data["kind"],
            steps=[AppliedStep.from_dict(s) for s in data["steps"]],
            output_columns=list(data["output_columns"]),
        )


@dataclass
class TransformBasis:
    """Everything fitted: schema, per-column plans, resolved params, seed report."""

    format_version: str = BASIS_FORMAT_VERSION
    input_columns: list = field(default_factory=list)
    label_column: str | None = None
    column_plans: dict = field(default_factory=dict)
    seed_report: SeedReport = field(default_factory=SeedReport)
    shuffletrain: bool = True
    validation_ratio: float = 0.0
    validation_row_index: list = field(default_factory=list)
    transformdict: dict = field(default_factory=dict)
    processdict: dict = field(default_factory=dict)

    def plan_for(self, column: str) -> ColumnPlan:
        return self.column_plans[column]

    def required_columns(self) -> list:
        required = [c for c in self.input_columns if c != self.label_column]
        for plan in self.column_plans.values():
            for step in plan.steps:
                protected = step.payload.get("resolved", {}).get("protected_feature")
                if protected and protected not in required:
                    required.append(protected)
        return required

    def noise_step_keys(self) -> list:
        keys = []
        for column in sorted(self.column_plans):
            plan = self.column_plans[column]
            for idx, step in enumerate(plan.steps):
                if step.kind in NOISE_KINDS:
                    keys.append(_transform_key(column, idx))
        return keys

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "input_columns": list(self.input_columns),
            "label_column": self.label_column,
            "column_plans": {c: p.to_dict() for c, p in self.column_plans.items()},
            "seed_report": self.seed_report.to_dict(),
            "shuffletrain": self.shuffletrain,
            "validation_ratio": self.validation_ratio,
            "validation_row_index": list(self.validation_row_index),
            "transformdict": self.transformdict,
            "processdict": self.processdict,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransformBasis":
        version = data.get("format_version")
        if version != BASIS_FORMAT_VERSION:
            raise BasisFormatError(
                f"basis version {version!r} is not supported (expected {BASIS_FORMAT_VERSION!r})"
            )
        return cls(
            format_version=version,
            input_columns=list(data["input_columns"]),
            label_column=data["label_column"],
            column_plans={c: ColumnPlan.from_dict(p) for c, p in data["column_plans"].items()},
            seed_report=SeedReport.from_dict(data["seed_report"]),
            shuffletrain=data["shuffletrain"],
            validation_ratio=data["validation_ratio"],
            validation_row_index=list(data["validation_row_index"]),
            transformdict=data.get("transformdict", {}),
            processdict=data.get("processdict", {}),
        )


@dataclass
class FitResult:
    train: DataTable
    validation: DataTable | None
    test: DataTable | None
    basis: TransformBasis
    ops_executed: int = 0
    seeds_consumed: int = 0


def _transform_key(column: str, step_index: int) -> str:
    return f"{column}#{step_index}"


# -- working groups ----------------------------------------------------------


@dataclass
class _Group:
    base: str
    columns: list  # [(name, np.ndarray | list-of-cells)]
    missing: np.ndarray  # bool mask: source cell missing or not usable
    meta: dict = field(default_factory=dict)
    preserve_missing: bool = False


def _raw_group(name: str, cells: list) -> _Group:
    missing = np.array([c is None for c in cells], dtype=bool)
    return _Group(name, [(name, cells)], missing)


def _group_cells(group: _Group) -> list:
    _, data = group.columns[0]
    if isinstance(data, np.ndarray):
        return [None if m else float(v) for v, m in zip(data, group.missing)]
    return data


def _group_floats(group: _Group) -> tuple[np.ndarray, np.ndarray]:
    _, data = group.columns[0]
    if isinstance(data, np.ndarray):
        return data.astype(np.float64), group.missing.copy()
    return column_as_floats(data)


def _single(group_base: str, name: str, data, missing, meta=None, preserve=False) -> _Group:
    return _Group(group_base, [(name, data)], np.asarray(missing, dtype=bool),
                  meta or {}, preserve)


# -- execution context -------------------------------------------------------


class _Ctx:
    def __init__(self, manager: StreamManager, mode: str, cells_lookup, fitting: bool):
        self.manager = manager
        self.mode = mode
        self._cells_lookup = cells_lookup
        self.fitting = fitting

    @property
    def phase(self) -> str:
        return "train" if self.mode in ("train", "train_no_noise") else "test"

    @property
    def suppressed(self) -> bool:
        return self.mode.endswith("no_noise")

    def aligned_cells(self, column: str) -> list:
        cells = self._cells_lookup(column)
        if cells is None:
            raise SchemaError(f"column {column!r} required by a fitted transform is absent")
        return cells


# -- noise parameter plumbing ------------------------------------------------

_NOISE_FIELD_ORDER = (
    "trainnoise", "testnoise", "flip_prob", "test_flip_prob", "sigma", "test_sigma",
    "mu", "test_mu", "noisedistribution", "test_noisedistribution", "weighted",
    "test_weighted", "rescale_sigmas", "retain_basis", "protected_feature",
    "mask_value", "noise_scaling_bias_offset", "direct_flip", "swap_noise",
)


def _resolve_noise_params(ctx: _Ctx, params: dict, tkey: str) -> tuple[dict, list, dict]:
    """Resolve randomized parameters once at fit; returns (resolved, randomized, raw)."""
    raw = {k: params[k] for k in _NOISE_FIELD_ORDER if k in params}
    resolved = {}
    randomized = []
    for name in _NOISE_FIELD_ORDER:
        if name not in raw:
            continue
        value = raw[name]
        if name not in _NOISE_FLAG_FIELDS and is_randomized_param(value):
            randomized.append(name)
            sampler = ctx.manager.op_sampler(tkey)
            resolved[name] = resolve_param(value, False, None, sampler)
        else:
            resolved[name] = value
    return resolved, randomized, raw


def _spec_from(resolved: dict) -> NoiseSpec:
    fields = {k: v for k, v in resolved.items() if k in _NOISE_FIELD_ORDER}
    return NoiseSpec(**fields)


def _effective_spec(ctx: _Ctx, payload: dict, tkey: str) -> tuple[NoiseSpec, str] | None:
    """Spec and phase when noise fires for the current mode, else None.

    Outside of fit, non-retained randomized parameters are re-resolved with
    fresh sampling (one operation per parameter).
    """
    if ctx.suppressed:
        return None
    resolved = payload["resolved"]
    phase = ctx.phase
    fires = resolved.get("trainnoise", True) if phase == "train" else resolved.get("testnoise", False)
    if not fires:
        return None
    effective = dict(resolved)
    randomized = payload.get("randomized_fields", [])
    if randomized and not ctx.fitting and not resolved.get("retain_basis", False):
        raw = payload["params_raw"]
        for name in randomized:
            sampler = ctx.manager.op_sampler(tkey)
            effective[name] = resolve_param(raw[name], False, None, sampler)
    return _spec_from(effective), phase


def _protected_cells(ctx: _Ctx, spec_resolved: dict, n_rows: int):
    protected = spec_resolved.get("protected_feature")
    if not protected:
        return None
    cells = ctx.aligned_cells(protected)
    if len(cells) != n_rows:
        raise SchemaError(f"protected column {protected!r} is not row-aligned")
    return cells


# -- transform implementations ------------------------------------------------


def _numeric_encoder(kind: str):
    def fit_fn(ctx, group, params, out_base, tkey):
        basis = fit_numeric(_group_cells(group), kind)
        payload = {"numeric_basis": basis.to_dict()}
        return payload, apply_fn(ctx, payload, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        basis = NumericBasis.from_dict(payload["numeric_basis"])
        values, missing = apply_numeric(basis, _group_cells(group))
        meta = {"numeric_basis": payload["numeric_basis"]}
        return _single(out_base, out_names[0], values, missing, meta)

    return fit_fn, apply_fn


def _categoric_encoder(encoding: str):
    def fit_fn(ctx, group, params, out_base, tkey):
        basis = fit_categoric(_group_cells(group), encoding)
        payload = {"categoric_basis": basis.to_dict()}
        return payload, apply_fn(ctx, payload, group, _multi_names(out_base, basis), out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        basis = CategoricBasis.from_dict(payload["categoric_basis"])
        arrays = apply_categoric(basis, _group_cells(group))
        missing = np.array([c is None for c in _group_cells(group)], dtype=bool)
        meta = {"categoric_basis": payload["categoric_basis"], "encoding": encoding}
        columns = list(zip(out_names, arrays))
        return _Group(out_base, columns, missing, meta)

    def _multi_names(out_base, basis):
        arrays = apply_categoric(basis, [])
        if len(arrays) == 1:
            return [out_base]
        return [f"{out_base}_{j}" for j in range(len(arrays))]

    return fit_fn, apply_fn


def _passthrough():
    def fit_fn(ctx, group, params, out_base, tkey):
        return {}, apply_fn(ctx, {}, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        cells = list(_group_cells(group))
        missing = np.array([c is None for c in cells], dtype=bool)
        return _single(out_base, out_names[0], cells, missing, {}, preserve=True)

    return fit_fn, apply_fn


def _passthrough_float():
    def fit_fn(ctx, group, params, out_base, tkey):
        return {}, apply_fn(ctx, {}, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        values, missing = _group_floats(group)
        return _single(out_base, out_names[0], values, missing, {}, preserve=True)

    return fit_fn, apply_fn


def _passthrough_vocab():
    def fit_fn(ctx, group, params, out_base, tkey):
        basis = fit_categoric(_group_cells(group), "passthrough")
        payload = {"categoric_basis": basis.to_dict()}
        return payload, apply_fn(ctx, payload, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        cells = list(_group_cells(group))
        missing = np.array([c is None for c in cells], dtype=bool)
        meta = {"categoric_basis": payload["categoric_basis"], "encoding": "passthrough"}
        return _single(out_base, out_names[0], cells, missing, meta, preserve=True)

    return fit_fn, apply_fn


def _stdbins():
    def fit_fn(ctx, group, params, out_base, tkey):
        bincount = int(params.get("bincount", 6))
        if bincount < 2:
            raise ConfigError("bincount must be at least 2")
        values, missing = _group_floats(group)
        present = values[~missing]
        if len(present):
            mean = float(np.mean(present))
            std = float(np.sqrt(np.mean((present - mean) ** 2)))
        else:
            mean, std = 0.0, 0.0
        payload = {"mean": mean, "std": std, "bincount": bincount}
        return payload, apply_fn(ctx, payload, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        values, missing = _group_floats(group)
        mean, std, bincount = payload["mean"], payload["std"], payload["bincount"]
        if std > 0.0:
            edges = _bin_edges(mean, std, bincount)
            codes = np.digitize(values, edges)
        else:
            codes = np.full(len(values), bincount // 2, dtype=np.int64)
        return _single(out_base, out_names[0], codes.astype(np.int64), missing)

    def _bin_edges(mean, std, bincount):
        if bincount % 2:
            offsets = [k + 0.5 for k in range(-(bincount // 2), bincount // 2)]
        else:
            offsets = list(range(-(bincount // 2 - 1), bincount // 2))
        return np.array([mean + std * k for k in offsets])

    return fit_fn, apply_fn


def _missing_marker():
    def fit_fn(ctx, group, params, out_base, tkey):
        return {}, apply_fn(ctx, {}, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        marker = group.missing.astype(np.int64)
        return _single(out_base, out_names[0], marker,
                       np.zeros(len(marker), dtype=bool))

    return fit_fn, apply_fn


def _noise_numeric():
    def fit_fn(ctx, group, params, out_base, tkey):
        resolved, randomized, raw = _resolve_noise_params(ctx, params, tkey)
        values, missing = _group_floats(group)
        present = values[~missing]
        if len(present):
            mean = float(np.mean(present))
            train_std = float(np.sqrt(np.mean((present - mean) ** 2)))
        else:
            train_std = 0.0
        payload = {
            "resolved": resolved,
            "params_raw": raw,
            "randomized_fields": randomized,
            "train_std": train_std,
        }
        protected = resolved.get("protected_feature")
        if protected:
            basis = fit_protected_numeric(values, missing, ctx.aligned_cells(protected))
            payload["protected"] = basis.to_dict()
        return payload, apply_fn(ctx, payload, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        values, missing = _group_floats(group)
        out = values.copy()
        gate = _effective_spec(ctx, payload, tkey)
        if gate is not None:
            spec, phase = gate
            pp = spec.phase_params(phase)
            sigma = pp["sigma"]
            if spec.rescale_sigmas:
                sigma = rescale_sigma_passthrough(sigma, payload["train_std"])
            mask = sample_bernoulli_mask(
                ctx.manager.op_sampler(tkey), len(values), pp["flip_prob"], missing
            )
            active = np.flatnonzero(mask)
            noise = sample_noise(
                ctx.manager.op_sampler(tkey), pp["distribution"], pp["mu"], sigma, len(active)
            )
            if payload.get("protected"):
                basis = ProtectedBasis.from_dict(payload["protected"])
                cells = _protected_cells(ctx, payload["resolved"], len(values))
                noise = noise * protected_ratio_vector(basis, cells, active)
            out = inject_numeric(values, mask, noise)
        return _single(out_base, out_names[0], out, missing, dict(group.meta),
                       preserve=group.preserve_missing)

    return fit_fn, apply_fn


def _noise_scaled():
    def fit_fn(ctx, group, params, out_base, tkey):
        resolved, randomized, raw = _resolve_noise_params(ctx, params, tkey)
        values, missing = _group_floats(group)
        panel = values[~missing]
        payload = {
            "resolved": resolved,
            "params_raw": raw,
            "randomized_fields": randomized,
            "mu_adjusted_train": None,
            "mu_adjusted_test": None,
            "adjust_degenerate_train": False,
            "adjust_degenerate_test": False,
        }
        adjustment = resolved.get("noise_scaling_bias_offset", True) and resolved.get(
            "rescale_sigmas", True
        )
        if adjustment and len(panel):
            spec = _spec_from(resolved)
            # calibration is skipped for phases that can never inject
            for phase in ("train", "test"):
                if not _phase_can_inject(resolved, randomized, phase):
                    continue
                pp = spec.phase_params(phase)
                mu_adj, degenerate = adjust_noise_mean(
                    panel, pp["mu"], pp["sigma"], pp["distribution"],
                    lambda p=phase: ctx.manager.calibration_sampler(tkey, p),
                )
                payload[f"mu_adjusted_{phase}"] = mu_adj
                payload[f"adjust_degenerate_{phase}"] = degenerate
        protected = resolved.get("protected_feature")
        if protected:
            basis = fit_protected_numeric(values, missing, ctx.aligned_cells(protected))
            payload["protected"] = basis.to_dict()
        return payload, apply_fn(ctx, payload, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        values, missing = _group_floats(group)
        out = values.copy()
        gate = _effective_spec(ctx, payload, tkey)
        if gate is not None:
            spec, phase = gate
            pp = spec.phase_params(phase)
            mu = pp["mu"]
            adjusted = payload.get(f"mu_adjusted_{phase}")
            if adjusted is not None:
                mu = adjusted
            mask = sample_bernoulli_mask(
                ctx.manager.op_sampler(tkey), len(values), pp["flip_prob"], missing
            )
            active = np.flatnonzero(mask)
            noise = sample_noise(
                ctx.manager.op_sampler(tkey), pp["distribution"], mu, pp["sigma"], len(active)
            )
            if payload.get("protected"):
                basis = ProtectedBasis.from_dict(payload["protected"])
                cells = _protected_cells(ctx, payload["resolved"], len(values))
                noise = noise * protected_ratio_vector(basis, cells, active)
            out[active] = values[active] + scale_noise_minmax(noise, values[active])
        return _single(out_base, out_names[0], out, missing, dict(group.meta),
                       preserve=group.preserve_missing)

    return fit_fn, apply_fn


def _codes_from_group(group: _Group, basis: CategoricBasis, encoding: str) -> np.ndarray:
    if encoding == "ordinal":
        return group.columns[0][1].astype(np.int64)
    if encoding == "boolean":
        return group.columns[0][1].astype(np.int64) + 1
    if encoding == "onehot":
        grid = np.column_stack([data for _, data in group.columns])
        return onehot_to_codes(basis, grid)
    if encoding == "binarized":
        grid = np.column_stack([data for _, data in group.columns])
        return bits_to_codes(basis, grid)
    if encoding == "passthrough":
        return np.array([basis.code_of(c) for c in _group_cells(group)], dtype=np.int64)
    raise ConfigError(f"flip noise cannot follow encoding {encoding!r}")


def _emit_codes(group: _Group, basis: CategoricBasis, encoding: str, codes: np.ndarray,
                out_names: list, out_base: str, flipped: np.ndarray) -> _Group:
    meta = dict(group.meta)
    if encoding == "ordinal":
        return _Group(out_base, [(out_names[0], codes)], group.missing, meta)
    if encoding == "boolean":
        return _Group(out_base, [(out_names[0], codes - 1)], group.missing, meta)
    if encoding == "onehot":
        grid = codes_to_onehot(basis, codes)
        cols = [(name, grid[:, j].copy()) for j, name in enumerate(out_names)]
        return _Group(out_base, cols, group.missing, meta)
    if encoding == "binarized":
        grid = codes_to_bits(basis, codes)
        cols = [(name, grid[:, j].copy()) for j, name in enumerate(out_names)]
        return _Group(out_base, cols, group.missing, meta)
    # passthrough: only flipped entries change, decoded through the vocabulary
    cells = list(_group_cells(group))
    for row in flipped:
        cells[row] = basis.value_of(int(codes[row]))
    return _Group(out_base, [(out_names[0], cells)], group.missing, meta,
                  preserve_missing=True)


def _noise_flip():
    def fit_fn(ctx, group, params, out_base, tkey):
        resolved, randomized, raw = _resolve_noise_params(ctx, params, tkey)
        basis_dict = group.meta.get("categoric_basis")
        if basis_dict is None:
            raise ConfigError(
                "flip noise requires an upstream categoric encoding with a fitted vocabulary"
            )
        encoding = group.meta.get("encoding", "ordinal")
        payload = {
            "resolved": resolved,
            "params_raw": raw,
            "randomized_fields": randomized,
            "categoric_basis": basis_dict,
            "encoding": encoding,
        }
        protected = resolved.get("protected_feature")
        if protected:
            basis = CategoricBasis.from_dict(basis_dict)
            codes = _codes_from_group(group, basis, encoding)
            pbasis = fit_protected_categoric(
                codes, len(basis.vocabulary), ctx.aligned_cells(protected)
            )
            payload["protected"] = pbasis.to_dict()
        names = [out_base] if len(group.columns) == 1 else [
            f"{out_base}_{j}" for j in range(len(group.columns))
        ]
        return payload, apply_fn(ctx, payload, group, names, out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        basis = CategoricBasis.from_dict(payload["categoric_basis"])
        encoding = payload["encoding"]
        codes = _codes_from_group(group, basis, encoding)
        gate = _effective_spec(ctx, payload, tkey)
        if gate is None:
            return _emit_codes(group, basis, encoding, codes, out_names, out_base,
                               np.array([], dtype=np.int64))
        spec, phase = gate
        pp = spec.phase_params(phase)
        n = len(codes)
        mask = sample_bernoulli_mask(ctx.manager.op_sampler(tkey), n, pp["flip_prob"],
                                     group.missing)
        active = np.flatnonzero(mask)
        if spec.direct_flip and encoding == "boolean":
            out01 = flip_boolean_direct(codes - 1, mask)
            new_codes = out01 + 1
        elif spec.swap_noise:
            sampler = ctx.manager.op_sampler(tkey)
            new_codes = codes.copy()
            if n >= 2 and len(active):
                picks = sampler.bounded_ints(len(active), n)
                new_codes[active] = codes[picks]
            elif n < 2 and len(active):
                warnings.warn("swap noise needs at least two rows; entries unchanged")
        else:
            sampler = ctx.manager.op_sampler(tkey)
            vocab_size = len(basis.vocabulary)
            if pp["weighted"]:
                weights = np.asarray(basis.frequencies, dtype=np.float64)
            else:
                weights = np.ones(vocab_size, dtype=np.float64)
            segment_weights = None
            if payload.get("protected") and pp["weighted"]:
                pbasis = ProtectedBasis.from_dict(payload["protected"])
                cells = _protected_cells(ctx, payload["resolved"], n)
                segment_weights = protected_weight_matrix(pbasis, weights, cells, n)
            new_codes = weighted_flip(codes, vocab_size, weights, mask, sampler,
                                      segment_weights)
        flipped = active[new_codes[active] != codes[active]] if len(active) else active
        return _emit_codes(group, basis, encoding, new_codes, out_names, out_base, flipped)

    return fit_fn, apply_fn


def _noise_swap():
    def fit_fn(ctx, group, params, out_base, tkey):
        resolved, randomized, raw = _resolve_noise_params(ctx, params, tkey)
        payload = {"resolved": resolved, "params_raw": raw, "randomized_fields": randomized}
        return payload, apply_fn(ctx, payload, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        name, data = group.columns[0]
        out = list(data) if not isinstance(data, np.ndarray) else data.copy()
        gate = _effective_spec(ctx, payload, tkey)
        if gate is not None:
            spec, phase = gate
            pp = spec.phase_params(phase)
            mask = sample_bernoulli_mask(ctx.manager.op_sampler(tkey), len(group.missing),
                                         pp["flip_prob"], group.missing)
            out = swap_noise(out, mask, ctx.manager.op_sampler(tkey))
        return _Group(out_base, [(out_names[0], out)], group.missing, dict(group.meta),
                      preserve_missing=group.preserve_missing)

    return fit_fn, apply_fn


def _noise_mask():
    def fit_fn(ctx, group, params, out_base, tkey):
        resolved, randomized, raw = _resolve_noise_params(ctx, params, tkey)
        payload = {"resolved": resolved, "params_raw": raw, "randomized_fields": randomized}
        return payload, apply_fn(ctx, payload, group, [out_base], out_base, tkey)

    def apply_fn(ctx, payload, group, out_names, out_base, tkey):
        name, data = group.columns[0]
        gate = _effective_spec(ctx, payload, tkey)
        if gate is None:
            out = list(data) if not isinstance(data, np.ndarray) else data.copy()
        else:
            spec, phase = gate
            pp = spec.phase_params(phase)
            mask = sample_bernoulli_mask(ctx.manager.op_sampler(tkey), len(group.missing),
                                         pp["flip_prob"], group.missing)
            if isinstance(data, np.ndarray):
                out = mask_noise(data, mask, spec.mask_value)
            else:
                out = list(data)
                for row in np.flatnonzero(mask):
                    out[row] = float(spec.mask_value)
        return _Group(out_base, [(out_names[0], out)], group.missing, dict(group.meta),
                      preserve_missing=group.preserve_missing)

    return fit_fn, apply_fn


_TRANSFORMS = {
    "zscore": _numeric_encoder("zscore"),
    "minmax": _numeric_encoder("minmax"),
    "retain": _numeric_encoder("retain"),
    "boolean": _categoric_encoder("boolean"),
    "ordinal": _categoric_encoder("ordinal"),
    "onehot": _categoric_encoder("onehot"),
    "binarized": _categoric_encoder("binarized"),
    "passthrough": _passthrough(),
    "passthrough_float": _passthrough_float(),
    "passthrough_vocab": _passthrough_vocab(),
    "stdbins": _stdbins(),
    "missing_marker": _missing_marker(),
    "noise_numeric": _noise_numeric(),
    "noise_scaled": _noise_scaled(),
    "noise_flip": _noise_flip(),
    "noise_swap": _noise_swap(),
    "noise_mask": _noise_mask(),
}


# -- fitting -----------------------------------------------------------------


def _automation_root(kind: str, powertransform: str | None) -> str:
    if powertransform is None:
        return _AUTOMATION_BASE[kind]
    prefix, digit = powertransform[:2], powertransform[2:]
    return prefix + _POWERTRANSFORM_STEMS[digit][kind]


def _label_root(kind: str) -> str:
    return "excl" if kind == "numeric" else "ord3"


def _dry_walk(catalog, assignments, column, root, used_names):
    """Structural pass: step skeleton without fitting or sampling."""
    steps = []

    class _Ref:
        __slots__ = ("base",)

        def __init__(self, base):
            self.base = base

    def executor(category, in_ref):
        kind, defaults = catalog.resolve_entry(category)
        accepted = KIND_PARAMS[kind]
        resolve_params(category, column, in_ref.base, assignments, defaults, accepted)
        out_base = suffixed_name(in_ref.base, category, used_names)
        used_names.add(out_base)
        steps.append((kind, category, in_ref.base, out_base))
        return _Ref(out_base)

    apply_root_category(catalog, root, _Ref(column), executor)
    return steps


def _fit_column(ctx, catalog, assignments, column, root, kind, cells, used_names):
    plan = ColumnPlan(input_column=column, root=root, kind=kind)
    raw = _raw_group(column, cells)
    groups = {column: raw}

    def executor(category, in_group):
        tkind, defaults = catalog.resolve_entry(category)
        accepted = KIND_PARAMS[tkind]
        params = resolve_params(category, column, in_group.base, assignments, defaults, accepted)
        out_base = suffixed_name(in_group.base, category, used_names)
        used_names.add(out_base)
        tkey = _transform_key(column, len(plan.steps))
        fit_fn, _ = _TRANSFORMS[tkind]
        payload, out_group = fit_fn(ctx, in_group, params, out_base, tkey)
        plan.steps.append(
            AppliedStep(
                category=category,
                kind=tkind,
                input_base=in_group.base,
                output_base=out_base,
                output_columns=[name for name, _ in out_group.columns],
                payload=payload,
            )
        )
        groups[out_base] = out_group
        return out_group

    surviving = apply_root_category(catalog, root, raw, executor)
    plan.output_columns = [name for g in surviving for name, _ in g.columns]
    return plan, [groups[g.base] for g in surviving]


def _replay_column(ctx, plan: ColumnPlan, cells):
    raw = _raw_group(plan.input_column, cells)
    groups = {plan.input_column: raw}
    for idx, step in enumerate(plan.steps):
        in_group = groups[step.input_base]
        _, apply_fn = _TRANSFORMS[step.kind]
        tkey = _transform_key(plan.input_column, idx)
        out_group = apply_fn(ctx, step.payload, in_group, step.output_columns,
                             step.output_base, tkey)
        groups[step.output_base] = out_group
    return groups


def _collect_columns(plan: ColumnPlan, groups: dict) -> list:
    """(name, cells) for the plan's surviving output columns, in order."""
    by_name = {}
    for group in groups.values():
        for name, data in group.columns:
            by_name[name] = (data, group.missing, group.preserve_missing)
    out = []
    for name in plan.output_columns:
        data, missing, preserve = by_name[name]
        if isinstance(data, np.ndarray):
            cells = [float(v) for v in data]
            if preserve:
                cells = [None if m else c for c, m in zip(cells, missing)]
        else:
            cells = list(data)
        out.append((name, cells))
    return out


def fit(
    train: DataTable,
    config: dict | FitConfig | None = None,
    plan: SamplingPlan | None = None,
    test: DataTable | None = None,
) -> FitResult:
    cfg = config if isinstance(config, FitConfig) else FitConfig.from_dict(config)
    plan = plan or SamplingPlan()
    catalog = builtin_catalog()
    catalog.update_from_config(cfg.transformdict, cfg.processdict)
    assignments = ParamAssignments.from_config(cfg.assignparam)

    if cfg.labels_column is not None and not train.has_column(cfg.labels_column):
        raise ConfigError(f"labels_column {cfg.labels_column!r} not found in training data")
    assigned_roots: dict[str, str] = {}
    for category, columns in cfg.assigncat.items():
        if isinstance(columns, str):
            columns = [columns]
        if not catalog.has_root(category):
            raise ConfigError(f"assigncat names unknown root category {category!r}")
        for col in columns:
            if not train.has_column(col):
                raise ConfigError(f"assigncat targets missing column {col!r}")
            if col == cfg.labels_column:
                raise ConfigError(
                    f"assigncat may not target the label column {col!r}; labels never receive noise"
                )
            assigned_roots[col] = category

    manager = StreamManager(plan)

    # validation rows come out before anything is fitted
    n = train.n_rows
    k_val = int(n * cfg.validation_ratio + 1e-9)
    positions = list(range(n))
    val_positions: list[int] = []
    if k_val > 0:
        sampler = manager.utility_sampler("validation_split")
        pool = list(range(n))
        for i in range(k_val):
            j = i + sampler.bounded_int(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        val_positions = sorted(pool[:k_val])
        in_val = set(val_positions)
        positions = [p for p in range(n) if p not in in_val]
    # statistics are fitted in original row order (keeps recomputation exact);
    # the shuffle permutes the prepared output at the end
    train_sub = train.take(positions)
    val_sub = train.take(val_positions) if val_positions else None

    schema: dict[str, str] = {}
    roots: dict[str, str] = {}
    for col in train.column_names:
        kind = infer_feature_kind(train_sub.column(col)).value
        schema[col] = kind
        if col == cfg.labels_column:
            roots[col] = _label_root(kind)
        else:
            roots[col] = assigned_roots.get(col) or _automation_root(kind, cfg.powertransform)

    # structural pass first so every noise transform is registered up front
    dry_names: set = set(train.column_names)
    noise_keys = []
    for col in sorted(train.column_names):
        for idx, (tkind, _, _, _) in enumerate(
            _dry_walk(catalog, assignments, col, roots[col], dry_names)
        ):
            if tkind in NOISE_KINDS:
                noise_keys.append(_transform_key(col, idx))
    for key in noise_keys:
        manager.register_transform(key)

    ctx = _Ctx(manager, "train", lambda c: train_sub.column(c) if train_sub.has_column(c) else None,
               fitting=True)
    used_names: set = set(train.column_names)
    plans: dict[str, ColumnPlan] = {}
    fitted_columns: dict[str, list] = {}
    for col in sorted(train.column_names):
        column_plan, groups = _fit_column(
            ctx, catalog, assignments, col, roots[col], schema[col],
            train_sub.column(col), used_names
        )
        plans[col] = column_plan
        collected = []
        by_name = {}
        for g in groups:
            for name, data in g.columns:
                by_name[name] = (data, g.missing, g.preserve_missing)
        for name in column_plan.output_columns:
            data, missing, preserve = by_name[name]
            if isinstance(data, np.ndarray):
                cells = [float(v) for v in data]
                if preserve:
                    cells = [None if m else c for c, m in zip(cells, missing)]
            else:
                cells = list(data)
            collected.append((name, cells))
        fitted_columns[col] = collected

    prepared_train = DataTable(
        {name: cells for col in train.column_names for name, cells in fitted_columns[col]},
        row_index=train_sub.row_index,
    )
    if cfg.shuffletrain and prepared_train.n_rows > 1:
        order = manager.utility_sampler("shuffle").shuffled(list(range(prepared_train.n_rows)))
        prepared_train = prepared_train.take(order)

    basis = TransformBasis(
        input_columns=list(train.column_names),
        label_column=cfg.labels_column,
        column_plans=plans,
        shuffletrain=cfg.shuffletrain,
        validation_ratio=cfg.validation_ratio,
        validation_row_index=[train.row_index[p] for p in val_positions],
        transformdict=cfg.transformdict,
        processdict=cfg.processdict,
    )
    for col, column_plan in plans.items():
        column_plan.kind = schema[col]

    n_train_basis = len(positions)
    n_test_basis = test.n_rows if test is not None else n_train_basis
    costs, transform_count = _op_costs(basis, n_train_basis, n_test_basis)
    basis.seed_report = compute_seed_report(
        costs, transform_count, n_train_basis, n_test_basis,
        plan.stochastic_count_safety_factor,
    )

    prepared_val = None
    if val_sub is not None:
        prepared_val = _prepare(basis, val_sub, "test", manager)
    prepared_test = None
    if test is not None:
        prepared_test = _prepare(basis, test, "test", manager)

    return FitResult(
        train=prepared_train,
        validation=prepared_val,
        test=prepared_test,
        basis=basis,
        ops_executed=manager.ops_executed,
        seeds_consumed=manager.seeds_consumed,
    )


# -- application --------------------------------------------------------------


def _prepare(basis: TransformBasis, table: DataTable, mode: str, manager: StreamManager) -> DataTable:
    ctx = _Ctx(manager, mode, lambda c: table.column(c) if table.has_column(c) else None,
               fitting=False)
    columns: dict[str, list] = {}
    ordered: list[str] = []
    for col in sorted(basis.column_plans):
        if col == basis.label_column and not table.has_column(col):
            continue
        plan = basis.plan_for(col)
        groups = _replay_column(ctx, plan, table.column(col))
        for name, cells in _collect_columns(plan, groups):
            columns[name] = cells
    for col in basis.input_columns:
        if col == basis.label_column and not table.has_column(col):
            continue
        ordered.extend(basis.plan_for(col).output_columns)
    return DataTable({name: columns[name] for name in ordered}, row_index=table.row_index)


def apply(
    basis: TransformBasis,
    table: DataTable,
    mode: str = "test",
    plan: SamplingPlan | None = None,
) -> DataTable:
    prepared, _ = apply_with_stats(basis, table, mode, plan)
    return prepared


def apply_with_stats(
    basis: TransformBasis,
    table: DataTable,
    mode: str = "test",
    plan: SamplingPlan | None = None,
) -> tuple[DataTable, dict]:
    if mode not in TRAINDATA_MODES:
        raise ConfigError(f"unknown traindata mode: {mode!r}")
    plan = plan or SamplingPlan()
    missing = [c for c in basis.required_columns() if not table.has_column(c)]
    if missing:
        raise SchemaError(f"data is missing fitted schema columns: {', '.join(sorted(missing))}")
    known = set(basis.input_columns)
    for plan_col in basis.column_plans.values():
        protected = {
            step.payload.get("resolved", {}).get("protected_feature")
            for step in plan_col.steps
        }
        known.update(p for p in protected if p)
    extra = [c for c in table.column_names if c not in known]
    if extra:
        warnings.warn(f"ignoring columns not in fitted schema: {', '.join(extra)}")
    manager = StreamManager(plan)
    for key in basis.noise_step_keys():
        manager.register_transform(key)
    prepared = _prepare(basis, table, mode, manager)
    stats = {"ops_executed": manager.ops_executed, "seeds_consumed": manager.seeds_consumed}
    return prepared, stats


def augment(
    basis: TransformBasis,
    table: DataTable,
    spec: AugmentSpec,
    plan: SamplingPlan | None = None,
) -> DataTable:
    """(count+1) copies of the prepared training data, each with fresh noise.

    Integer-typed counts make the first duplicate the no-noise copy. The
    concatenation is collectively shuffled when the fitted configuration has
    shuffling enabled; row identifiers are strided per copy so duplicates
    stay distinguishable.
    """
    plan = plan or SamplingPlan()
    manager = StreamManager(plan)
    for key in basis.noise_step_keys():
        manager.register_transform(key)
    stride = (max(table.row_index) + 1) if table.n_rows else 0
    copies = []
    for copy_idx in range(spec.count + 1):
        if copy_idx == 1 and not spec.all_noisy:
            mode = "train_no_noise"
        else:
            mode = "train"
        prepared = _prepare(basis, table, mode, manager)
        copies.append(
            DataTable(
                {name: prepared.column(name) for name in prepared.column_names},
                row_index=[i + copy_idx * stride for i in prepared.row_index],
            )
        )
    names = copies[0].column_names
    stacked = {name: [] for name in names}
    row_index: list[int] = []
    for copy in copies:
        for name in names:
            stacked[name].extend(copy.column(name))
        row_index.extend(copy.row_index)
    combined = DataTable(stacked, row_index=row_index)
    if basis.shuffletrain and combined.n_rows > 1:
        order = manager.utility_sampler("augment_shuffle").shuffled(list(range(combined.n_rows)))
        combined = combined.take(order)
    return combined


# -- seed budgeting ------------------------------------------------------------


def _phase_can_inject(resolved: dict, randomized: list, phase: str) -> bool:
    """Whether a phase can ever fire noise: flag set and flip probability nonzero.

    Randomized flip probabilities count as potentially nonzero.
    """
    flag = resolved.get("trainnoise", True) if phase == "train" else resolved.get(
        "testnoise", False
    )
    if not flag:
        return False
    if "flip_prob" in randomized or "test_flip_prob" in randomized:
        return True
    return _phase_flip(resolved, phase) > 0.0


def _second_op(kind: str, resolved: dict) -> bool:
    if kind == "noise_mask":
        return False
    if kind == "noise_flip" and resolved.get("direct_flip", False):
        return False
    return True


def _phase_flip(resolved: dict, phase: str) -> float:
    if phase == "train":
        return resolved.get("flip_prob", 0.03)
    test_flip = resolved.get("test_flip_prob")
    return test_flip if test_flip is not None else resolved.get("flip_prob", 0.03)


def _op_costs(basis: TransformBasis, n_train: int, n_test: int):
    costs: list[OpCost] = []
    transform_count = 0
    for col in sorted(basis.column_plans):
        plan = basis.column_plans[col]
        for idx, step in enumerate(plan.steps):
            if step.kind not in NOISE_KINDS:
                continue
            transform_count += 1
            key = _transform_key(col, idx)
            resolved = step.payload["resolved"]
            randomized = step.payload.get("randomized_fields", [])
            for _ in randomized:
                costs.append(OpCost("train", 1, False, key))
            if step.kind == "noise_scaled":
                adjustment = resolved.get("noise_scaling_bias_offset", True) and resolved.get(
                    "rescale_sigmas", True
                )
                if adjustment:
                    for phase in ("train", "test"):
                        if _phase_can_inject(resolved, randomized, phase):
                            costs.append(OpCost("train", 0, False, key, counts_toward_bulk=False))
                            costs.append(OpCost("train", 0, False, key, counts_toward_bulk=False))
            for phase, rows in (("train", n_train), ("test", n_test)):
                fires = resolved.get("trainnoise", True) if phase == "train" else resolved.get(
                    "testnoise", False
                )
                if not fires:
                    continue
                if phase == "test" and randomized and not resolved.get("retain_basis", False):
                    for _ in randomized:
                        costs.append(OpCost("test", 1, False, key))
                costs.append(OpCost(phase, rows, False, key))
                if _second_op(step.kind, resolved):
                    flip = _phase_flip(resolved, phase)
                    costs.append(OpCost(phase, rows * flip, True, key))
    return costs, transform_count


# -- persistence ---------------------------------------------------------------


def save_basis(basis: TransformBasis, path) -> None:
    payload = json.dumps(basis.to_dict(), sort_keys=True, ensure_ascii=False,
                         separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(payload)
        handle.write("\n")


def load_basis(path) -> TransformBasis:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise BasisFormatError(f"{path}: not a valid basis file: {exc}") from exc
    if not isinstance(data, dict):
        raise BasisFormatError(f"{path}: not a valid basis file")
    return TransformBasis.from_dict(data)


def orig_headers_mode(prepared: DataTable, basis: TransformBasis) -> DataTable:
    """Restore original input headers for passthrough-style plans.

    Valid only when every input column maps to exactly one output column;
    multi-column encodings make the mapping non-bijective and are rejected.
    """
    rename: dict[str, str] = {}
    for col in basis.input_columns:
        plan = basis.plan_for(col)
        outputs = [name for name in plan.output_columns if prepared.has_column(name)]
        if not outputs and col == basis.label_column:
            continue
        if len(outputs) != 1:
            raise ConfigError(
                f"original headers require a one-to-one plan; column {col!r} "
                f"produced {len(outputs)} outputs"
            )
        rename[outputs[0]] = col
    extra = [name for name in prepared.column_names if name not in rename]
    if extra:
        raise ConfigError(
            f"original headers require a one-to-one plan; unmapped outputs: {extra}"
        )
    columns = {rename[name]: prepared.column(name) for name in prepared.column_names}
    ordered = [c for c in basis.input_columns if c in columns]
    return DataTable({c: columns[c] for c in ordered}, row_index=prepared.row_index)
