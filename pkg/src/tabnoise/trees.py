"""Transform composition via family-tree primitives.

A root category assigned to an input column names a family tree. The four
upstream primitives run against the input column in fixed order; the two
offspring-bearing ones then recurse into the applied category's own tree,
where the downstream primitives play the corresponding upstream roles:

    primitive      applied to   column action  downstream offspring
    parents        input        replace        yes
    siblings       input        supplement     yes
    auntsuncles    input        replace        no
    cousins        input        supplement     no
    children       offspring    replace        yes
    niecesnephews  offspring    supplement     yes
    coworkers      offspring    replace        no
    friends        offspring    supplement     no

An output survives into the returned column set unless a replace-action
primitive was applied to it. Entries within one primitive list execute left
to right; recursion is capped to guard against cyclic definitions.

Process entries bind categories to transform functions, directly or through
``functionpointer`` inheritance, with ``defaultparams`` at the lowest
precedence of the five-level parameter assignment scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError

UPSTREAM_PRIMITIVES = (
    ("parents", True, True),
    ("siblings", False, True),
    ("auntsuncles", True, False),
    ("cousins", False, False),
)

DOWNSTREAM_PRIMITIVES = (
    ("children", True, True),
    ("niecesnephews", False, True),
    ("coworkers", True, False),
    ("friends", False, False),
)

PRIMITIVE_NAMES = tuple(name for name, _, _ in UPSTREAM_PRIMITIVES + DOWNSTREAM_PRIMITIVES)

ROOT_PREFIX_POLICY = {
    "DP": (True, False),  # noise to train only
    "DT": (False, True),  # noise to test only
    "DB": (True, True),  # noise to both
}

DEPTH_LIMIT = 32


@dataclass
class FamilyTree:
    parents: tuple = ()
    siblings: tuple = ()
    auntsuncles: tuple = ()
    cousins: tuple = ()
    children: tuple = ()
    niecesnephews: tuple = ()
    coworkers: tuple = ()
    friends: tuple = ()

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, tuple(getattr(self, f.name)))

    @classmethod
    def from_dict(cls, data: dict) -> "FamilyTree":
        unknown = set(data) - set(PRIMITIVE_NAMES)
        if unknown:
            raise ConfigError(f"unknown family tree primitives: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return {f.name: list(getattr(self, f.name)) for f in fields(self)}


@dataclass
class ProcessEntry:
    category: str
    transform: str | None = None
    functionpointer: str | None = None
    defaultparams: dict = field(default_factory=dict)


# Parameters each transform kind accepts. Category-specific assignments of
# anything else are configuration errors; global assignments are ignored.
_NOISE_COMMON = ("trainnoise", "testnoise", "flip_prob", "test_flip_prob", "retain_basis")
KIND_PARAMS = {
    "zscore": (),
    "minmax": (),
    "retain": (),
    "boolean": (),
    "ordinal": (),
    "onehot": (),
    "binarized": (),
    "passthrough": (),
    "passthrough_float": (),
    "passthrough_vocab": (),
    "stdbins": ("bincount",),
    "missing_marker": (),
    "noise_numeric": _NOISE_COMMON
    + ("sigma", "test_sigma", "mu", "test_mu", "noisedistribution",
       "test_noisedistribution", "rescale_sigmas", "protected_feature"),
    "noise_scaled": _NOISE_COMMON
    + ("sigma", "test_sigma", "mu", "test_mu", "noisedistribution",
       "test_noisedistribution", "rescale_sigmas", "noise_scaling_bias_offset",
       "protected_feature"),
    "noise_flip": _NOISE_COMMON
    + ("weighted", "test_weighted", "direct_flip", "swap_noise", "protected_feature"),
    "noise_swap": _NOISE_COMMON,
    "noise_mask": _NOISE_COMMON + ("mask_value",),
}

NOISE_KINDS = ("noise_numeric", "noise_scaled", "noise_flip", "noise_swap", "noise_mask")


class TransformCatalog:
    """Category definitions: family trees plus process entries."""

    def __init__(self):
        self._trees: dict[str, FamilyTree] = {}
        self._process: dict[str, ProcessEntry] = {}

    def register_tree(self, category: str, tree: FamilyTree) -> None:
        self._trees[category] = tree

    def register_entry(self, entry: ProcessEntry) -> None:
        self._process[entry.category] = entry

    def register_category(
        self,
        category: str,
        transform: str | None = None,
        functionpointer: str | None = None,
        defaultparams: dict | None = None,
        tree: dict | None = None,
    ) -> None:
        """Library-embedder registration hook for custom categories."""
        if transform is not None and transform not in KIND_PARAMS:
            raise ConfigError(f"unknown transform kind: {transform!r}")
        self.register_entry(
            ProcessEntry(category, transform, functionpointer, dict(defaultparams or {}))
        )
        if tree is not None:
            self.register_tree(category, FamilyTree.from_dict(tree))

    def has_root(self, category: str) -> bool:
        return category in self._trees

    def tree(self, category: str) -> FamilyTree:
        try:
            return self._trees[category]
        except KeyError:
            raise ConfigError(f"unknown root category: {category!r}") from None

    def tree_or_empty(self, category: str) -> FamilyTree:
        return self._trees.get(category) or FamilyTree()

    def resolve_entry(self, category: str) -> tuple[str, dict]:
        """(transform kind, merged defaultparams), chasing functionpointers."""
        chain = []
        current = category
        while True:
            entry = self._process.get(current)
            if entry is None:
                raise ConfigError(f"unknown transform category: {current!r}")
            chain.append(entry)
            if entry.transform is not None:
                break
            if entry.functionpointer is None:
                raise ConfigError(
                    f"category {current!r} has neither a transform nor a functionpointer"
                )
            current = entry.functionpointer
            if len(chain) > DEPTH_LIMIT:
                raise ConfigError(f"functionpointer cycle at {category!r}")
        kind = chain[-1].transform
        defaults: dict = {}
        for entry in reversed(chain):
            defaults.update(entry.defaultparams)
        return kind, defaults

    def update_from_config(self, transformdict: dict | None, processdict: dict | None) -> None:
        """Apply user ``transformdict``/``processdict`` sections.

        Config-declared categories inherit an existing transform through
        ``functionpointer``; arbitrary transform code is only available to
        library embedders via :meth:`register_category`.
        """
        for category, spec in (processdict or {}).items():
            pointer = spec.get("functionpointer")
            if pointer is None:
                raise ConfigError(
                    f"processdict entry {category!r} must name a functionpointer"
                )
            self.register_entry(
                ProcessEntry(
                    category,
                    functionpointer=pointer,
                    defaultparams=dict(spec.get("defaultparams", {})),
                )
            )
        for category, spec in (transformdict or {}).items():
            self.register_tree(category, FamilyTree.from_dict(spec))


def apply_root_category(catalog: TransformCatalog, root: str, input_ref, executor):
    """Evaluate a root category's tree; returns surviving output refs in order.

    ``executor(category, ref)`` applies one tree category to an upstream ref
    and returns the output ref; the walker handles ordering, recursion, and
    replace/supplement column retention.
    """
    tree = catalog.tree(root)
    results = []
    input_retained = True
    for name, replaces, offspring in UPSTREAM_PRIMITIVES:
        for category in getattr(tree, name):
            out_ref = executor(category, input_ref)
            if replaces:
                input_retained = False
            if offspring:
                results.extend(_descend(catalog, category, out_ref, executor, 1))
            else:
                results.append(out_ref)
    if input_retained:
        results.insert(0, input_ref)
    return results


def _descend(catalog: TransformCatalog, category: str, ref, executor, depth: int):
    if depth > DEPTH_LIMIT:
        raise ConfigError(
            f"family tree recursion exceeded depth {DEPTH_LIMIT} at {category!r}; "
            "check for cyclic definitions"
        )
    tree = catalog.tree_or_empty(category)
    results = []
    retained = True
    for name, replaces, offspring in DOWNSTREAM_PRIMITIVES:
        for child in getattr(tree, name):
            out_ref = executor(child, ref)
            if replaces:
                retained = False
            if offspring:
                results.extend(_descend(catalog, child, out_ref, executor, depth + 1))
            else:
                results.append(out_ref)
    if retained:
        results.insert(0, ref)
    return results


@dataclass
class ParamAssignments:
    """The assignparam structure: global, per-category defaults, per-column."""

    global_assignparam: dict = field(default_factory=dict)
    default_assignparam: dict = field(default_factory=dict)
    per_category: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, assignparam: dict | None) -> "ParamAssignments":
        assignparam = assignparam or {}
        out = cls()
        for key, value in assignparam.items():
            if key == "global_assignparam":
                out.global_assignparam = dict(value)
            elif key == "default_assignparam":
                out.default_assignparam = {cat: dict(v) for cat, v in value.items()}
            else:
                out.per_category[key] = {col: dict(v) for col, v in value.items()}
        return out

    def to_config(self) -> dict:
        out: dict = {}
        if self.global_assignparam:
            out["global_assignparam"] = dict(self.global_assignparam)
        if self.default_assignparam:
            out["default_assignparam"] = {k: dict(v) for k, v in self.default_assignparam.items()}
        for cat, cols in self.per_category.items():
            out[cat] = {col: dict(v) for col, v in cols.items()}
        return out


def resolve_params(
    category: str,
    input_column: str,
    derived_column: str,
    assignments: ParamAssignments,
    defaults: dict,
    accepted: tuple,
) -> dict:
    """Merge parameters by precedence (lowest to highest): transform defaults,
    global_assignparam, default_assignparam for the category, the category as
    applied to the input column, the category as applied to the derived
    column with suffix appenders.

    Unknown names are dropped silently at the global level and rejected at
    the category-specific levels.
    """
    merged = dict(defaults)
    for key, value in assignments.global_assignparam.items():
        if key in accepted:
            merged[key] = value
    for key, value in assignments.default_assignparam.get(category, {}).items():
        if key not in accepted:
            raise ConfigError(
                f"parameter {key!r} is not accepted by category {category!r}"
            )
        merged[key] = value
    per_column = assignments.per_category.get(category, {})
    column_keys = [input_column]
    if derived_column != input_column:
        column_keys.append(derived_column)
    for column_key in column_keys:
        spec = per_column.get(column_key)
        if not spec:
            continue
        for key, value in spec.items():
            if key not in accepted:
                raise ConfigError(
                    f"parameter {key!r} is not accepted by category {category!r} "
                    f"(column {column_key!r})"
                )
            merged[key] = value
    return merged


# -- builtin catalog ---------------------------------------------------------

_ENCODER_ROOTS = {
    "nmbr": "zscore",
    "mnmx": "minmax",
    "retn": "retain",
    "bnry": "boolean",
    "ord3": "ordinal",
    "onht": "onehot",
    "1010": "binarized",
    "excl": "passthrough",
    "exclf": "passthrough_float",
    "pvoc": "passthrough_vocab",
}

# stem -> (upstream encoder category, noise transform kind, Table-default params)
_NOISE_STEMS = {
    "nb": ("nmbr", "noise_numeric",
           {"flip_prob": 0.03, "sigma": 0.06, "test_sigma": 0.03, "mu": 0.0,
            "test_mu": 0.0, "noisedistribution": "normal",
            "test_noisedistribution": "normal", "rescale_sigmas": False,
            "retain_basis": False, "protected_feature": None}),
    "mm": ("mnmx", "noise_scaled",
           {"flip_prob": 0.03, "sigma": 0.03, "test_sigma": 0.02, "mu": 0.0,
            "test_mu": 0.0, "noisedistribution": "normal",
            "test_noisedistribution": "normal", "rescale_sigmas": True,
            "noise_scaling_bias_offset": True, "retain_basis": False,
            "protected_feature": None}),
    "rt": ("retn", "noise_scaled",
           {"flip_prob": 0.03, "sigma": 0.03, "test_sigma": 0.02, "mu": 0.0,
            "test_mu": 0.0, "noisedistribution": "normal",
            "test_noisedistribution": "normal", "rescale_sigmas": True,
            "noise_scaling_bias_offset": True, "retain_basis": False,
            "protected_feature": None}),
    "bn": ("bnry", "noise_flip",
           {"flip_prob": 0.03, "test_flip_prob": 0.01, "weighted": True,
            "test_weighted": True, "retain_basis": False, "protected_feature": None}),
    "od": ("ord3", "noise_flip",
           {"flip_prob": 0.03, "test_flip_prob": 0.01, "weighted": True,
            "test_weighted": True, "retain_basis": False, "protected_feature": None}),
    "oh": ("onht", "noise_flip",
           {"flip_prob": 0.03, "test_flip_prob": 0.01, "weighted": True,
            "test_weighted": True, "swap_noise": False, "retain_basis": False,
            "protected_feature": None}),
    "10": ("1010", "noise_flip",
           {"flip_prob": 0.03, "test_flip_prob": 0.01, "weighted": True,
            "test_weighted": True, "swap_noise": False, "retain_basis": False,
            "protected_feature": None}),
    "ne": ("exclf", "noise_numeric",
           {"flip_prob": 0.03, "sigma": 0.06, "test_sigma": 0.03, "mu": 0.0,
            "test_mu": 0.0, "noisedistribution": "normal",
            "test_noisedistribution": "normal", "rescale_sigmas": True,
            "retain_basis": False, "protected_feature": None}),
    "pc": ("pvoc", "noise_flip",
           {"flip_prob": 0.03, "test_flip_prob": 0.01, "weighted": True,
            "test_weighted": True, "retain_basis": False, "protected_feature": None}),
    "se": ("excl", "noise_swap",
           {"flip_prob": 0.03, "test_flip_prob": 0.01, "retain_basis": False}),
    "sk": ("excl", "noise_mask",
           {"flip_prob": 0.03, "test_flip_prob": 0.01, "mask_value": 0.0,
            "retain_basis": False}),
}

# Passthrough-style stems keep original data untouched apart from noise:
# their trees carry no missing-data marker aggregation.
_PASSTHROUGH_STEMS = ("ne", "pc", "se", "sk")

NOISE_ROOTS = tuple(
    prefix + stem for prefix in ROOT_PREFIX_POLICY for stem in _NOISE_STEMS
)


def builtin_catalog() -> TransformCatalog:
    catalog = TransformCatalog()
    for category, kind in _ENCODER_ROOTS.items():
        catalog.register_entry(ProcessEntry(category, transform=kind))
        if category in ("excl", "exclf", "pvoc"):
            tree = FamilyTree(auntsuncles=(category,))
        else:
            tree = FamilyTree(parents=(category,), cousins=("NArw",))
        catalog.register_tree(category, tree)
    catalog.register_entry(ProcessEntry("NArw", transform="missing_marker"))
    catalog.register_tree("NArw", FamilyTree(cousins=("NArw",)))
    catalog.register_entry(
        ProcessEntry("bsor", transform="stdbins", defaultparams={"bincount": 6})
    )
    catalog.register_tree("bsor", FamilyTree(parents=("bsor",), cousins=("NArw",)))

    for stem, (encoder, kind, table_defaults) in _NOISE_STEMS.items():
        for prefix, (trainnoise, testnoise) in ROOT_PREFIX_POLICY.items():
            root = prefix + stem
            enc = root + "e"
            flags = {"trainnoise": trainnoise, "testnoise": testnoise}
            if prefix == "DP":
                catalog.register_entry(
                    ProcessEntry(root, transform=kind, defaultparams={**table_defaults, **flags})
                )
            else:
                # DT/DB inherit the DP entry via functionpointer with flag overrides
                catalog.register_entry(
                    ProcessEntry(root, functionpointer="DP" + stem, defaultparams=flags)
                )
            catalog.register_entry(ProcessEntry(enc, functionpointer=encoder))
            narw = () if stem in _PASSTHROUGH_STEMS else ("NArw",)
            catalog.register_tree(root, FamilyTree(parents=(enc,), cousins=narw))
            catalog.register_tree(enc, FamilyTree(parents=(enc,), coworkers=(root,)))
    return catalog
