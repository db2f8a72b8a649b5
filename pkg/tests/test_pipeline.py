import json
import warnings

import numpy as np
import pytest

from tabnoise.errors import BasisFormatError, ConfigError, SchemaError
from tabnoise.pipeline import (
    AugmentSpec,
    apply,
    apply_with_stats,
    augment,
    fit,
    load_basis,
    orig_headers_mode,
    save_basis,
)
from tabnoise.sampling import SamplingPlan
from tabnoise.table import DataTable


def _plan(seeds=None, **kwargs):
    kwargs.setdefault("sampling_type", "sampling_seed")
    kwargs.setdefault("seeding_type", "primary_seeds")
    return SamplingPlan(entropy_seeds=seeds or list(range(200)), **kwargs)


def _numeric_table(n=20, seed=0):
    rng = np.random.default_rng(seed)
    return DataTable({"num": list(rng.normal(0, 2, size=n))})


def _mixed_table(n=30, seed=1):
    rng = np.random.default_rng(seed)
    cats = ["red", "green", "blue"]
    return DataTable(
        {
            "num": list(rng.normal(5, 3, size=n)),
            "cat": [cats[i] for i in rng.integers(0, 3, size=n)],
            "flag": [("y" if b else "n") for b in rng.integers(0, 2, size=n)],
            "label": [float(v) for v in rng.integers(0, 2, size=n)],
        }
    )


def test_powertransform_dp1_assignments():
    table = _mixed_table()
    res = fit(table, {"labels_column": "label", "powertransform": "DP1",
                      "shuffletrain": False}, _plan())
    plans = res.basis.column_plans
    assert plans["num"].root == "DPnb"
    assert plans["cat"].root == "DP10"
    assert plans["flag"].root == "DPbn"
    assert plans["label"].root == "excl"  # labels never receive noise


def test_powertransform_dp2_assignments():
    table = _mixed_table()
    res = fit(table, {"powertransform": "DP2", "shuffletrain": False}, _plan())
    assert res.basis.column_plans["num"].root == "DPrt"
    assert res.basis.column_plans["cat"].root == "DPod"


def test_assigncat_on_label_rejected():
    table = _mixed_table()
    with pytest.raises(ConfigError, match="label"):
        fit(table, {"labels_column": "label", "assigncat": {"DPnb": ["label"]}})


def test_assigncat_missing_column_rejected():
    with pytest.raises(ConfigError, match="ghost"):
        fit(_numeric_table(), {"assigncat": {"DPnb": ["ghost"]}})


def test_assigncat_unknown_category_rejected():
    with pytest.raises(ConfigError, match="DPxx"):
        fit(_numeric_table(), {"assigncat": {"DPxx": ["num"]}})


def test_shuffletrain_false_preserves_order():
    table = _numeric_table(n=15)
    res = fit(table, {"shuffletrain": False, "assigncat": {"excl": ["num"]}}, _plan())
    assert res.train.row_index == list(range(15))
    assert res.train.column("num_excl") == table.column("num")


def test_shuffletrain_permutes_rows():
    table = _numeric_table(n=50)
    res = fit(table, {"assigncat": {"excl": ["num"]}}, _plan())
    assert sorted(res.train.row_index) == list(range(50))
    assert res.train.row_index != list(range(50))


def test_validation_split_and_train_basis():
    rng = np.random.default_rng(3)
    table = DataTable({"num": list(rng.normal(10, 4, size=100))})
    res = fit(table, {"validation_ratio": 0.2, "shuffletrain": False,
                      "assigncat": {"nmbr": ["num"]}}, _plan())
    assert res.train.n_rows == 80
    assert res.validation.n_rows == 20
    assert len(res.basis.validation_row_index) == 20

    # stored statistics must match a recomputation on train-minus-validation rows
    val_rows = set(res.basis.validation_row_index)
    kept = [v for i, v in enumerate(table.column("num")) if i not in val_rows]
    mean = float(np.mean(kept))
    std = float(np.sqrt(np.mean((np.array(kept) - mean) ** 2)))
    step = res.basis.column_plans["num"].steps[0]
    assert step.payload["numeric_basis"]["mean"] == mean
    assert step.payload["numeric_basis"]["std"] == std

    # validation prepared on the train basis: values use train statistics
    val_values = res.validation.column("num_nmbr")
    expected = [(table.column("num")[i] - mean) / std for i in sorted(val_rows)]
    assert val_values == pytest.approx(expected)


def test_apply_missing_column_listed():
    res = fit(_mixed_table(), {"powertransform": "DP1", "labels_column": "label"}, _plan())
    short = DataTable({"num": [1.0]})
    with pytest.raises(SchemaError, match="cat"):
        apply(res.basis, short, "test", _plan())


def test_apply_label_column_optional():
    res = fit(_mixed_table(), {"powertransform": "DP1", "labels_column": "label"}, _plan())
    unlabeled = DataTable(
        {"num": [1.0], "cat": ["red"], "flag": ["y"]}
    )
    out = apply(res.basis, unlabeled, "test", _plan())
    assert not any(c.startswith("label") for c in out.column_names)


def test_apply_extra_columns_warn_and_ignored():
    res = fit(_numeric_table(), {"assigncat": {"nmbr": ["num"]}}, _plan())
    table = DataTable({"num": [1.0], "bonus": [2.0]})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = apply(res.basis, table, "test", _plan())
    assert any("bonus" in str(w.message) for w in caught)
    assert "bonus" not in out.column_names


def test_traindata_mode_semantics_dp():
    table = _numeric_table(n=40, seed=5)
    config = {
        "shuffletrain": False,
        "assigncat": {"DPnb": ["num"]},
        "assignparam": {"default_assignparam": {"DPnb": {"flip_prob": 1.0, "sigma": 2.0}}},
    }
    res = fit(table, config, _plan())
    baseline = apply(res.basis, table, "test_no_noise", _plan())
    # DP: noise on train mode only
    modes_fire = {"train": True, "test": False, "train_no_noise": False, "test_no_noise": False}
    for mode, fires in modes_fire.items():
        out = apply(res.basis, table, mode, _plan())
        same = out.column("num_DPnbe_DPnb") == baseline.column("num_DPnbe_DPnb")
        assert same != fires, mode


def test_phase_symmetry_of_encodings():
    table = _mixed_table()
    res = fit(table, {"powertransform": "DB1", "labels_column": "label"}, _plan())
    a = apply(res.basis, table, "train_no_noise", _plan())
    b = apply(res.basis, table, "test_no_noise", _plan())
    assert a.column_names == b.column_names
    for name in a.column_names:
        assert a.column(name) == b.column(name)


def test_same_seeds_same_output():
    table = _mixed_table()
    config = {"powertransform": "DB1", "labels_column": "label", "shuffletrain": False}
    out1 = apply(fit(table, config, _plan()).basis, table, "test", _plan())
    out2 = apply(fit(table, config, _plan()).basis, table, "test", _plan())
    for name in out1.column_names:
        assert out1.column(name) == out2.column(name)


def test_dt_train_mode_equals_noiseless():
    table = _mixed_table()
    config = {"assigncat": {"DTnb": ["num"], "DTod": ["cat"]}, "shuffletrain": False}
    res = fit(table, config, _plan())
    noisy = apply(res.basis, table, "train", _plan())
    clean = apply(res.basis, table, "train_no_noise", _plan())
    for name in noisy.column_names:
        assert noisy.column(name) == clean.column(name)


def test_db_equals_dp_on_train_and_dt_on_test():
    table = _numeric_table(n=25, seed=8)
    plans = {}
    for root in ("DPnb", "DTnb", "DBnb"):
        config = {"assigncat": {root: ["num"]}, "shuffletrain": False,
                  "assignparam": {"default_assignparam": {root: {"flip_prob": 0.5}}}}
        res = fit(table, config, _plan())
        plans[root] = res.basis
    db_train = apply(plans["DBnb"], table, "train", _plan())
    dp_train = apply(plans["DPnb"], table, "train", _plan())
    assert db_train.column("num_DBnbe_DBnb") == dp_train.column("num_DPnbe_DPnb")
    db_test = apply(plans["DBnb"], table, "test", _plan())
    dt_test = apply(plans["DTnb"], table, "test", _plan())
    assert db_test.column("num_DBnbe_DBnb") == dt_test.column("num_DTnbe_DTnb")


def test_worked_example_via_config():
    table = DataTable({"column": [1.0, 2.0, 3.0, None, 10.0], "other": [1.0] * 5})
    config = {
        "shuffletrain": False,
        "processdict": {"newt": {"functionpointer": "nmbr"}},
        "transformdict": {
            "newt": {
                "parents": ["newt"],
                "siblings": [],
                "auntsuncles": [],
                "cousins": ["NArw"],
                "children": [],
                "niecesnephews": [],
                "coworkers": [],
                "friends": ["bsor"],
            }
        },
        "assigncat": {"newt": ["column"], "excl": ["other"]},
    }
    res = fit(table, config, _plan())
    assert res.basis.column_plans["column"].output_columns == [
        "column_newt",
        "column_newt_bsor",
        "column_NArw",
    ]


def test_bincount_parameter_reaches_stdbins():
    table = DataTable({"column": list(np.linspace(-3, 3, 50))})
    config = {
        "shuffletrain": False,
        "processdict": {"newt": {"functionpointer": "nmbr"}},
        "transformdict": {"newt": {"parents": ["newt"], "friends": ["bsor"]}},
        "assigncat": {"newt": ["column"]},
        "assignparam": {"bsor": {"column": {"bincount": 7}}},
    }
    res = fit(table, config, _plan())
    step = res.basis.column_plans["column"].steps[1]
    assert step.category == "bsor" and step.payload["bincount"] == 7
    bins = res.train.column("column_newt_bsor")
    assert set(bins) <= set(float(b) for b in range(7))
    # odd bincount: the center bin straddles the mean
    center = bins[len(bins) // 2]
    assert center == 3.0


def test_composed_noise_profiles():
    # two gated injections with different scales stacked on one normalization
    table = _numeric_table(n=200, seed=9)
    config = {
        "shuffletrain": False,
        "processdict": {
            "DPn3": {"functionpointer": "nmbr"},
            "DPnb2": {"functionpointer": "DPnb",
                      "defaultparams": {"sigma": 0.05, "flip_prob": 0.5}},
        },
        "transformdict": {
            "DPnb": {"parents": ["DPn3"], "cousins": ["NArw"], "coworkers": ["DPnb2"]},
            "DPn3": {"parents": ["DPn3"], "children": ["DPnb"]},
        },
        "assignparam": {"default_assignparam": {"DPnb": {"sigma": 0.5, "flip_prob": 0.0001}}},
        "assigncat": {"DPnb": ["num"]},
    }
    res = fit(table, config, _plan())
    names = res.basis.column_plans["num"].output_columns
    assert names == ["num_DPn3_DPnb_DPnb2", "num_NArw"]
    clean = apply(res.basis, table, "train_no_noise", _plan())
    noisy = apply(res.basis, table, "train", _plan())
    changed = sum(
        a != b for a, b in zip(noisy.column(names[0]), clean.column(names[0]))
    )
    assert changed > 50  # the second profile flips half the entries


def test_zero_noise_equivalence_quick():
    table = _mixed_table()
    zero = {"global_assignparam": {"flip_prob": 0.0, "test_flip_prob": 0.0}}
    res_noise = fit(table, {"assigncat": {"DPnb": ["num"], "DPod": ["cat"]},
                            "assignparam": zero, "shuffletrain": False}, _plan())
    res_plain = fit(table, {"assigncat": {"nmbr": ["num"], "ord3": ["cat"]},
                            "shuffletrain": False}, _plan())
    assert res_noise.train.column("num_DPnbe_DPnb") == res_plain.train.column("num_nmbr")
    assert res_noise.train.column("cat_DPode_DPod") == res_plain.train.column("cat_ord3")


def test_dpne_rescales_by_train_std():
    rng = np.random.default_rng(10)
    values = list(rng.normal(0, 10.0, size=4000))
    table = DataTable({"num": values})
    config = {
        "shuffletrain": False,
        "assigncat": {"DPne": ["num"]},
        "assignparam": {"default_assignparam": {"DPne": {"flip_prob": 1.0}}},
    }
    res = fit(table, config, _plan())
    train_std = res.basis.column_plans["num"].steps[1].payload["train_std"]
    assert abs(train_std - 10.0) < 0.5
    out = res.train.column("num_DPnee_DPne")
    deltas = np.array(out) - np.array(values)
    observed = float(np.std(deltas))
    assert abs(observed - 0.06 * train_std) < 0.03  # sigma scaled by feature std


def test_missing_cells_never_perturbed():
    table = DataTable({"num": [1.0, None, 3.0, None, 5.0] * 10})
    config = {"shuffletrain": False, "assigncat": {"DPnb": ["num"]},
              "assignparam": {"default_assignparam": {"DPnb": {"flip_prob": 1.0}}}}
    res = fit(table, config, _plan())
    out = res.train.column("num_DPnbe_DPnb")
    marker = res.train.column("num_NArw")
    for value, miss in zip(out, marker):
        if miss == 1.0:
            assert value == 0.0  # imputed, untouched by noise


def test_save_load_round_trip(tmp_path):
    table = _mixed_table()
    res = fit(table, {"powertransform": "DP1", "labels_column": "label",
                      "shuffletrain": False}, _plan())
    path = tmp_path / "basis.json"
    save_basis(res.basis, path)
    loaded = load_basis(path)
    out1 = apply(res.basis, table, "test", _plan())
    out2 = apply(loaded, table, "test", _plan())
    for name in out1.column_names:
        assert out1.column(name) == out2.column(name)


def test_save_deterministic_bytes(tmp_path):
    res = fit(_mixed_table(), {"powertransform": "DP1", "labels_column": "label",
                               "shuffletrain": False}, _plan())
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_basis(res.basis, p1)
    save_basis(res.basis, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_wrong_version_rejected(tmp_path):
    res = fit(_numeric_table(), {"assigncat": {"nmbr": ["num"]}}, _plan())
    path = tmp_path / "basis.json"
    save_basis(res.basis, path)
    data = json.loads(path.read_text())
    data["format_version"] = "tabnoise-basis/999"
    path.write_text(json.dumps(data))
    with pytest.raises(BasisFormatError, match="version"):
        load_basis(path)


def test_load_corrupt_file_rejected(tmp_path):
    path = tmp_path / "basis.json"
    path.write_text("{not json")
    with pytest.raises(BasisFormatError):
        load_basis(path)


def test_augment_integer_count():
    table = _numeric_table(n=50, seed=11)
    config = {"shuffletrain": False, "assigncat": {"DPnb": ["num"]},
              "assignparam": {"default_assignparam": {"DPnb": {"flip_prob": 1.0}}}}
    res = fit(table, config, _plan())
    out = augment(res.basis, table, AugmentSpec(count=2, all_noisy=False), _plan())
    assert out.n_rows == 150
    clean = apply(res.basis, table, "train_no_noise", _plan())
    clean_by_index = dict(zip(clean.row_index, clean.column("num_DPnbe_DPnb")))
    # copy 1 (row_index offset by 50) is the noiseless duplicate
    matches = 0
    for idx, value in zip(out.row_index, out.column("num_DPnbe_DPnb")):
        if clean_by_index[idx % 50] == value:
            matches += 1
    assert matches == 50


def test_augment_float_count_all_noisy():
    table = _numeric_table(n=40, seed=12)
    config = {"shuffletrain": False, "assigncat": {"DPnb": ["num"]},
              "assignparam": {"default_assignparam": {"DPnb": {"flip_prob": 1.0}}}}
    res = fit(table, config, _plan())
    out = augment(res.basis, table, AugmentSpec(count=2, all_noisy=True), _plan())
    assert out.n_rows == 120
    clean = apply(res.basis, table, "train_no_noise", _plan())
    clean_by_index = dict(zip(clean.row_index, clean.column("num_DPnbe_DPnb")))
    matches = sum(
        clean_by_index[idx % 40] == value
        for idx, value in zip(out.row_index, out.column("num_DPnbe_DPnb"))
    )
    assert matches == 0


def test_augment_count_zero_is_prepared_set():
    table = _numeric_table(n=10, seed=13)
    res = fit(table, {"shuffletrain": False, "assigncat": {"excl": ["num"]}}, _plan())
    out = augment(res.basis, table, AugmentSpec(count=0), _plan())
    assert out.n_rows == 10


def test_augment_duplicates_differ_pairwise():
    table = _numeric_table(n=30, seed=14)
    config = {"shuffletrain": False, "assigncat": {"DPnb": ["num"]},
              "assignparam": {"default_assignparam": {"DPnb": {"flip_prob": 1.0}}}}
    res = fit(table, config, _plan())
    out = augment(res.basis, table, AugmentSpec(count=2, all_noisy=True), _plan())
    by_copy = {0: {}, 1: {}, 2: {}}
    for idx, value in zip(out.row_index, out.column("num_DPnbe_DPnb")):
        by_copy[idx // 30][idx % 30] = value
    assert by_copy[0] != by_copy[1]
    assert by_copy[1] != by_copy[2]


def test_augment_spec_literal_parsing():
    assert AugmentSpec.from_literal("2") == AugmentSpec(count=2, all_noisy=False)
    assert AugmentSpec.from_literal("2.0") == AugmentSpec(count=2, all_noisy=True)
    with pytest.raises(ConfigError):
        AugmentSpec.from_literal("2.5")
    with pytest.raises(ConfigError):
        AugmentSpec.from_literal("-1")


def test_orig_headers_round_trip():
    table = DataTable({"a": [1.0, 2.0], "b": ["x", "y"], "c": [5.0, 6.0]})
    config = {"shuffletrain": False,
              "assigncat": {"DTne": ["a"], "DTse": ["b"], "excl": ["c"]}}
    res = fit(table, config, _plan())
    restored = orig_headers_mode(res.train, res.basis)
    assert restored.column_names == ["a", "b", "c"]
    assert restored.column("b") == ["x", "y"]


def test_orig_headers_rejects_multi_column_plans():
    table = _mixed_table()
    res = fit(table, {"powertransform": "DP1", "labels_column": "label",
                      "shuffletrain": False}, _plan())
    with pytest.raises(ConfigError, match="one-to-one"):
        orig_headers_mode(res.train, res.basis)


def test_excl_only_plan_identity():
    table = DataTable({"a": [1.0, None, 3.0], "b": ["x", "", "z"]})
    res = fit(table, {"shuffletrain": False, "assigncat": {"excl": ["a", "b"]}}, _plan())
    restored = orig_headers_mode(res.train, res.basis)
    assert restored.column("a") == table.column("a")
    assert restored.column("b") == table.column("b")


def test_sampling_seed_consumption_matches_report():
    table = _mixed_table()
    config = {"powertransform": "DB1", "labels_column": "label", "shuffletrain": False}
    res = fit(table, config, _plan())
    report = res.basis.seed_report
    # fit without validation or test data consumes exactly the train-phase ops
    assert res.ops_executed == report.sampling_seed_total_train
    _, stats = apply_with_stats(res.basis, table, "test", _plan())
    assert stats["ops_executed"] == report.sampling_seed_total_test
    _, stats = apply_with_stats(res.basis, table, "train", _plan())
    assert stats["ops_executed"] == report.sampling_seed_total_train


def test_transform_seed_totals():
    table = _mixed_table()
    config = {"powertransform": "DP1", "labels_column": "label", "shuffletrain": False}
    plan = SamplingPlan(sampling_type="transform_seed", seeding_type="primary_seeds",
                        entropy_seeds=list(range(50)))
    res = fit(table, config, plan)
    assert res.basis.seed_report.transform_seed_total == 3  # num, cat, flag
    assert res.seeds_consumed == 3
    _, stats = apply_with_stats(res.basis, table, "test", plan)
    assert stats["seeds_consumed"] == 3  # same independent of phase configuration


def test_protected_feature_through_pipeline():
    rng = np.random.default_rng(15)
    n = 3000
    groups = ["a"] * (n // 2) + ["b"] * (n // 2)
    values = np.concatenate([rng.normal(0, 2.0, n // 2), rng.normal(0, 0.5, n // 2)])
    table = DataTable({"num": list(values), "grp": groups})
    config = {
        "shuffletrain": False,
        "assigncat": {"DPne": ["num"], "excl": ["grp"]},
        "assignparam": {"default_assignparam": {
            "DPne": {"flip_prob": 1.0, "protected_feature": "grp",
                     "rescale_sigmas": False, "sigma": 1.0},
        }},
    }
    res = fit(table, config, _plan())
    out = np.array(res.train.column("num_DPnee_DPne"))
    deltas = out - values
    std_a = float(np.std(deltas[: n // 2]))
    std_b = float(np.std(deltas[n // 2:]))
    ratio = std_a / std_b
    expected = float(np.std(values[: n // 2])) / float(np.std(values[n // 2:]))
    assert abs(ratio - expected) / expected < 0.1


def test_unknown_traindata_mode_rejected():
    res = fit(_numeric_table(), {"assigncat": {"excl": ["num"]}}, _plan())
    with pytest.raises(ConfigError, match="mode"):
        apply(res.basis, _numeric_table(), "validation", _plan())
