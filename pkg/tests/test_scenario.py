import numpy as np
import pytest

from emlnet.evaluation import evaluate
from emlnet.losses import LossWeights
from emlnet.scenario import (
    UNKNOWN, DomainDataset, FeatureFileError, SplitSpec, generate_scenario,
    load_features, load_manifest, save_features, save_scenario,
)
from emlnet.trainer import ModelConfig, OptimConfig, train


def test_split_parse_and_k():
    s = SplitSpec.parse("10/10/11")
    assert s.K == 20 and str(s) == "10/10/11" and s.setting == "OPDA"


@pytest.mark.parametrize("text,setting", [("5/0/0", "CDA"), ("4/2/0", "PDA"), ("4/0/2", "ODA")])
def test_split_setting(text, setting):
    assert SplitSpec.parse(text).setting == setting


@pytest.mark.parametrize("text", ["1/0/3", "a/b/c", "1/2", "-1/4/0"])
def test_split_rejects(text):
    with pytest.raises(ValueError):
        SplitSpec.parse(text)


def test_sizes():
    sc = generate_scenario(SplitSpec(5, 2, 3), n_per_class=50)
    assert sc.source.n == 350 and sc.target.n == 400
    assert sc.K == 7


def test_class_counts_and_ids():
    sc = generate_scenario(SplitSpec(3, 1, 2), d=6, n_per_class=10, seed=4)
    assert np.bincount(sc.source.labels).tolist() == [10] * 4
    ids, counts = np.unique(sc.target.labels, return_counts=True)
    assert ids.tolist() == [0, 1, 2, 4, 5] and counts.tolist() == [10] * 5
    ev = sc.target_eval_labels()
    assert set(ev.tolist()) == {0, 1, 2, UNKNOWN}
    assert sc.shared_classes == frozenset({0, 1, 2})


def test_deterministic():
    a = generate_scenario(SplitSpec(3, 1, 2), seed=7)
    b = generate_scenario(SplitSpec(3, 1, 2), seed=7)
    np.testing.assert_array_equal(a.source.features, b.source.features)
    np.testing.assert_array_equal(a.target.labels, b.target.labels)
    c = generate_scenario(SplitSpec(3, 1, 2), seed=8)
    assert not np.array_equal(a.source.features, c.source.features)


def class_means(ds):
    return {c: ds.features[ds.labels == c].mean(axis=0) for c in np.unique(ds.labels)}


def test_zero_shift_shares_means():
    sc = generate_scenario(SplitSpec(3, 1, 2), d=8, n_per_class=4000, shift_magnitude=0.0, seed=1)
    ms, mt = class_means(sc.source), class_means(sc.target)
    for c in range(3):
        assert np.linalg.norm(ms[c] - mt[c]) < 0.15


def test_shift_displaces_by_magnitude():
    sc = generate_scenario(SplitSpec(3, 1, 2), d=8, n_per_class=4000, shift_magnitude=3.0, seed=1)
    ms, mt = class_means(sc.source), class_means(sc.target)
    for c in range(3):
        assert abs(np.linalg.norm(ms[c] - mt[c]) - 3.0) < 0.15


def test_private_means_are_separated():
    sc = generate_scenario(SplitSpec(3, 2, 3), d=8, n_per_class=500, seed=2)
    ms, mt = class_means(sc.source), class_means(sc.target)
    for p in (5, 6, 7):
        assert min(np.linalg.norm(mt[p] - m) for m in ms.values()) > 2.0


def test_dataset_validation():
    with pytest.raises(ValueError):
        DomainDataset(np.empty((0, 3)))
    with pytest.raises(ValueError):
        DomainDataset(np.ones((2, 2)), [0])
    with pytest.raises(ValueError):
        DomainDataset([[np.nan, 1.0]])


class TestFeatureFiles:
    def test_minimal(self, tmp_path):
        f = tmp_path / "f.txt"
        f.write_text("3 2\n1.0 2.0 0\n3.0 4.0 1\n5.0 6.0 0\n")
        ds = load_features(f)
        assert ds.features.shape == (3, 2)
        assert ds.labels.tolist() == [0, 1, 0]

    def test_unlabeled_autodetect(self, tmp_path):
        f = tmp_path / "f.txt"
        f.write_text("2 2\n1.0 2.0\n3.0 4.0\n")
        assert load_features(f, has_labels=None).labels is None

    @pytest.mark.parametrize("body,msg,line", [
        ("", "missing header", 1),
        ("x y\n1 2 0\n", "missing header", 1),
        ("0 2\n", "no samples", 1),
        ("3 2\n1.0 2.0 0\n", "found 1", 2),
        ("2 2\n1.0 2.0 0\n1.0 oops 1\n", "non-numeric", 3),
        ("2 2\n1.0 2.0 0\n1.0 2.0\n", "label missing", 3),
    ])
    def test_errors_name_path_and_line(self, tmp_path, body, msg, line):
        f = tmp_path / "bad.txt"
        f.write_text(body)
        with pytest.raises(FeatureFileError) as exc:
            load_features(f)
        assert f"{f}:{line}:" in str(exc.value)
        assert msg in str(exc.value)

    def test_round_trip(self, tmp_path, rng):
        ds = DomainDataset(rng.normal(size=(20, 5)), rng.integers(0, 3, 20))
        save_features(tmp_path / "f.txt", ds)
        back = load_features(tmp_path / "f.txt")
        np.testing.assert_allclose(back.features, ds.features, atol=1e-9)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_manifest_round_trip(self, tmp_path):
        sc = generate_scenario(SplitSpec(3, 1, 2), d=4, n_per_class=6, seed=3)
        back = load_manifest(save_scenario(sc, tmp_path))
        assert back.split == sc.split
        np.testing.assert_array_equal(back.target.labels, sc.target.labels)
        np.testing.assert_array_equal(back.source.features, sc.source.features)

    def test_manifest_k_mismatch(self, tmp_path):
        sc = generate_scenario(SplitSpec(3, 1, 2), d=4, n_per_class=6)
        m = save_scenario(sc, tmp_path)
        m.write_text(m.read_text().replace("K = 4", "K = 9"))
        with pytest.raises(FeatureFileError):
            load_manifest(m)


@pytest.mark.slow
def test_easy_problem_is_solved_by_source_training():
    sc = generate_scenario(SplitSpec(4, 0, 0), d=8, n_per_class=40, shift_magnitude=0.0, spread=0.5, seed=0)
    params, _ = train(sc, ModelConfig((32,), 16), OptimConfig(epochs=5), LossWeights.source_only(), "uniform")
    res = evaluate(params, sc.target.features, sc.target_eval_labels(), sc.shared_classes)
    assert res.os_star > 0.95


@pytest.mark.parametrize("seed", range(10))
def test_crowded_plane_layout(seed):
    sc = generate_scenario(SplitSpec(6, 0, 6), d=2, n_per_class=500, shift_magnitude=0.0, seed=seed)
    ms, mt = class_means(sc.source), class_means(sc.target)
    # the mean difference has per-axis sd sqrt(2/500) ~ 0.063; 0.35 is beyond 5 sd
    for c in range(6):
        assert np.linalg.norm(ms[c] - mt[c]) < 0.35


def test_impossible_layout_raises():
    with pytest.raises(ValueError, match="cannot place"):
        generate_scenario(SplitSpec(20, 0, 20), d=2)
