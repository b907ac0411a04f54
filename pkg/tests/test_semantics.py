import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swlo.semantics import (DYNAMIC, IGNORE, SEMANTIC_KITTI_ROLES, STATIC,
                            BinaryMask, SemanticMap, binarize_semantics,
                            load_role_table, miou)


class TestBinarize:
    def test_default_table_values(self):
        # car -> 0, building -> 1, traffic-sign -> 1
        sem = SemanticMap(np.array([10, 50, 81]))
        mask = binarize_semantics(sem)
        np.testing.assert_array_equal(mask.values, [0.0, 1.0, 1.0])

    def test_moving_variant_matches_base_class(self):
        mask = binarize_semantics(SemanticMap(np.array([252, 10])))
        np.testing.assert_array_equal(mask.values, [0.0, 0.0])

    def test_table_split_counts(self):
        roles = list(SEMANTIC_KITTI_ROLES.values())
        # 8 dynamic learning classes plus 10 moving/folded ids; 11 static plus lane-marking
        assert roles.count(DYNAMIC) == 18
        assert roles.count(STATIC) == 12

    def test_empty_map(self):
        assert len(binarize_semantics(SemanticMap(np.zeros(0, dtype=int)))) == 0

    def test_ignored_labels_take_configured_value(self):
        sem = SemanticMap(np.array([0, 0]))
        assert binarize_semantics(sem).values.tolist() == [1.0, 1.0]
        assert binarize_semantics(sem, ignore_value=0.0).values.tolist() == [0.0, 0.0]

    def test_unmapped_label_errors_with_name(self):
        with pytest.raises(ValueError, match="7777"):
            binarize_semantics(SemanticMap(np.array([7777])))

    def test_unmapped_label_with_default(self):
        mask = binarize_semantics(SemanticMap(np.array([7777])), default_role=STATIC)
        assert mask.values.tolist() == [1.0]

    def test_output_strictly_binary(self):
        rng = np.random.default_rng(0)
        ids = np.array(list(SEMANTIC_KITTI_ROLES))
        sem = SemanticMap(rng.choice(ids, size=500))
        mask = binarize_semantics(sem)
        assert np.isin(mask.values, (0.0, 1.0)).all()

    def test_mask_type_rejects_other_values(self):
        with pytest.raises(ValueError):
            BinaryMask(np.array([0.5]))


class TestRoleTable:
    def test_roundtrip_file(self, tmp_path):
        path = tmp_path / "mapping.txt"
        path.write_text("# comment\ncar 10 dynamic\nroad 40 static\nunlabeled 0 ignore\n")
        names, roles = load_role_table(path)
        assert names[10] == "car"
        assert roles == {10: DYNAMIC, 40: STATIC, 0: IGNORE}

    def test_bad_role_errors(self, tmp_path):
        path = tmp_path / "mapping.txt"
        path.write_text("car 10 movable\n")
        with pytest.raises(ValueError, match="role"):
            load_role_table(path)

    def test_bad_line_errors(self, tmp_path):
        path = tmp_path / "mapping.txt"
        path.write_text("car 10\n")
        with pytest.raises(ValueError, match="line 1"):
            load_role_table(path)


def _brute_force_miou(pred, gt, num_classes, ignore):
    keep = [i for i in range(len(gt)) if gt[i] not in ignore]
    ious = {}
    for c in range(num_classes):
        tp = fp = fn = 0
        for i in keep:
            p_claims = pred[i] == c and pred[i] not in ignore
            if gt[i] == c and p_claims:
                tp += 1
            elif gt[i] == c:
                fn += 1
            elif p_claims:
                fp += 1
        if tp + fp + fn:
            ious[c] = tp / (tp + fp + fn)
    return ious, sum(ious.values()) / len(ious)


class TestMiou:
    def test_perfect_prediction(self):
        sem = SemanticMap(np.array([0, 1, 0, 1]))
        per_class, mean = miou(sem, sem, num_classes=2)
        np.testing.assert_array_equal(per_class, [1.0, 1.0])
        assert mean == 1.0

    def test_hand_confusion_case(self):
        gt = SemanticMap(np.array([0, 0, 1, 1]))
        pred = SemanticMap(np.array([0, 1, 1, 1]))
        per_class, mean = miou(pred, gt, num_classes=2)
        assert per_class[0] == pytest.approx(0.5)
        assert per_class[1] == pytest.approx(2.0 / 3.0)
        assert mean == pytest.approx(7.0 / 12.0, abs=1e-4)

    def test_all_ignored_errors(self):
        gt = SemanticMap(np.array([0, 0]))
        pred = SemanticMap(np.array([1, 1]))
        with pytest.raises(ValueError, match="no scorable points"):
            miou(pred, gt, num_classes=2, ignore={0})

    def test_length_mismatch_errors(self):
        with pytest.raises(ValueError, match="length mismatch"):
            miou(SemanticMap(np.array([0])), SemanticMap(np.array([0, 1])), 2)

    def test_absent_classes_excluded(self):
        gt = SemanticMap(np.array([0, 0]))
        pred = SemanticMap(np.array([0, 0]))
        per_class, mean = miou(pred, gt, num_classes=3)
        assert per_class[0] == 1.0
        assert np.isnan(per_class[1]) and np.isnan(per_class[2])
        assert mean == 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 200))
        num_classes = int(rng.integers(2, 7))
        gt = rng.integers(0, num_classes, n)
        pred = rng.integers(0, num_classes, n)
        ignore = {0} if rng.uniform() < 0.5 else set()
        if ignore and (gt == 0).all():
            gt[0] = 1
        got_per_class, got_mean = miou(SemanticMap(pred), SemanticMap(gt),
                                       num_classes, ignore)
        want_ious, want_mean = _brute_force_miou(pred.tolist(), gt.tolist(),
                                                 num_classes, ignore)
        for c, v in want_ious.items():
            assert got_per_class[c] == pytest.approx(v, abs=1e-12)
        assert got_mean == pytest.approx(want_mean, abs=1e-12)

    def test_relabeling_permutation_symmetry(self):
        rng = np.random.default_rng(1)
        num_classes = 5
        gt = rng.integers(0, num_classes, 300)
        pred = rng.integers(0, num_classes, 300)
        perm = rng.permutation(num_classes)
        _, mean_a = miou(SemanticMap(pred), SemanticMap(gt), num_classes)
        _, mean_b = miou(SemanticMap(perm[pred]), SemanticMap(perm[gt]), num_classes)
        assert mean_a == pytest.approx(mean_b, abs=1e-12)
