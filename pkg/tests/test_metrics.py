"""Metrics against brute-force references."""

import numpy as np
import pytest

from dualseg.boundary import LabelMap, semantic_boundary_label
from dualseg.errors import ConfigurationError, ContractViolation
from dualseg.metrics import (
    MetricsReport,
    biou,
    boundary_band,
    boundary_fscore,
    confusion_matrix,
    distance_transform,
    evaluate_dataset,
    iou_from_confusion,
    miou,
)

# ---------------------------------------------------------------------------
# brute-force references


def brute_edt(feature):
    h, w = feature.shape
    pts = np.argwhere(feature)
    out = np.full((h, w), np.inf)
    for y in range(h):
        for x in range(w):
            if pts.size:
                out[y, x] = np.sqrt(((pts - [y, x]) ** 2).sum(axis=1).min())
    return out


def brute_iou(pred, gt, n):
    per = np.full(n, np.nan)
    for k in range(n):
        p, g = pred == k, gt == k
        union = (p | g).sum()
        if union:
            per[k] = (p & g).sum() / union
    return per


def brute_fscore(pred_lm, gt_lm, d):
    n = gt_lm.num_classes
    pb = semantic_boundary_label(pred_lm, 1).astype(bool)
    gb = semantic_boundary_label(gt_lm, 1).astype(bool)
    per = np.full(n, np.nan)
    for k in range(n):
        p_pts = np.argwhere(pb[k])
        g_pts = np.argwhere(gb[k])
        if p_pts.size == 0 and g_pts.size == 0:
            continue
        if p_pts.size and g_pts.size:
            mp = sum(
                1 for p in p_pts
                if np.sqrt(((g_pts - p) ** 2).sum(axis=1).min()) <= d
            )
            mg = sum(
                1 for g in g_pts
                if np.sqrt(((p_pts - g) ** 2).sum(axis=1).min()) <= d
            )
            precision, recall = mp / len(p_pts), mg / len(g_pts)
        else:
            precision = recall = 0.0
        per[k] = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return per


def brute_band(mask, d):
    h, w = mask.shape
    comp = np.argwhere(~mask)
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            border = min(y + 1, h - y, x + 1, w - x)
            dmin = float(border)
            if comp.size:
                dmin = min(dmin, np.sqrt(((comp - [y, x]) ** 2).sum(axis=1).min()))
            out[y, x] = dmin <= d
    return out


def brute_biou(pred_lm, gt_lm, d):
    n = gt_lm.num_classes
    per = np.full(n, np.nan)
    for k in range(n):
        p, g = pred_lm.labels == k, gt_lm.labels == k
        if not (p.any() or g.any()):
            continue
        pband, gband = brute_band(p, d), brute_band(g, d)
        union = (pband | gband).sum()
        if union == 0:
            per[k] = 1.0 if np.array_equal(p, g) else 0.0
        else:
            per[k] = (pband & gband).sum() / union
    return per


def random_pair(rng, n=3, h=24, w=24):
    gt = LabelMap(rng.integers(0, n, size=(h, w)), n)
    pred = LabelMap(rng.integers(0, n, size=(h, w)), n)
    return pred, gt


def blocky_pair(rng, n=4, h=24, w=24, cell=6):
    """Piecewise-constant maps: realistic regions instead of pixel noise."""
    def blocky():
        coarse = rng.integers(0, n, size=(h // cell, w // cell))
        return np.repeat(np.repeat(coarse, cell, axis=0), cell, axis=1)

    return LabelMap(blocky(), n), LabelMap(blocky(), n)


# ---------------------------------------------------------------------------
# distance transform


def test_edt_matches_brute_force(rng):
    for _ in range(10):
        feature = rng.uniform(size=(15, 17)) < 0.1
        got = distance_transform(feature)
        ref = brute_edt(feature)
        if feature.any():
            assert np.allclose(got, ref)
        else:
            assert got.min() >= 15 + 17 - 1


def test_edt_zero_on_feature_pixels(rng):
    feature = rng.uniform(size=(9, 9)) < 0.3
    feature[0, 0] = True
    got = distance_transform(feature)
    assert np.all(got[feature] == 0.0)


# ---------------------------------------------------------------------------
# mIoU


def test_miou_perfect_prediction(rng):
    lm = LabelMap(rng.integers(0, 3, size=(10, 10)), 3)
    per, mean = miou(lm, lm)
    for k in range(3):
        if (lm.labels == k).any():
            assert per[k] == 1.0
    assert mean == 1.0


def test_miou_disjoint_single_classes():
    pred = LabelMap(np.zeros((6, 6), dtype=int), 2)
    gt = LabelMap(np.ones((6, 6), dtype=int), 2)
    per, mean = miou(pred, gt)
    assert per[0] == 0.0
    assert per[1] == 0.0
    assert mean == 0.0


def test_miou_matches_brute_force(rng):
    for _ in range(20):
        pred, gt = random_pair(rng, n=int(rng.integers(2, 6)), h=16, w=16)
        per, _ = miou(pred, gt)
        ref = brute_iou(pred.labels, gt.labels, gt.num_classes)
        assert np.allclose(per, ref, equal_nan=True)


def test_miou_shape_contract(rng):
    with pytest.raises(ContractViolation):
        miou(LabelMap(np.zeros((4, 4), dtype=int), 2),
             LabelMap(np.zeros((4, 5), dtype=int), 2))


# ---------------------------------------------------------------------------
# boundary F-score


def test_fscore_perfect_prediction(rng):
    pred, _ = blocky_pair(rng)
    per, mean = boundary_fscore(pred, pred, 3)
    present = ~np.isnan(per)
    assert present.any()
    assert np.all(per[present] == 1.0)
    assert mean == 1.0


def test_fscore_empty_prediction_boundary():
    gt = LabelMap(np.repeat(np.array([[0, 1]]), 8, axis=0).repeat(4, axis=1), 2)
    pred = LabelMap(np.zeros((8, 8), dtype=int), 2)
    per, _ = boundary_fscore(pred, gt, 3)
    assert per[0] == 0.0
    assert per[1] == 0.0


@pytest.mark.parametrize("d", [3, 5])
def test_fscore_matches_brute_force(d):
    rng = np.random.default_rng(77 + d)
    for _ in range(8):
        pred, gt = blocky_pair(rng)
        per, _ = boundary_fscore(pred, gt, d)
        ref = brute_fscore(pred, gt, d)
        assert np.allclose(per, ref, equal_nan=True)


def test_fscore_monotone_in_threshold(rng):
    pred, gt = blocky_pair(rng)
    means = [boundary_fscore(pred, gt, d)[1] for d in (1, 2, 3, 5, 9)]
    assert all(b >= a - 1e-12 for a, b in zip(means, means[1:]))


# ---------------------------------------------------------------------------
# boundary IoU


def test_biou_perfect_prediction(rng):
    pred, _ = blocky_pair(rng)
    per, mean = biou(pred, pred, 3)
    present = ~np.isnan(per)
    assert np.all(per[present] == 1.0)
    assert mean == 1.0


def test_biou_overlapping_bodies_disjoint_bands():
    labels_gt = np.zeros((20, 20), dtype=int)
    labels_gt[2:18, 2:18] = 1
    labels_pred = np.zeros((20, 20), dtype=int)
    labels_pred[7:13, 7:13] = 1
    per, _ = biou(LabelMap(labels_pred, 2), LabelMap(labels_gt, 2), 1)
    assert per[1] == 0.0


def test_biou_matches_brute_force(rng):
    for _ in range(6):
        pred, gt = blocky_pair(rng)
        for d in (1, 3):
            per, _ = biou(pred, gt, d)
            ref = brute_biou(pred, gt, d)
            assert np.allclose(per, ref, equal_nan=True)


def test_biou_saturates_to_mask_iou(rng):
    pred, gt = blocky_pair(rng)
    diag = int(np.ceil(np.sqrt(2) * 24))
    per, _ = biou(pred, gt, diag)
    ref = brute_iou(pred.labels, gt.labels, gt.num_classes)
    assert np.allclose(per, ref, equal_nan=True)


def test_band_matches_brute_force(rng):
    for _ in range(10):
        mask = rng.uniform(size=(14, 14)) < 0.5
        for d in (1, 2, 4):
            assert np.array_equal(boundary_band(mask, d), brute_band(mask, d))


# ---------------------------------------------------------------------------
# permutation invariance


def test_metrics_permutation_invariance(rng):
    pred, gt = blocky_pair(rng)
    perm = rng.permutation(4)
    pred_p = LabelMap(perm[pred.labels], 4)
    gt_p = LabelMap(perm[gt.labels], 4)

    per_iou, _ = miou(pred, gt)
    per_iou_p, _ = miou(pred_p, gt_p)
    assert np.allclose(per_iou_p[perm], per_iou, equal_nan=True)

    per_f, _ = boundary_fscore(pred, gt, 3)
    per_f_p, _ = boundary_fscore(pred_p, gt_p, 3)
    assert np.allclose(per_f_p[perm], per_f, equal_nan=True)

    per_b, _ = biou(pred, gt, 3)
    per_b_p, _ = biou(pred_p, gt_p, 3)
    assert np.allclose(per_b_p[perm], per_b, equal_nan=True)


# ---------------------------------------------------------------------------
# dataset evaluation


def test_evaluate_identity_prediction_scores_one(rng):
    gt = blocky_pair(rng)[1]
    image = rng.uniform(size=(3, 24, 24))
    report = evaluate_dataset(lambda img: gt, [(image, gt)], thresholds=(3,))
    assert report.miou == 1.0
    assert report.fscore[3][1] == 1.0
    assert report.biou[3][1] == 1.0
    assert report.image_count == 1
    assert report.pixel_count == 24 * 24


def test_evaluate_duplication_invariance(rng):
    preds = {}
    data = []
    for i in range(3):
        pred, gt = blocky_pair(rng)
        image = rng.uniform(size=(3, 24, 24))
        preds[id(gt)] = pred
        data.append((image, gt))

    def predict(img):
        # look up by matching the stored image object
        for (im, gt) in data:
            if im is img:
                return preds[id(gt)]
        raise AssertionError

    r1 = evaluate_dataset(predict, data, thresholds=(3,))
    r2 = evaluate_dataset(predict, data + data, thresholds=(3,))
    assert np.allclose(r1.per_class_iou, r2.per_class_iou, equal_nan=True)
    assert r1.miou == r2.miou
    assert np.allclose(r1.fscore[3][0], r2.fscore[3][0], equal_nan=True)
    assert np.allclose(r1.biou[3][0], r2.biou[3][0], equal_nan=True)


def test_evaluate_two_image_manual_accumulation(rng):
    from dualseg.metrics import boundary_match_counts, fscore_from_counts

    pairs = [blocky_pair(rng) for _ in range(2)]
    data = [(rng.uniform(size=(3, 24, 24)), gt) for _, gt in pairs]
    lookup = {id(data[i][0]): pairs[i][0] for i in range(2)}
    report = evaluate_dataset(lambda img: lookup[id(img)], data, thresholds=(3,))

    cm = sum(confusion_matrix(pairs[i][0], pairs[i][1]) for i in range(2))
    per_iou, mean_iou = iou_from_confusion(cm)
    assert np.allclose(report.per_class_iou, per_iou, equal_nan=True)
    assert report.miou == mean_iou

    counts = sum(boundary_match_counts(pairs[i][0], pairs[i][1], 3) for i in range(2))
    per_f, mean_f = fscore_from_counts(counts)
    assert np.allclose(report.fscore[3][0], per_f, equal_nan=True)


def test_evaluate_rejects_empty_and_mismatched(rng):
    with pytest.raises(ConfigurationError):
        evaluate_dataset(lambda img: None, [], thresholds=(3,))
    gt = LabelMap(np.zeros((8, 8), dtype=int), 3)
    bad_pred = LabelMap(np.zeros((8, 8), dtype=int), 2)
    with pytest.raises(ConfigurationError):
        evaluate_dataset(lambda img: bad_pred, [(None, gt)], thresholds=(3,))


def test_report_json_roundtrippable(rng):
    import json

    pred, gt = blocky_pair(rng)
    report = evaluate_dataset(lambda img: pred, [(None, gt)], thresholds=(3, 5))
    blob = json.dumps(report.to_json())
    parsed = json.loads(blob)
    assert parsed["image_count"] == 1
    assert "3" in parsed["fscore"]
