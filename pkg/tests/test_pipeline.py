import numpy as np
import pytest

import specshape as ss
import synthgen
from oracles import direct_metrics
from specshape.pipeline import (PipelineConfig, _classify_reference, class_color,
                                metrics_from_matrix, resolve_workers)
from specshape.rules import RuleSet


@pytest.fixture(scope="module")
def authored():
    rules = ss.parse_rules(synthgen.author_rules())
    crs = ss.bind(rules, synthgen.WAVELENGTHS)
    return rules, crs


class TestClassifyCube:
    def test_uniform_ps_exemplar_cube(self, fx17_axis):
        crs = ss.bind(ss.builtin_rules(), fx17_axis)
        ps_id = next(r.class_id for r in crs.rules if r.name == "PS")

        # verify via single-pixel evaluation first, then the cube path
        pixel = ss.Spectrum(fx17_axis, synthgen.ps_exemplar())
        assert ss.classify_spectrum(pixel, crs) == ps_id

        data = np.tile(synthgen.ps_exemplar().astype(np.float32), (6, 7, 1))
        cube = ss.SpectralCube(fx17_axis, data)
        lm = ss.classify_cube(cube, crs)
        assert np.all(lm.labels == ps_id)
        assert lm.class_table[ps_id][0] == "PS"

    def test_all_invalid_cube_gives_all_zero(self, fx17_axis):
        # white == dark makes every column degenerate except one kept alive
        wl = fx17_axis
        raw = ss.SpectralCube(wl, np.full((4, 5, 229), 0.5, np.float32))
        dark = ss.SpectralCube(wl, np.full((1, 5, 229), 0.2, np.float32))
        white_data = np.full((1, 5, 229), 0.2, np.float32)
        white_data[0, 0, :] = 0.9
        white = ss.SpectralCube(wl, white_data)
        cal = ss.calibrate(raw, dark, white)
        assert not cal.valid_mask[:, 1:].any()

        crs = ss.bind(ss.builtin_rules(), wl)
        lm = ss.classify_cube(cal, crs)
        assert np.all(lm.labels[:, 1:] == 0)

    def test_block_cube_matches_generator(self, authored):
        _, crs = authored
        cube, truth = synthgen.block_cube(24, 42, noise=0.01, seed=3)
        lm = ss.classify_cube(cube, crs)
        agreement = np.mean(lm.labels == truth)
        assert agreement >= 0.99

    def test_kernel_equals_reference_path(self, authored):
        _, crs = authored
        cube, _ = synthgen.block_cube(6, 14, noise=0.01, seed=5)
        fast = ss.classify_cube(cube, crs)
        slow = _classify_reference(cube, crs)
        assert np.array_equal(fast.labels, slow.labels)

    def test_deterministic_across_worker_counts(self, authored):
        _, crs = authored
        cube, _ = synthgen.block_cube(12, 21, noise=0.01, seed=11)
        outputs = [
            ss.classify_cube(cube, crs, PipelineConfig(workers=w)).labels
            for w in (1, 2, None)
        ]
        assert np.array_equal(outputs[0], outputs[1])
        assert np.array_equal(outputs[0], outputs[2])

    def test_fingerprint_mismatch_rejected(self, authored, fx17_axis):
        _, crs = authored
        cube = ss.SpectralCube(fx17_axis + 5.0, np.zeros((2, 2, 229), np.float32))
        with pytest.raises(ValueError, match="wavelength axis"):
            ss.classify_cube(cube, crs)

    def test_continuum_mode_mismatch_rejected(self, authored):
        rules, _ = authored
        crs_diff = ss.bind(rules, synthgen.WAVELENGTHS, continuum_mode="difference")
        cube, _ = synthgen.block_cube(2, 7, noise=0.0)
        with pytest.raises(ValueError, match="continuum_mode"):
            ss.classify_cube(cube, crs_diff, PipelineConfig(continuum_mode="ratio"))

    def test_difference_mode_runs_end_to_end(self, fx17_axis):
        # thresholds differ under the difference convention; just exercise the path
        rules = ss.parse_rules("RULE DIP { CV[1423] > 0.05 }")
        crs = ss.bind(rules, fx17_axis, continuum_mode="difference")
        data = np.tile(synthgen.class_prototype(0).astype(np.float32), (3, 3, 1))
        cube = ss.SpectralCube(fx17_axis, data)
        cfg = PipelineConfig(continuum_mode="difference")
        lm = ss.classify_cube(cube, crs, cfg)
        ref = _classify_reference(cube, crs, cfg)
        assert np.array_equal(lm.labels, ref.labels)

    def test_zero_hull_pixel_labeled_zero(self, fx17_axis):
        crs = ss.bind(ss.builtin_rules(), fx17_axis)
        data = np.tile(synthgen.ps_exemplar().astype(np.float32), (2, 2, 1))
        data[0, 0, :] = 0.0  # all-zero spectrum: ratio-mode hull is zero
        cube = ss.SpectralCube(fx17_axis, data)
        lm = ss.classify_cube(cube, crs)
        assert lm.labels[0, 0] == 0
        assert np.all(lm.labels.ravel()[1:] > 0)

    def test_reference_reads_each_pixel_exactly_once(self, authored):
        _, crs = authored
        cube, _ = synthgen.block_cube(3, 7, noise=0.0)

        reads = []

        class CountingCube(ss.SpectralCube):
            def spectrum_at(self, x, y):
                reads.append((x, y))
                return super().spectrum_at(x, y)

        counting = CountingCube(cube.wavelengths, cube.data)
        _classify_reference(counting, crs)
        assert len(reads) == cube.rows * cube.cols
        assert len(set(reads)) == len(reads)

    def test_empty_ruleset_labels_everything_background(self, authored):
        cube, _ = synthgen.block_cube(3, 7, noise=0.0)
        crs = ss.bind(RuleSet(()), synthgen.WAVELENGTHS)
        lm = ss.classify_cube(cube, crs)
        assert np.all(lm.labels == 0)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="smooth_window"):
            PipelineConfig(smooth_window=4).validate()
        with pytest.raises(ValueError, match="continuum_mode"):
            PipelineConfig(continuum_mode="log").validate()
        with pytest.raises(ValueError, match="workers"):
            PipelineConfig(workers=0).validate()

    def test_workers_env_cap(self, monkeypatch):
        monkeypatch.setenv("SPECSHAPE_THREADS", "1")
        assert resolve_workers(None) == 1
        assert resolve_workers(8) == 1
        monkeypatch.setenv("SPECSHAPE_THREADS", "not-a-number")
        with pytest.raises(ValueError, match="SPECSHAPE_THREADS"):
            resolve_workers(None)

    def test_classify_spectrum_invalid_pixel_is_none(self, fx17_axis):
        crs = ss.bind(ss.builtin_rules(), fx17_axis)
        assert ss.classify_spectrum(ss.Spectrum(fx17_axis, np.zeros(229)), crs) is None


class TestPfBlackRule:
    def test_crrv_condition_selects_pf_black(self, fx17_axis):
        # dips (convex) at 973 and 1681 nm plus a broad deep absorption at
        # 1429 nm pulling the continuum-removed value below 0.6
        i = np.arange(229)
        v = np.full(229, 0.8)
        for nm in (973.0, 1681.0):
            b = int(np.argmin(np.abs(fx17_axis - nm)))
            v = v - 0.5 * np.exp(-0.5 * ((i - b) / 1.6) ** 2)
        b1429 = int(np.argmin(np.abs(fx17_axis - 1429.0)))
        v = v - 0.45 * np.exp(-0.5 * ((i - b1429) / 25.0) ** 2)

        spec = ss.Spectrum(fx17_axis, v)
        cr = ss.continuum_remove(ss.smooth(spec))
        assert cr.values[b1429] < 0.6

        crs = ss.bind(ss.builtin_rules(), fx17_axis)
        pf_id = next(r.class_id for r in crs.rules if r.name == "PF-black")
        assert ss.classify_spectrum(spec, crs) == pf_id


class TestMetrics:
    def label_map(self, arr):
        arr = np.asarray(arr, np.int32)
        ids = [int(c) for c in np.unique(arr)]
        table = {i: (f"c{i}", class_color(max(i, 1))) for i in ids}
        table[0] = ("background", "#000000")
        return ss.LabelMap(arr, table)

    def test_perfect_prediction(self):
        truth = self.label_map([[1, 2], [2, 1]])
        m = ss.evaluate_metrics(truth, truth)
        assert m.overall_accuracy == 1.0
        assert m.kappa == 1.0
        assert m.macro_fpr == 0.0

    def test_constant_predictor_on_balanced_truth(self):
        truth = self.label_map([[1, 1, 2, 2]])
        pred = self.label_map([[1, 1, 1, 1]])
        m = ss.evaluate_metrics(pred, truth)
        assert m.overall_accuracy == 0.5
        assert m.kappa == 0.0

    def test_random_matrices_match_direct_oracle(self, rng):
        for _ in range(100):
            k = int(rng.integers(2, 11))
            matrix = rng.integers(0, 40, (k, k))
            matrix[np.arange(k), np.arange(k)] += 1  # keep every class present
            m = metrics_from_matrix(tuple(range(1, k + 1)), matrix)
            o = direct_metrics(matrix)
            assert abs(m.overall_accuracy - o["oa"]) < 1e-12
            assert abs(m.kappa - o["kappa"]) < 1e-12
            assert abs(m.macro_precision - o["macro_precision"]) < 1e-12
            assert abs(m.macro_sensitivity - o["macro_sensitivity"]) < 1e-12
            assert abs(m.macro_fpr - o["macro_fpr"]) < 1e-12
            assert abs(m.macro_f1 - o["macro_f1"]) < 1e-12

    def test_permutation_safety(self, rng):
        truth = rng.integers(1, 5, (20, 20))
        pred = np.where(rng.random((20, 20)) < 0.8, truth, rng.integers(1, 5, (20, 20)))
        m1 = ss.evaluate_metrics(self.label_map(pred), self.label_map(truth))

        relabel = {1: 3, 2: 4, 3: 1, 4: 2}
        rl = np.vectorize(relabel.get)
        m2 = ss.evaluate_metrics(self.label_map(rl(pred)), self.label_map(rl(truth)))
        assert m1.overall_accuracy == m2.overall_accuracy
        assert m1.kappa == m2.kappa
        assert abs(m1.macro_precision - m2.macro_precision) < 1e-15
        assert abs(m1.macro_f1 - m2.macro_f1) < 1e-15

    def test_truth_zero_excluded_by_default(self):
        truth = self.label_map([[0, 0, 1, 1]])
        pred = self.label_map([[2, 2, 1, 1]])
        m = ss.evaluate_metrics(pred, truth)
        assert m.total == 2 and m.overall_accuracy == 1.0

    def test_strict_mode_scores_background_too(self):
        truth = self.label_map([[0, 0, 1, 1]])
        pred = self.label_map([[2, 2, 1, 1]])
        m = ss.evaluate_metrics(pred, truth, ignore_zero_truth=False)
        assert m.total == 4 and m.overall_accuracy == 0.5

    def test_unclassified_prediction_counts_as_miss(self):
        truth = self.label_map([[1, 1, 1, 1]])
        pred = self.label_map([[1, 1, 0, 0]])
        m = ss.evaluate_metrics(pred, truth)
        assert m.overall_accuracy == 0.5
        sens = {s.class_id: s.sensitivity for s in m.per_class}
        assert sens[1] == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="truth"):
            ss.evaluate_metrics(self.label_map([[1]]), self.label_map([[1, 1]]))

    def test_zero_evaluated_pixels(self):
        truth = self.label_map([[0, 0]])
        pred = self.label_map([[1, 1]])
        with pytest.raises(ValueError, match="zero evaluated"):
            ss.evaluate_metrics(pred, truth)

    def test_report_formats(self):
        truth = self.label_map([[1, 2], [2, 1]])
        pred = self.label_map([[1, 2], [1, 1]])
        m = ss.evaluate_metrics(pred, truth)
        text = ss.metrics_to_text(m, {1: "PE", 2: "PS"})
        assert "overall accuracy" in text and "PE" in text

        csv_text = ss.metrics_to_csv(m, {1: "PE", 2: "PS"})
        lines = csv_text.strip().splitlines()
        assert lines[0].startswith("class_id,name,support")
        assert lines[-1].startswith("macro,")
        assert len(lines) == 1 + len(m.per_class) + 1
