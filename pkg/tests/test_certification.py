"""Certification bounds, placement taxonomy, and the attack harness."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from maskcert import (
    ALL_MODEL,
    BASE_KEY,
    Box,
    CertConfig,
    ImageMeta,
    LocationModel,
    MaskSetConfig,
    PatchSpec,
    PruneConfig,
    Rect,
    SyntheticDetector,
    ThresholdConfig,
    attack_soundness_suite,
    certify_dataset,
    certify_image,
    classify_location,
    covers,
    enumerate_patches,
    generate_mask_set,
    generate_two_patch_mask_set,
    ioa,
    l_ioa,
    l_iou,
    origin_grid,
    precompute_store,
    simulate_adaptive_attack,
)
from maskcert.certification import coverage_matrix, location_codes, mask_witnesses

GT = Box(0, 0, 10, 10, 1, 1.0)
PRUNE = PruneConfig()
THRESHOLDS = ThresholdConfig()
CERT = CertConfig()


@st.composite
def boxes_with_overlap(draw):
    # masked box guaranteed to share area with the ground truth
    x0 = draw(st.integers(0, 8))
    x1 = draw(st.integers(x0 + 2, 24))
    y0 = draw(st.integers(0, 8))
    y1 = draw(st.integers(y0 + 2, 24))
    return Box(x0, y0, x1, y1, 1, 0.5)


class TestLowerBounds:
    def test_l_ioa_examples(self):
        assert l_ioa(GT, Box(0, 0, 10, 6, 1, 0.5), 0.6) == pytest.approx(0.36)
        assert l_ioa(GT, Box(5, 0, 15, 10, 1, 0.5), 0.6) == pytest.approx(0.1)
        assert l_ioa(GT, GT, 0.6) == pytest.approx(0.6)
        # cross-label masked boxes certify nothing: the bound goes negative
        assert l_ioa(GT, Box(0, 0, 10, 10, 2, 0.5), 0.6) == pytest.approx(-0.4)

    def test_l_iou_examples(self):
        # A=0, B=100, C=50 at threshold 0.8
        assert l_iou(GT, Box(0, 0, 15, 10, 1, 0.5), 0.8) == pytest.approx(7 / 15)
        assert l_iou(GT, Box(0, 0, 15, 10, 1, 0.5), 0.2) == 0.0  # clamped at zero
        assert l_iou(GT, GT, 0.8) == pytest.approx(0.8)

    def test_l_ioa_peaks_at_the_ground_truth(self):
        # growing the masked box beyond the object only adds spill
        for m in (Box(0, 0, 12, 10, 1, 0.5), Box(0, 0, 10, 12, 1, 0.5), Box(2, 2, 8, 8, 1, 0.5)):
            assert l_ioa(GT, m, 0.6) <= l_ioa(GT, GT, 0.6) + 1e-12

    @given(boxes_with_overlap(), st.sampled_from([0.4, 0.5, 0.6, 0.7, 0.8, 0.9]), st.data())
    def test_l_ioa_sound_against_sampled_filtering_boxes(self, b_m, tau, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        b_b = oracles.sample_filtering_box(rng, b_m, tau, hug=data.draw(st.booleans()))
        assert ioa(b_m, b_b) > tau
        assert ioa(GT, b_b) > l_ioa(GT, b_m, tau) - 1e-9

    @given(boxes_with_overlap(), st.sampled_from([0.4, 0.6, 0.8]))
    @settings(max_examples=60)
    def test_l_iou_matches_grid_minimum(self, b_m, tau):
        from maskcert.geometry import intersection_area

        b = intersection_area(GT, b_m)
        a = 100.0 - b
        c = (b_m.x_max - b_m.x_min) * (b_m.y_max - b_m.y_min) - b
        grid_min, slack = oracles.lp_grid_min(a, b, c, tau, steps=120)
        bound = l_iou(GT, b_m, tau)
        assert bound <= grid_min + 1e-12
        assert grid_min - bound <= slack + 1e-12


class TestPatchEnumeration:
    def test_origin_grid_examples(self):
        assert origin_grid(10, 4, 3) == [0, 3, 6]
        assert origin_grid(10, 4, 4) == [0, 4, 6]  # flush placement forced in
        assert origin_grid(5, 5, 1) == [0]
        grid = origin_grid(128, 6, 4)
        assert len(grid) == 32 and grid[-1] == 122

    def test_origin_grid_matches_reference(self):
        for extent in (10, 17, 128):
            for patch in (1, 4, 7):
                for stride in (1, 3, 5, 16):
                    assert origin_grid(extent, patch, stride) == oracles.reference_origins(
                        extent, patch, stride
                    )

    def test_enumerate_counts(self):
        im = ImageMeta(image_id="x", width=10, height=10)
        assert len(enumerate_patches(PatchSpec(width=2, height=2, stride=1), im)) == 81
        assert len(enumerate_patches(PatchSpec(width=10, height=10), im)) == 1
        assert len(enumerate_patches(PatchSpec(width=8, height=8, stride=8), im)) == 4

    def test_resolve_examples(self):
        assert PatchSpec(area_fraction=0.01).resolve(128, 128) == (12, 12)
        assert PatchSpec(area_fraction=0.01).resolve(136, 136) == (13, 13)
        assert PatchSpec(area_fraction=0.04).resolve(136, 136) == (27, 27)
        assert PatchSpec(area_fraction=0.01, aspect=2.0).resolve(128, 128) == (18, 9)
        assert PatchSpec(width=6, height=6).resolve(128, 128) == (6, 6)

    def test_validation(self):
        with pytest.raises(ValueError):
            PatchSpec(width=129, height=5).resolve(128, 128)
        with pytest.raises(ValueError):
            PatchSpec(width=5, height=None)
        with pytest.raises(ValueError):
            PatchSpec(area_fraction=None)
        with pytest.raises(ValueError):
            PatchSpec(area_fraction=1.5)
        with pytest.raises(ValueError):
            PatchSpec(stride=0)
        with pytest.raises(ValueError):
            PatchSpec(count=3)


class TestLocationTaxonomy:
    IM = ImageMeta(image_id="x", width=100, height=100)
    O = Box(40, 40, 60, 60, 1, 1.0)

    def test_examples(self):
        far = Rect(10, 10, 20, 20)  # both gaps 20 > 10
        close = Rect(10, 45, 20, 55)  # x gap 20, y gap 0
        over = Rect(45, 45, 55, 55)
        touching = Rect(20, 40, 40, 60)  # zero-width intersection
        assert classify_location(far, self.O, self.IM) is LocationModel.FAR
        assert classify_location(close, self.O, self.IM) is LocationModel.CLOSE
        assert classify_location(over, self.O, self.IM) is LocationModel.OVER
        assert classify_location(touching, self.O, self.IM) is LocationModel.CLOSE

    def test_gap_boundary_is_strict(self):
        # gap exactly 10% of the extent is not far
        r = Rect(10, 10, 30, 30)
        assert classify_location(r, self.O, self.IM) is LocationModel.CLOSE
        r = Rect(10, 10, 29.9, 29.9)
        assert classify_location(r, self.O, self.IM) is LocationModel.FAR

    @given(st.integers(0, 90), st.integers(0, 90), st.integers(1, 10), st.integers(1, 10))
    def test_matches_reference(self, x, y, w, h):
        r = Rect(x, y, min(100, x + w), min(100, y + h))
        got = classify_location(r, self.O, self.IM).value
        assert got == oracles.reference_location(r, self.O, 100, 100)

    def test_vectorized_codes_match_scalar(self):
        im = self.IM
        xs = origin_grid(im.width, 7, 5)
        ys = origin_grid(im.height, 9, 4)
        codes = location_codes(self.O, im, xs, ys, 7, 9)
        order = {LocationModel.FAR: 0, LocationModel.CLOSE: 1, LocationModel.OVER: 2}
        i = 0
        for y in ys:
            for x in xs:
                want = order[classify_location(Rect(x, y, x + 7, y + 9), self.O, im)]
                assert codes[i] == want
                i += 1


class TestCoverageMatrix:
    def test_matches_covers(self):
        ms = generate_mask_set(MaskSetConfig(num_lines=3, width=20, height=20))
        xs = origin_grid(20, 4, 3)
        ys = origin_grid(20, 5, 2)
        cov = coverage_matrix(ms, xs, ys, 4, 5)
        assert cov.shape == (12, len(xs) * len(ys))
        for mi, mask in enumerate(ms.masks):
            p = 0
            for y in ys:
                for x in xs:
                    assert cov[mi, p] == covers(mask, Rect(x, y, x + 4, y + 5))
                    p += 1


def small_scene():
    ms = generate_mask_set(MaskSetConfig(num_lines=3, width=12, height=12))
    im = ImageMeta(image_id="s", width=12, height=12, ground_truth=(Box(3, 3, 9, 9, 1, 1.0),))
    store = precompute_store(SyntheticDetector(), [im], ms)
    return ms, im, store


class TestMaskWitnesses:
    def test_witness_requires_positive_bound(self):
        ms, im, store = small_scene()
        o = im.ground_truth[0]
        witnesses = mask_witnesses(o, im, store, ms, CERT, THRESHOLDS, PRUNE)
        for mask, w in zip(ms.masks, witnesses):
            boxes = store.boxes_above(im.image_id, mask.id, 0.0)
            best = max((l_ioa(o, b, PRUNE.ioa_threshold) for b in boxes), default=-1.0)
            assert (w is not None) == (best > CERT.certify_threshold)
            if w is not None:
                assert l_ioa(o, w, PRUNE.ioa_threshold) > CERT.certify_threshold

    def test_threshold_is_strict(self):
        ms, im, store = small_scene()
        o = im.ground_truth[0]
        # the full-object view gives the best possible bound: exactly tau
        exact = CertConfig(certify_threshold=0.599999)
        below = mask_witnesses(o, im, store, ms, exact, THRESHOLDS, PRUNE)
        assert any(w is not None for w in below)
        at = CertConfig(certify_threshold=0.6)
        assert all(
            l_ioa(o, w, PRUNE.ioa_threshold) > 0.6
            for w in mask_witnesses(o, im, store, ms, at, THRESHOLDS, PRUNE)
            if w is not None
        )

    def test_cross_label_boxes_never_witness(self):
        ms, im, store = small_scene()
        o = im.ground_truth[0]
        other = Box(3, 3, 9, 9, 2, 1.0)
        witnesses = mask_witnesses(other, im, store, ms, CERT, THRESHOLDS, PRUNE)
        assert witnesses == [None] * len(ms.masks)


class TestCertifyImage:
    def outcomes(self, **cert_kwargs):
        ms, im, store = small_scene()
        spec = PatchSpec(width=3, height=3, stride=2)
        certs = certify_image(im, store, ms, spec, CertConfig(**cert_kwargs), THRESHOLDS, PRUNE)
        return certs[0].outcomes

    def test_models_partition_placements(self):
        out = self.outcomes()
        total = out[ALL_MODEL].placements
        parts = [out[m.value].placements for m in LocationModel]
        assert sum(parts) == total == len(
            enumerate_patches(PatchSpec(width=3, height=3, stride=2), ImageMeta(image_id="x", width=12, height=12))
        )

    def test_all_model_is_conjunction(self):
        out = self.outcomes()
        assert out[ALL_MODEL].certified == all(out[m.value].certified for m in LocationModel)

    def test_witness_recorded_for_certified_models(self):
        ms, im, store = small_scene()
        out = self.outcomes()
        for model in out.values():
            if model.certified and model.placements:
                assert model.witness_mask is not None
                assert model.witness_box is not None
                assert model.failing_placement is None
            if not model.certified:
                assert model.failing_placement is not None

    def test_threshold_monotonicity(self):
        relaxed = self.outcomes(certify_threshold=0.0)
        strict = self.outcomes(certify_threshold=0.3)
        for name, outcome in strict.items():
            if outcome.certified:
                assert relaxed[name].certified

    def test_nothing_certified_at_or_above_tau(self):
        out = self.outcomes(certify_threshold=0.6)
        for name, outcome in out.items():
            if outcome.placements:
                assert not outcome.certified

    def test_whole_image_patch_defeats_single_masks(self):
        ms, im, store = small_scene()
        spec = PatchSpec(width=12, height=12)
        certs = certify_image(im, store, ms, spec, CERT, THRESHOLDS, PRUNE)
        out = certs[0].outcomes
        assert out[LocationModel.OVER.value].placements == 1
        assert not out[LocationModel.OVER.value].certified
        assert not out[ALL_MODEL].certified
        # no placement is far or close from a patch covering everything
        for m in (LocationModel.FAR, LocationModel.CLOSE):
            assert out[m.value].placements == 0
            assert out[m.value].certified  # vacuously

    def test_scalar_engine_matches_vectorized(self):
        ms, im, store = small_scene()
        spec = PatchSpec(width=3, height=3, stride=1)
        for threshold in (0.0, 0.2):
            vec = certify_image(im, store, ms, spec, CertConfig(certify_threshold=threshold), THRESHOLDS, PRUNE)
            sca = certify_image(
                im, store, ms, spec, CertConfig(certify_threshold=threshold, engine="scalar"), THRESHOLDS, PRUNE
            )
            for v, s in zip(vec, sca):
                for name in v.outcomes:
                    assert v.outcomes[name].certified == s.outcomes[name].certified
                    assert v.outcomes[name].placements == s.outcomes[name].placements


class TestCertifyDataset:
    def test_matches_committed_golden(self, dataset_images, dataset_masks, dataset_store, golden_certify):
        mask_set, mhash = dataset_masks
        report = certify_dataset(
            dataset_images,
            dataset_store,
            mask_set,
            PatchSpec(width=6, height=6, stride=4),
            CERT,
            THRESHOLDS,
            PRUNE,
        )
        assert report.mask_manifest_hash == mhash == golden_certify["config"]["mask_manifest_hash"]
        got_rates = {m: round(r["certr"], 12) for m, r in report.rates().items()}
        assert got_rates == golden_certify["rates"]
        by_key = {(o["image_id"], o["object_index"]): o["models"] for o in golden_certify["objects"]}
        assert len(report.objects) == len(golden_certify["objects"])
        for obj in report.objects:
            want = by_key[(obj.image_id, obj.object_index)]
            got = {name: outcome.certified for name, outcome in obj.outcomes.items()}
            assert got == want

    def test_threads_do_not_change_the_report(self, dataset_images, dataset_masks, dataset_store):
        mask_set, _ = dataset_masks
        spec = PatchSpec(width=6, height=6, stride=8)
        args = (dataset_store, mask_set, spec, CERT, THRESHOLDS, PRUNE)
        single = certify_dataset(dataset_images[:6], *args, threads=1)
        multi = certify_dataset(dataset_images[:6], *args, threads=4)
        assert single.to_dict() == multi.to_dict()

    def test_report_round_trips_to_json_and_csv(self, tmp_path, dataset_images, dataset_masks, dataset_store):
        import csv as csv_mod
        import json

        mask_set, _ = dataset_masks
        report = certify_dataset(
            dataset_images[:2], dataset_store, mask_set, PatchSpec(width=6, height=6, stride=8), CERT, THRESHOLDS, PRUNE
        )
        jp, cp = tmp_path / "report.json", tmp_path / "rates.csv"
        report.write_json(str(jp))
        report.write_csv(str(cp))
        payload = json.loads(jp.read_text())
        assert payload["rates"] == report.to_dict()["rates"]
        rows = list(csv_mod.reader(cp.read_text().splitlines()))
        assert rows[0] == ["model", "certified", "total", "certr"]
        assert {r[0] for r in rows[1:]} == set(report.rates())

    def test_iou_bound_reports_far_only(self):
        ms, im, store = small_scene()
        report = certify_dataset(
            [im], store, ms, PatchSpec(width=3, height=3, stride=2), CertConfig(bound="iou"), THRESHOLDS, PRUNE
        )
        assert report.models() == [LocationModel.FAR.value]


class TestTwoPatch:
    def test_composite_certification_runs_and_is_weaker(self):
        cfg = MaskSetConfig(num_lines=3, width=12, height=12)
        singles = generate_mask_set(cfg)
        composites = generate_two_patch_mask_set(cfg)
        im = ImageMeta(image_id="s", width=12, height=12, ground_truth=(Box(3, 3, 9, 9, 1, 1.0),))
        store_s = precompute_store(SyntheticDetector(), [im], singles)
        store_c = precompute_store(SyntheticDetector(), [im], composites)
        one = certify_image(im, store_s, singles, PatchSpec(width=2, height=2, stride=2), CERT, THRESHOLDS, PRUNE)
        two = certify_image(
            im, store_c, composites, PatchSpec(width=2, height=2, stride=2, count=2), CERT, THRESHOLDS, PRUNE
        )
        pairs = two[0].outcomes[ALL_MODEL].placements
        n = one[0].outcomes[ALL_MODEL].placements
        assert pairs == n * (n + 1) // 2
        for name in two[0].outcomes:
            if two[0].outcomes[name].certified:
                assert one[0].outcomes[name].certified

    def test_pair_grid_size_guard(self):
        ms = generate_mask_set(MaskSetConfig(num_lines=3, width=60, height=60))
        im = ImageMeta(image_id="s", width=60, height=60, ground_truth=(Box(3, 3, 9, 9, 1, 1.0),))
        store = precompute_store(SyntheticDetector(), [im], ms)
        with pytest.raises(ValueError, match="too many pairs"):
            certify_image(
                im, store, ms, PatchSpec(width=2, height=2, stride=1, count=2), CERT, THRESHOLDS, PRUNE
            )

    def test_single_mask_pairs_certify_at_most_what_composites_do(self):
        # pairing with a singles-only set is sound but strictly conservative:
        # one half-plane must cover both placements at once
        cfg = MaskSetConfig(num_lines=3, width=12, height=12)
        singles = generate_mask_set(cfg)
        composites = generate_two_patch_mask_set(cfg)
        im = ImageMeta(image_id="s", width=12, height=12, ground_truth=(Box(3, 3, 9, 9, 1, 1.0),))
        spec = PatchSpec(width=2, height=2, stride=2, count=2)
        weak = certify_image(
            im, precompute_store(SyntheticDetector(), [im], singles), singles, spec, CERT, THRESHOLDS, PRUNE
        )
        strong = certify_image(
            im, precompute_store(SyntheticDetector(), [im], composites), composites, spec, CERT, THRESHOLDS, PRUNE
        )
        for name in weak[0].outcomes:
            if weak[0].outcomes[name].certified and weak[0].outcomes[name].placements:
                assert strong[0].outcomes[name].certified

    def test_attack_suite_rejects_pair_threat_model(self):
        ms, im, store = small_scene()
        with pytest.raises(NotImplementedError):
            attack_soundness_suite(
                [im], store, ms, PatchSpec(width=2, height=2, count=2), CERT, THRESHOLDS, PRUNE, 3, 0
            )


class TestAttackSimulation:
    def test_certified_placement_survives_attacks(self):
        ms, im, store = small_scene()
        o = im.ground_truth[0]
        spec = PatchSpec(width=3, height=3, stride=2)
        certs = certify_image(im, store, ms, spec, CERT, THRESHOLDS, PRUNE)
        witnesses = mask_witnesses(o, im, store, ms, CERT, THRESHOLDS, PRUNE)
        placement = next(
            r
            for r in enumerate_patches(spec, im)
            if any(w is not None and covers(m, r) for m, w in zip(ms.masks, witnesses))
        )
        outcome = simulate_adaptive_attack(
            o, im, store, ms, placement, THRESHOLDS, PRUNE, CERT, trials=60, seed=5
        )
        assert outcome.trials == 60
        assert outcome.violations == 0
        assert outcome.first_violation is None
        assert certs[0].outcomes[ALL_MODEL].placements > 0

    def test_harness_detects_a_broken_pipeline(self, monkeypatch):
        import maskcert.certification as cert_mod

        ms, im, store = small_scene()
        o = im.ground_truth[0]
        monkeypatch.setattr(cert_mod, "robust_infer", lambda *a, **k: [])
        outcome = simulate_adaptive_attack(
            o, im, store, ms, Rect(0, 0, 3, 3), THRESHOLDS, PRUNE, CERT, trials=9, seed=0
        )
        assert outcome.violations == 9
        assert outcome.first_violation["trial"] == 0

    def test_uncertified_placement_is_attackable(self):
        # an object the detector never sees cannot survive the empty strategy
        ms = generate_mask_set(MaskSetConfig(num_lines=3, width=40, height=40))
        o = Box(2, 2, 6, 6, 1, 1.0)
        im = ImageMeta(image_id="s", width=40, height=40, ground_truth=(o,))
        store = precompute_store(SyntheticDetector(), [im], ms)
        blind = store.with_view(im.image_id, {BASE_KEY: (), **{mid: () for mid in store.mask_ids}})
        outcome = simulate_adaptive_attack(
            o, im, blind, ms, Rect(2, 2, 6, 6), THRESHOLDS, PRUNE, CERT, trials=30, seed=1
        )
        assert outcome.violations > 0

    def test_suite_smoke_on_committed_dataset(self, dataset_images, dataset_masks, dataset_store):
        mask_set, _ = dataset_masks
        result = attack_soundness_suite(
            dataset_images[:2],
            dataset_store,
            mask_set,
            PatchSpec(width=6, height=6, stride=4),
            CERT,
            THRESHOLDS,
            PRUNE,
            trials_per_case=60,
            seed=0,
            exact_trials_per_object=2,
        )
        assert result.violations == 0
        assert result.cases > 0
        assert result.placements_covered > 0
        assert result.trials == result.cases * 60
        assert result.exact_trials > 0
        assert result.first_violation is None
