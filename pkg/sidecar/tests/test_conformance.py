"""Exchange-format conformance: everything this sidecar writes must pass the
analysis package's own validators with zero diagnostics, and its score files
must feed that package's ranking machinery.

The analysis package is used here test-side only; the sidecar runtime never
imports it.
"""

import json

import pytest

from gazesidecar.cli import main
from gazesidecar.jobs import load_job, run_job
from gazesidecar.models import init_scorer

streetgaze_formats = pytest.importorskip("streetgaze.formats")
streetgaze_similarity = pytest.importorskip("streetgaze.similarity")


@pytest.fixture(scope="module")
def full_export(tmp_path_factory, request):
    tmp_path = tmp_path_factory.mktemp("export")
    # rebuild the street fixtures at module scope
    import numpy as np
    from PIL import Image

    photos = tmp_path / "photos"
    photos.mkdir()
    rng = np.random.default_rng(77)
    for k in range(2):
        img = np.zeros((96, 128, 3), dtype=np.uint8)
        img[:32] = (125, 185, 235)
        img[32:64] = (150, 142, 128)
        img[64:] = (88, 90, 94)
        img = np.clip(img.astype(np.int16) + rng.integers(-6, 7, size=img.shape),
                      0, 255).astype(np.uint8)
        Image.fromarray(img, mode="RGB").save(photos / f"img_{k:03d}.png")

    ck = tmp_path / "scorer.pt"
    assert main(["init-scorer", "--out", str(ck)]) == 0
    job_path = tmp_path / "job.json"
    job_path.write_text(json.dumps({
        "tasks": ["segment", "cam"],
        "images": [str(p) for p in sorted(photos.glob("*.png"))],
        "output_dir": "exports",
        "cam_checkpoint": str(ck),
    }))
    run_job(load_job(job_path))

    # perceptual scores between every (human-stand-in, machine) heatmap pair
    human = tmp_path / "exports" / "xai" / "EigenCAM"
    pairs = []
    for method_dir in sorted((tmp_path / "exports" / "xai").iterdir()):
        for png in sorted(method_dir.glob("img_*[0-9].png")):
            pairs.append({
                "image_id": png.stem,
                "method": method_dir.name,
                "human": str(human / png.name),
                "machine": str(png),
            })
    job_path.write_text(json.dumps({
        "tasks": ["lpips"],
        "output_dir": "exports",
        "lpips_pairs": pairs,
    }))
    run_job(load_job(job_path))
    return tmp_path / "exports"


class TestPrimaryValidators:
    def test_segmentation_files_pass(self, full_export):
        pngs = sorted((full_export / "seg").glob("*.png"))
        assert pngs
        for png in pngs:
            assert streetgaze_formats.validate_segmentation_png(png) == []

    def test_heatmap_files_pass(self, full_export):
        pngs = sorted((full_export / "xai").rglob("img_*[0-9].png"))
        assert len(pngs) == 14
        for png in pngs:
            assert streetgaze_formats.validate_heatmap_png(png) == []

    def test_hue_visualizations_pass(self, full_export):
        pngs = sorted((full_export / "xai").rglob("*_hue.png"))
        assert len(pngs) == 14
        for png in pngs:
            assert streetgaze_formats.validate_hue_png(png) == []

    def test_score_file_passes_and_ingests(self, full_export):
        path = full_export / "lpips.jsonl"
        assert streetgaze_formats.validate_lpips_file(path) == []
        mapping, missing = streetgaze_similarity.ingest_lpips(path)
        assert len(mapping) == 14 and missing == []
        # the heatmap scored against itself is the identity pair
        assert mapping[("img_000", "EigenCAM")] <= 1e-6
        assert all(0.0 <= v <= 1.0 for v in mapping.values())

    def test_heatmaps_readable_by_primary(self, full_export):
        png = next(iter(sorted((full_export / "xai" / "GradCAM").glob("img_*[0-9].png"))))
        heatmap, meta = streetgaze_formats.read_heatmap_png(png)
        assert heatmap.cells.min() >= 0.0 and heatmap.cells.max() <= 1.0
        assert meta["image_id"] == png.stem


def test_scores_feed_primary_ranking_logic(full_export, tmp_path):
    """Sidecar-format score files drive the Table-style bold-set machinery."""
    published = {
        "AblationCAM":     (0.4232, 0.5855, 0.0132),
        "EigenCAM":        (0.3512, 0.5478, 0.0143),
        "GradCAM":         (0.4357, 0.5896, 0.0130),
        "GradCAMPlusPlus": (0.4998, 0.5891, 0.0100),
        "HiResCAM":        (0.4386, 0.5688, 0.0127),
        "ScoreCAM":        (0.4631, 0.5806, 0.0100),
        "XGradCAM":        (0.3285, 0.5739, 0.0161),
    }
    # write the published LPIPS column in the sidecar's exchange format
    score_file = tmp_path / "published_lpips.jsonl"
    with open(score_file, "w", encoding="utf-8") as fh:
        for method, (_, lpips, _) in sorted(published.items()):
            fh.write(json.dumps({"image_id": "fixture", "method": method,
                                 "lpips": lpips}, separators=(",", ":")) + "\n")
    mapping, _ = streetgaze_similarity.ingest_lpips(score_file)

    per_image = {"fixture": {
        m: streetgaze_similarity.MethodScore(
            method=m, l2=l2, cosine=cos, lpips=mapping[("fixture", m)],
        )
        for m, (l2, _, cos) in published.items()
    }}
    report = streetgaze_similarity.rank_methods(per_image)
    assert set(report.bold["l2"]) == {"XGradCAM", "EigenCAM"}
    assert set(report.bold["lpips"]) == {"EigenCAM", "HiResCAM"}
    assert set(report.bold["cosine"]) == {"XGradCAM", "EigenCAM"}
