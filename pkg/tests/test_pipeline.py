import json

import pytest

from cdnarec.pipeline import GaborConfig, PipelineConfig, run
from cdnarec.synth import SynthSpec, dice, generate, grid_error


def test_default_run_on_synth():
    image, truth = generate(SynthSpec(jitter=1.0, noise_sigma=0.05, seed=1))
    res = run(image)
    assert dice(res.segmentation.mask, truth.mask) >= 0.9
    mean_err, max_err = grid_error(truth.grid, res.grid)
    assert mean_err <= 1 and max_err <= 2
    assert res.matrix.data.shape == (20, 20)
    assert res.segmentation.panels["A_enhanced"] == res.enhanced


def test_enhanced_sources_are_selectable():
    image, _ = generate(SynthSpec())
    cfg = PipelineConfig(grid_source="enhanced", segment_source="enhanced")
    res = run(image, cfg)
    assert res.grid.n_cols == 4


def test_config_round_trip():
    cfg = PipelineConfig.from_dict({"gabor": {"k": 1.0, "orientations": [0.0]},
                                    "segmentation": {"combine": "or"}, "seed": 3})
    assert cfg.gabor.k == 1.0 and cfg.segmentation.combine == "or"
    assert cfg.gabor.sigma == GaborConfig().sigma
    assert PipelineConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()


@pytest.mark.parametrize("doc", [
    {"colour": 1},
    {"gabor": {"frequency": 2}},
    {"gabor": 3},
    {"grid_source": "sideways"},
    {"segmentation": {"combine": "xor"}},
    {"train": {"eta0": -1}},
])
def test_config_rejects_bad_documents(doc):
    with pytest.raises(ValueError):
        PipelineConfig.from_dict(doc)


def test_config_json_is_plain():
    doc = json.loads(PipelineConfig().to_json())
    assert set(doc) == {"gabor", "gridding", "segmentation", "network", "train",
                        "grid_source", "segment_source", "seed"}
