import pytest

from roiaug.config import apply_overrides, load_config


class TestLoadConfig:
    def test_defaults_match_pipeline_defaults(self):
        cfg = load_config(None)
        assert cfg.bank.window_sizes == (192, 256, 320)
        assert cfg.bank.stride == 64
        assert cfg.bank.k == 5
        assert cfg.bank.nms_iou == 0.5
        assert cfg.mask.min_component_frac == 0.005
        assert cfg.mask.closing_radius == 7
        assert cfg.saliency.lambda_blend == 0.6
        assert cfg.saliency.var_window == 31
        assert cfg.saliency.log_sigma == 1.5
        assert cfg.sampler.out_size == 640
        assert cfg.n_folds == 4
        assert cfg.seed == 0

    def test_toml_file(self, tmp_path):
        p = tmp_path / "run.toml"
        p.write_text("""
seed = 42

[sampler]
p_roi = 0.25
alpha = 0.2

[bank]
window_sizes = [128, 160]
stride = 32
""")
        cfg = load_config(p)
        assert cfg.seed == 42
        assert cfg.sampler.seed == 42
        assert cfg.sampler.p_roi == 0.25
        assert cfg.bank.window_sizes == (128, 160)

    def test_unknown_top_key_rejected(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("mystery = 1\n")
        with pytest.raises(ValueError, match="mystery"):
            load_config(p)

    def test_unknown_section_key_rejected(self, tmp_path):
        p = tmp_path / "bad2.toml"
        p.write_text("[sampler]\nbogus = 3\n")
        with pytest.raises(ValueError, match="bogus"):
            load_config(p)

    def test_invalid_value_rejected(self, tmp_path):
        p = tmp_path / "bad3.toml"
        p.write_text("[sampler]\np_roi = 1.5\n")
        with pytest.raises(ValueError):
            load_config(p)


class TestOverrides:
    def test_typed_values(self):
        cfg = load_config(None, ["sampler.p_roi=0.25", "bank.stride=32",
                                 "seed=9", "bank.window_sizes=[96, 128]"])
        assert cfg.sampler.p_roi == 0.25
        assert cfg.bank.stride == 32
        assert cfg.seed == 9 and cfg.sampler.seed == 9
        assert cfg.bank.window_sizes == (96, 128)

    def test_override_beats_file(self, tmp_path):
        p = tmp_path / "run.toml"
        p.write_text("[sampler]\np_roi = 0.05\n")
        cfg = load_config(p, ["sampler.p_roi=0.10"])
        assert cfg.sampler.p_roi == 0.10

    def test_malformed_override(self):
        with pytest.raises(ValueError, match="key=value"):
            apply_overrides({}, ["nonsense"])

    def test_unknown_override_key_rejected(self):
        with pytest.raises(ValueError):
            load_config(None, ["sampler.nope=1"])

    def test_grid_cells_expressible(self):
        # every published sweep cell is one override pair away from defaults
        for p_roi in (0.05, 0.10, 0.25):
            for alpha in (0.0, 0.1, 0.2):
                cfg = load_config(None, [f"sampler.p_roi={p_roi}",
                                         f"sampler.alpha={alpha}"])
                assert cfg.sampler.p_roi == p_roi
                assert cfg.sampler.alpha == alpha
