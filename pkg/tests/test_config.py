"""Configuration parsing tests."""

import pytest

from flavourasym.config import (ConfigError, default_config_text, load_config)
from flavourasym.toygen import EventCategory, GenModel


def write_cfg(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


MINIMAL = """\
[model]
name = QM

[detector]

[backgrounds]

[run]
seed = 11
"""


class TestLoadConfig:
    def test_template_round_trip(self, tmp_path):
        path = write_cfg(tmp_path, default_config_text(seed=99))
        run = load_config(path)
        assert run.model is GenModel.QM
        assert run.pipeline.seed == 99
        assert run.pipeline.params.dm == 0.507
        assert run.pipeline.n_signal == 7815
        assert run.pipeline.unfold.rank_of == 5
        assert run.pipeline.unfold.rank_sf == 6
        assert run.pipeline.constraint.mean == 0.496
        y = run.pipeline.backgrounds.yields
        assert y[EventCategory.WRONG_COMBINATION].n_of == 78.0
        assert y[EventCategory.WRONG_COMBINATION].n_sf == 237.0
        assert y[EventCategory.DSS_CHARGED].n_sf_err == 0.5

    def test_minimal_defaults(self, tmp_path):
        run = load_config(write_cfg(tmp_path, MINIMAL))
        assert run.pipeline.seed == 11
        assert run.pipeline.detector.mistag_fraction == 0.015
        assert not run.pipeline.backgrounds.yields

    def test_seed_is_mandatory(self, tmp_path):
        text = MINIMAL.replace("seed = 11\n", "")
        with pytest.raises(ConfigError, match="seed"):
            load_config(write_cfg(tmp_path, text))

    def test_missing_section(self, tmp_path):
        text = MINIMAL.replace("[detector]\n", "")
        with pytest.raises(ConfigError, match="detector"):
            load_config(write_cfg(tmp_path, text))

    def test_unknown_model(self, tmp_path):
        text = MINIMAL.replace("name = QM", "name = WAVEFUNCTION")
        with pytest.raises(ConfigError, match="WAVEFUNCTION"):
            load_config(write_cfg(tmp_path, text))

    def test_bad_number_diagnostic(self, tmp_path):
        text = MINIMAL + "\n[model]\ndm = fast\n"
        # configparser merges duplicate sections, so rebuild cleanly
        text = MINIMAL.replace("name = QM", "name = QM\ndm = fast")
        with pytest.raises(ConfigError, match="dm"):
            load_config(write_cfg(tmp_path, text))

    def test_background_line_parsing(self, tmp_path):
        text = MINIMAL.replace(
            "[backgrounds]\n",
            "[backgrounds]\ndstar_fake = 10 5 1 2 flat\nfixed_counts = yes\n")
        run = load_config(write_cfg(tmp_path, text))
        y = run.pipeline.backgrounds.yields[EventCategory.DSTAR_FAKE]
        assert (y.n_of, y.n_sf, y.n_of_err, y.n_sf_err) == (10.0, 5.0, 1.0, 2.0)
        assert y.shape.kind == "flat"
        assert run.pipeline.backgrounds.fixed_counts is True

    def test_short_background_line_rejected(self, tmp_path):
        text = MINIMAL.replace("[backgrounds]\n",
                               "[backgrounds]\ndstar_fake = 10\n")
        with pytest.raises(ConfigError, match="dstar_fake"):
            load_config(write_cfg(tmp_path, text))

    def test_custom_binning(self, tmp_path):
        text = MINIMAL + "\n[binning]\nedges = 0 5 10 20\n"
        run = load_config(write_cfg(tmp_path, text))
        assert run.pipeline.binning.n_bins == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")
