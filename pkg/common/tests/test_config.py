import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from common.config import config_from_mapping, parse_config, parse_config_text
from common.exceptions import ConfigError


class ParseConfigTests(SimpleTestCase):
    def test_empty_file_gives_defaults(self):
        config = parse_config_text("")
        self.assertEqual(config.cutoff_upper, 5.0)
        self.assertEqual(config.num_rbf, 32)
        self.assertEqual(config.prior_model, "")
        self.assertEqual(config.particles, [1024, 4096])

    def test_values_and_comments(self):
        config = parse_config_text(
            "# model\nnum_rbf: 16\ncutoff_upper: 4.5  # Å\nstatic_shapes: true\n"
        )
        self.assertEqual(config.num_rbf, 16)
        self.assertEqual(config.cutoff_upper, 4.5)
        self.assertTrue(config.static_shapes)

    def test_lists(self):
        config = parse_config_text("particles: [100, 200]\nstrategies: brute\n")
        self.assertEqual(config.particles, [100, 200])
        self.assertEqual(config.strategies, ["brute"])

    def test_split_sizes(self):
        config = parse_config_text("train_size: 800\nval_size: 0.1\n")
        self.assertEqual(config.train_size, 800)
        self.assertIsInstance(config.train_size, int)
        self.assertEqual(config.val_size, 0.1)

    def test_unknown_key_suggestion(self):
        with self.assertRaisesMessage(
            ConfigError, "line 2: unknown key 'cutoff_uper' (did you mean 'cutoff_upper'?)"
        ):
            parse_config_text("num_rbf: 8\ncutoff_uper: 4.0\n")

    def test_duplicate_key(self):
        with self.assertRaisesMessage(ConfigError, "line 3: duplicate key 'lr'"):
            parse_config_text("lr: 0.1\nseed: 2\nlr: 0.2\n")

    def test_malformed_line(self):
        with self.assertRaisesMessage(ConfigError, "line 1: expected 'key: value'"):
            parse_config_text("num_rbf 8\n")

    def test_invalid_values(self):
        for text in (
            "num_rbf: many\n",
            "cutoff_lower: 6.0\n",
            "train_size: 1.5\n",
            "strategy: octree\n",
            "atomref_table: 8:-75\n",
            "scan_species: 1\n",
        ):
            with self.subTest(text=text), self.assertRaises(ConfigError):
                parse_config_text(text)

    def test_missing_file(self):
        with self.assertRaisesMessage(ConfigError, "not found"):
            parse_config("/nonexistent/run.conf")

    def test_file_keeps_its_text(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "run.conf"
            path.write_text("seed: 9\n", encoding="utf-8")
            config = parse_config(path)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.text, "seed: 9\n")


class RunConfigTests(SimpleTestCase):
    def test_mapping(self):
        config = config_from_mapping({"num_layers": 0})
        self.assertEqual(config.num_layers, 0)
        with self.assertRaisesMessage(ConfigError, "did you mean 'num_layers'"):
            config_from_mapping({"num_layer": 3})

    def test_replace(self):
        config = config_from_mapping().replace(seed=12)
        self.assertEqual(config.seed, 12)
        with self.assertRaises(ConfigError):
            config.replace(seed=-1)

    def test_atomref_table(self):
        config = config_from_mapping({"atomref_table": "1=-0.5, 8=-75.0"})
        self.assertEqual(config.atomref, {1: -0.5, 8: -75.0})

    def test_text_round_trip(self):
        config = config_from_mapping({"particles": [10, 20], "static_shapes": True, "lr": 0.01})
        again = parse_config_text(config.to_text())
        self.assertEqual(again.as_dict(), config.as_dict())

    def test_unknown_attribute(self):
        with self.assertRaises(AttributeError):
            config_from_mapping().num_atoms
