import unittest
import os
import json
import math
import tempfile
from unittest.mock import patch

from src.config import Config, ExperimentConfig
from src.errors import ConfigError

SAMPLE = """
# slow passage through the Turing onset
[experiment]
kind = sweep
seed = 42

[model]
id = m2
a = 2.0   # trailing comment

[sweep]
deltas = 0.2, 0.1
eps = 1e-3,1e-4

[solver]
dealias = false
"""


class TestConfig(unittest.TestCase):
    def setUp(self):
        # Create a temporary settings file
        self.temp_config_fd, self.temp_config_path = tempfile.mkstemp(suffix=".json")
        with os.fdopen(self.temp_config_fd, 'w') as f:
            json.dump({
                "output_dir": "/tmp/custom-runs",
                "record_stride": 5
            }, f)
        self.env = patch.dict(os.environ, {}, clear=False)
        self.env.start()
        for variable in Config.ENVIRONMENT:
            os.environ.pop(variable, None)

    def tearDown(self):
        self.env.stop()
        os.remove(self.temp_config_path)

    def test_load_defaults(self):
        config = Config(config_path="non_existent_file.json")
        self.assertEqual(config.get("output_dir"), "runs")
        self.assertEqual(config.get("workers"), 0)
        self.assertEqual(config.get("record_stride"), 10)
        self.assertEqual(config.get("mod_points"), 256)
        self.assertAlmostEqual(config.get("mod_length"), 40 * math.pi)

    def test_load_from_file(self):
        # an absolute config_path wins over the repository root in os.path.join
        config = Config(config_path=self.temp_config_path)
        self.assertEqual(config.get("output_dir"), "/tmp/custom-runs")
        self.assertEqual(config.get("record_stride"), 5)
        self.assertEqual(config.get("log_level"), "INFO")

    def test_load_from_env(self):
        os.environ["BMOD_OUTPUT_DIR"] = "/tmp/env-runs"
        os.environ["BMOD_WORKERS"] = "3"
        os.environ["BMOD_LOG_LEVEL"] = "DEBUG"

        config = Config(config_path="non_existent_file.json")
        self.assertEqual(config.get("output_dir"), "/tmp/env-runs")
        self.assertEqual(config.get("workers"), 3)
        self.assertEqual(config.get("log_level"), "DEBUG")

    def test_env_override_file(self):
        os.environ["BMOD_RECORD_STRIDE"] = "2"

        config = Config(config_path=self.temp_config_path)
        self.assertEqual(config.get("record_stride"), 2)
        self.assertEqual(config.get("output_dir"), "/tmp/custom-runs")  # From file

    def test_bad_env_value_is_ignored(self):
        os.environ["BMOD_WORKERS"] = "many"
        config = Config(config_path="non_existent_file.json")
        self.assertEqual(config.get("workers"), 0)

    def test_unreadable_file_falls_back_to_defaults(self):
        with open(self.temp_config_path, "w") as f:
            f.write("{not json")
        config = Config(config_path=self.temp_config_path)
        self.assertEqual(config.get("output_dir"), "runs")


class TestExperimentConfig(unittest.TestCase):
    def test_defaults(self):
        config = ExperimentConfig()
        self.assertEqual(config.get("experiment", "kind"), "simulate")
        self.assertEqual(config.get("model", "id"), "m1")
        self.assertEqual(config.get("validate", "deltas"), [0.2, 0.1, 0.05])
        self.assertTrue(config.get("solver", "dealias"))

    def test_parse_typed_values(self):
        config = ExperimentConfig.parse(SAMPLE)
        self.assertEqual(config.get("experiment", "kind"), "sweep")
        self.assertEqual(config.get("experiment", "seed"), 42)
        self.assertEqual(config.get("model", "a"), 2.0)
        self.assertEqual(config.get("sweep", "deltas"), [0.2, 0.1])
        self.assertEqual(config.get("sweep", "eps"), [1e-3, 1e-4])
        self.assertFalse(config.get("solver", "dealias"))
        # untouched keys keep their defaults
        self.assertEqual(config.get("model", "d1"), 1.0)

    def test_round_trip(self):
        config = ExperimentConfig.parse(SAMPLE)
        config.set("geometry", "slow", 1.0 / 3.0)
        self.assertEqual(ExperimentConfig.parse(config.dumps()), config)

    def test_unknown_key_reports_line(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.parse("[model]\nid = m1\nalpha = 3\n")
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn("alpha", str(ctx.exception))

    def test_unknown_section(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.parse("# header\n[plotting]\n")
        self.assertEqual(ctx.exception.line, 2)

    def test_malformed_line(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.parse("[solver]\ndt 0.01\n")
        self.assertEqual(ctx.exception.line, 2)

    def test_key_outside_section(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.parse("seed = 1\n")
        self.assertEqual(ctx.exception.line, 1)

    def test_bad_values(self):
        for text in ("[experiment]\nseed = one\n", "[solver]\ndealias = yes\n", "[solver]\nscheme = rk45\n",
                     "[sweep]\neps = 1e-3, small\n"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigError) as ctx:
                    ExperimentConfig.parse(text)
                self.assertEqual(ctx.exception.line, 2)

    def test_choices_are_case_insensitive(self):
        config = ExperimentConfig.parse("[geometry]\nchart = K3\n")
        self.assertEqual(config.get("geometry", "chart"), "k3")

    def test_load_missing_file(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig.load("/nonexistent/experiment.cfg")

if __name__ == '__main__':
    unittest.main()
