import unittest
from unittest.mock import patch, MagicMock

import numpy as np

from src import utils


def completed(returncode=0, stdout="", stderr=""):
    result = MagicMock()
    result.returncode = returncode
    result.stdout = stdout
    result.stderr = stderr
    return result


class TestRunCommand(unittest.TestCase):
    @patch('subprocess.run')
    def test_run_command_success(self, mock_run):
        mock_run.return_value = completed(stdout="v0.1.0-3-gabc1234\n")

        code, stdout, stderr = utils.run_command(["git", "describe", "--tags"])

        self.assertEqual(code, 0)
        self.assertEqual(stdout, "v0.1.0-3-gabc1234\n")
        self.assertEqual(stderr, "")
        mock_run.assert_called_once()

    @patch('subprocess.run')
    def test_run_command_failure(self, mock_run):
        mock_run.return_value = completed(returncode=128, stderr="fatal: not a git repository")

        code, stdout, stderr = utils.run_command(["git", "describe"])

        self.assertEqual(code, 128)
        self.assertEqual(stdout, "")
        self.assertIn("not a git repository", stderr)

    @patch('subprocess.run')
    def test_run_command_exception(self, mock_run):
        mock_run.side_effect = FileNotFoundError("git")

        code, stdout, stderr = utils.run_command(["git", "describe"])

        self.assertEqual(code, -1)
        self.assertEqual(stdout, "")
        self.assertIn("git", stderr)

    @patch('subprocess.run')
    def test_run_command_shell(self, mock_run):
        mock_run.return_value = completed(stdout="ok")

        utils.run_command("git status --short", shell=True)

        mock_run.assert_called_with(
            "git status --short",
            shell=True,
            capture_output=True,
            text=True,
            check=False
        )


class TestProvenance(unittest.TestCase):
    @patch('subprocess.run')
    def test_version_from_git(self, mock_run):
        mock_run.return_value = completed(stdout="v0.1.0-dirty\n")
        self.assertEqual(utils.project_version(), "v0.1.0-dirty")

    @patch('subprocess.run')
    def test_version_fallback(self, mock_run):
        mock_run.return_value = completed(returncode=128, stderr="fatal")
        self.assertEqual(utils.project_version(), utils.PACKAGE_VERSION)

    @patch('src.utils.psutil')
    def test_platform_fingerprint(self, mock_psutil):
        mock_psutil.cpu_count.side_effect = lambda logical=True: 8 if logical else 4
        mock_psutil.virtual_memory.return_value = MagicMock(total=16 * 2 ** 30)

        fingerprint = utils.platform_fingerprint()

        self.assertEqual(fingerprint["logical_cpus"], 8)
        self.assertEqual(fingerprint["physical_cpus"], 4)
        self.assertEqual(fingerprint["memory_bytes"], 16 * 2 ** 30)
        self.assertEqual(fingerprint["numpy"], np.__version__)


class TestSeeds(unittest.TestCase):
    def test_same_seed_and_index_repeat(self):
        first = utils.run_generator(7, 3).standard_normal(5)
        second = utils.run_generator(7, 3).standard_normal(5)
        np.testing.assert_array_equal(first, second)

    def test_runs_get_distinct_streams(self):
        a = utils.run_generator(7, 0).standard_normal(5)
        b = utils.run_generator(7, 1).standard_normal(5)
        c = utils.run_generator(8, 0).standard_normal(5)
        self.assertFalse(np.array_equal(a, b))
        self.assertFalse(np.array_equal(a, c))

    def test_negative_seed_rejected(self):
        with self.assertRaises(ValueError):
            utils.run_generator(-1)


class TestWorkerCount(unittest.TestCase):
    def test_explicit(self):
        self.assertEqual(utils.worker_count(3), 3)

    @patch('src.utils.psutil')
    def test_defaults_to_logical_cores(self, mock_psutil):
        mock_psutil.cpu_count.return_value = 12
        self.assertEqual(utils.worker_count(0), 12)
        mock_psutil.cpu_count.assert_called_with(logical=True)

if __name__ == '__main__':
    unittest.main()
