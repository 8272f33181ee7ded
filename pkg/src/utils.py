import logging
import os
import platform
import subprocess

import numpy as np
import psutil
import scipy

PACKAGE_VERSION = "0.1.0"


def setup_logging(level=logging.INFO):
    """
    Configures the logging for the application.

    Args:
        level (int or str, optional): The logging level (default: logging.INFO).
    """
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')
    logging.getLogger().setLevel(level)

def run_command(command, shell=False):
    """
    Executes a shell command.

    Args:
        command (list or str): The command to execute. Should be a list if shell=False.
        shell (bool, optional): Whether to use the shell to execute the command. Defaults to False.

    Returns:
        tuple: (return_code, stdout, stderr)
    """
    try:
        logging.info(f"Running command: {command}")
        # shell=True should be avoided when possible.
        result = subprocess.run(
            command,
            shell=shell,
            capture_output=True,
            text=True,
            check=False
        )
        if result.returncode != 0:
            logging.error(f"Command failed with code {result.returncode}: {result.stderr}")
        return result.returncode, result.stdout, result.stderr
    except Exception as e:
        logging.error(f"Exception executing command: {e}")
        return -1, "", str(e)

def project_version():
    """
    git-describe style version of the checkout, or the package version
    when the tree is not a git checkout.
    """
    repo = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    code, stdout, _ = run_command(["git", "-C", repo, "describe", "--tags", "--always", "--dirty"])
    if code == 0 and stdout.strip():
        return stdout.strip()
    return PACKAGE_VERSION

def platform_fingerprint():
    """Machine and library versions recorded next to every run's artifacts."""
    memory = psutil.virtual_memory()
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "logical_cpus": psutil.cpu_count(logical=True),
        "physical_cpus": psutil.cpu_count(logical=False),
        "memory_bytes": int(memory.total),
    }

def run_generator(seed, index=0):
    """
    Counter-based generator for run `index` of a sweep. The same (seed, index)
    gives the same stream regardless of which worker executes the run.
    """
    if seed < 0 or index < 0:
        raise ValueError(f"seed and run index must be nonnegative, got {seed} / {index}")
    key = int(seed) % (1 << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(index)]))

def worker_count(requested=0):
    """Pool size: `requested` when positive, otherwise the logical core count."""
    if requested and requested > 0:
        return int(requested)
    return psutil.cpu_count(logical=True) or 1
