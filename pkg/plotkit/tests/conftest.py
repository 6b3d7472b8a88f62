import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))


def _run_primary(preset: str, out_dir: Path) -> Path:
    """Produce a scenario CSV through the primary package's CLI."""
    proc = subprocess.run(
        [
            sys.executable, "-m", "ncfilter", "run", preset,
            "--dt", "0.005", "--T", "10", "--out", str(out_dir),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return out_dir / f"{preset}.csv"


@pytest.fixture(scope="session")
def fig1_csv(tmp_path_factory) -> Path:
    return _run_primary("fig1-ground", tmp_path_factory.mktemp("fig1"))


@pytest.fixture(scope="session")
def fig2_csv(tmp_path_factory) -> Path:
    return _run_primary("fig2-ground", tmp_path_factory.mktemp("fig2"))
