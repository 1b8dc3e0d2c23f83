import os
import shutil
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("GRADPF_CLI") or shutil.which("gradpf")
    if not path or not Path(path).exists():
        pytest.skip("gradpf executable not found")
    return path
