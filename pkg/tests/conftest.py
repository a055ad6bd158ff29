import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

PROGRAMS = Path(__file__).parent.parent / "programs"


@pytest.fixture(scope="session")
def programs_dir() -> Path:
    return PROGRAMS


@pytest.fixture(scope="session")
def nonlinear_square_cfa():
    from cmcheck import lang

    return lang.parse_program((PROGRAMS / "nonlinear_square.imp").read_text())


@pytest.fixture(scope="session")
def deep_loop_bug_cfa():
    from cmcheck import lang

    return lang.parse_program((PROGRAMS / "deep_loop_shallow_bug.imp").read_text())
