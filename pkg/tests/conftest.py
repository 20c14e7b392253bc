import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from meco.tokenizer import load_tokenizer  # noqa: E402


@pytest.fixture(scope="session")
def byte_tok():
    return load_tokenizer("builtin")
