import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from textinpaint.datagen import RenderStyle, render_text_image  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def rendered_word():
    """A deterministic 32x128 render of 'HELLO' with its segmap."""
    style = RenderStyle()
    return render_text_image("HELLO", style, np.random.default_rng(7), 32, 128)
