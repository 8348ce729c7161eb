"""Regenerate the pinned golden SVG from the fixture curve used in tests."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from test_figures import GOLDEN, fixture_curve  # noqa: E402

from didkit.figures import render_event_study  # noqa: E402

GOLDEN.parent.mkdir(parents=True, exist_ok=True)
GOLDEN.write_bytes(render_event_study(fixture_curve()))
print(f"wrote {GOLDEN}")
