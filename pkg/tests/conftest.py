import json
from pathlib import Path

import pytest

from greengate.plan import load_plan, parse_plan

FIXTURES = Path(__file__).parent / "fixtures"


def make_plan(rows: str, scale: float = 0.5, plan_id: str = "t", wall_height: float = 2.8):
    """Build a plan from whitespace-separated token rows."""
    lines = [" ".join(line.split()) for line in rows.strip().splitlines()]
    header = {"id": plan_id, "width": len(lines[0].split()), "height": len(lines),
              "scale": scale, "wall_height": wall_height}
    return parse_plan(json.dumps(header, sort_keys=True) + "\n" + "\n".join(lines) + "\n")


@pytest.fixture
def minimal():
    return load_plan(FIXTURES / "minimal.fpgrid")


@pytest.fixture
def three_room():
    return load_plan(FIXTURES / "three_room.fpgrid")


@pytest.fixture
def envelope():
    return load_plan(FIXTURES / "envelope.fpgrid")
