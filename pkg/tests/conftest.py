import pytest

from cognav.world import SceneObject, open_room_scene


@pytest.fixture
def box_scene():
    """Open 10 m x 10 m living room with two objects; the interior starts at 0.25 m."""
    return open_room_scene(
        10.0, 10.0, "living room",
        objects=(SceneObject("sofa", (3.125, 3.125)), SceneObject("lamp", (8.125, 8.125))),
    )
