"""Scripted HMI session: touch events in, reconstructions and actions out.

Drives the session engine directly (no HTTP): a press in the left third
holds move-left, a short middle tap releases into jump-low.
"""

import numpy as np

from tactile_eit.geometry import SensorGeometry
from tactile_eit.service import Session, replay_events

session = Session(geom=SensorGeometry(channel_width=4.0, layer_thickness=3.0),
                  noise_snr_db=40.0, seed=0)

script = [
    {"id": 1, "event": "down", "position": (15.0, 50.0), "depth": 2.0},
    *[{"tick": True}] * 6,
    {"id": 1, "event": "up"},
    *[{"tick": True}] * 2,
    {"id": 2, "event": "down", "position": (50.0, 50.0), "depth": 2.0},
    *[{"tick": True}] * 3,
    {"id": 2, "event": "up"},
    *[{"tick": True}] * 3,
]

actions = replay_events(session, script)
for i, action in enumerate(actions, 1):
    print(f"tick {i:2d}: {action}")

state = session.snapshot()
img = np.frombuffer(__import__("base64").b64decode(state["img"]), dtype=np.uint8)
print(f"last tick seq={state['seq']}, image bytes={img.size}, "
      f"action={state['action']['kind']}")
print("to run the HTTP service:  tactile-eit serve --port 8787")
