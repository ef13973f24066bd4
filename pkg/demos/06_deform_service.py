"""Exercise the HTTP deformation service in-process.

The same app that `lapdeform serve` binds to a port is driven here through
a test client, showing the three endpoints the browser editor consumes.
"""

import numpy as np
from fastapi.testclient import TestClient

from lapdeform import build_handle_map, build_system, farthest_point_sample, icosphere
from lapdeform.service import create_app

template = icosphere(2)
handles = build_handle_map(template, farthest_point_sample(template, 8))
system = build_system(template, handles)
client = TestClient(create_app(system))

mesh = client.get("/mesh").json()
print(f"GET /mesh -> {len(mesh['vertices'])} vertices, {len(mesh['faces'])} faces")

info = client.get("/handles").json()
print(f"GET /handles -> k={info['k']}, seeds {info['seeds']}")

offsets = np.zeros((info["k"], 3))
offsets[0] = [0.0, 0.5, 0.0]
resp = client.post("/deform", json={"offsets": offsets.tolist()})
vertices = np.asarray(resp.json()["vertices"])
print(f"POST /deform -> {resp.status_code}, "
      f"max displacement {np.abs(vertices - template.vertices).max():.3f}")

bad = client.post("/deform", json={"offsets": [[0, 0, 0]]})
print(f"POST /deform with the wrong shape -> {bad.status_code}: {bad.json()['error']}")
