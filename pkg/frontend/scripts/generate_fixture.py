"""Generate the editor test fixture from the Python backend.

The browser tests mock the deformation service; this script freezes the real
service's responses (template, handles, fold matrices) plus one deformation
produced through the command-line `deform` round trip, so the editor's export
can be checked against the actual backend to 1e-9.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from lapdeform import (
    build_handle_map,
    build_system,
    farthest_point_sample,
    icosphere,
    load_obj,
    save_obj,
)
from lapdeform.cli import main as cli_main

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "deform_fixture.json"

template = icosphere(1)
handles = build_handle_map(template, farthest_point_sample(template, 8))
system = build_system(template, handles)

rng = np.random.default_rng(0)
offsets = np.round(0.2 * rng.standard_normal((8, 3)), 6)

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    save_obj(template, tmp / "template.obj")
    handles.save(tmp / "handles.json")
    (tmp / "offsets.json").write_text(json.dumps({"offsets": offsets.tolist()}))
    rc = cli_main([
        "deform", "--mesh", str(tmp / "template.obj"),
        "--handles", str(tmp / "handles.json"),
        "--offsets", str(tmp / "offsets.json"),
        "--out", str(tmp / "deformed.obj"),
    ])
    assert rc == 0
    deformed = load_obj(tmp / "deformed.obj")

direct = system.deform_vertices(offsets)
assert np.abs(direct - deformed.vertices).max() <= 1e-9, "CLI round trip drifted"

fixture = {
    "mesh": {
        "vertices": template.vertices.tolist(),
        "faces": template.faces.tolist(),
    },
    "handles": {
        "k": 8,
        "seeds": handles.seed_vertices.tolist(),
        "template_positions": system.template_handles.tolist(),
    },
    "fold_offset": system.fold_offset.tolist(),
    "fold_map": system.fold_map.tolist(),
    "offsets": offsets.tolist(),
    "deformed_vertices": deformed.vertices.tolist(),
}
OUT.write_text(json.dumps(fixture))
print(f"wrote {OUT} ({OUT.stat().st_size} bytes)")
