"""Pull a single handle on an icosphere and save the deformed surface.

Shows the core pipeline: farthest point sampling, handle map construction,
and the folded linear deformation V = C + D Htilde.
"""

import numpy as np

from lapdeform import (
    build_handle_map,
    build_system,
    deform,
    farthest_point_sample,
    icosphere,
    save_obj,
)

template = icosphere(2)
seeds = farthest_point_sample(template, 8)
handles = build_handle_map(template, seeds)
system = build_system(template, handles)
print(f"template: {template.n_vertices} vertices, handles at {seeds.tolist()}")

offsets = np.zeros((8, 3))
offsets[0] = [0.0, 0.8, 0.0]  # pull the first handle upward
pulled = deform(system, offsets)

moved = np.linalg.norm(pulled.vertices - template.vertices, axis=1)
print(f"max vertex displacement {moved.max():.3f}, mean {moved.mean():.3f}")
print("the deformation falls off smoothly away from the pulled handle:")
order = np.argsort(-moved)
for i in order[:3]:
    print(f"  vertex {i}: moved {moved[i]:.3f}")

save_obj(template, "template.obj")
save_obj(pulled, "pulled.obj")
print("wrote template.obj and pulled.obj")
