"""Summarize a family of recovered deformations with PCA.

Plants two orthogonal deformation modes with different variances in 300
samples, then recovers both directions and variances from the samples alone.
"""

import numpy as np

from lapdeform import pca_deformations

rng = np.random.default_rng(0)
k = 8
m1 = rng.standard_normal(3 * k)
m1 /= np.linalg.norm(m1)
m2 = rng.standard_normal(3 * k)
m2 -= (m2 @ m1) * m1
m2 /= np.linalg.norm(m2)

a = 3.0 * rng.standard_normal(300)  # dominant mode
b = 1.0 * rng.standard_normal(300)  # secondary mode
samples = [(ai * m1 + bi * m2).reshape(k, 3) for ai, bi in zip(a, b)]

mean, modes, variances = pca_deformations(samples, 2)
print(f"recovered variances {variances[0]:.2f}, {variances[1]:.2f} "
      f"(planted {np.var(a):.2f}, {np.var(b):.2f})")
print(f"mode alignment with planted directions: "
      f"{abs(modes[0].ravel() @ m1):.4f}, {abs(modes[1].ravel() @ m2):.4f}")
