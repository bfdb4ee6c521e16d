"""One quadratic disjunct constraint under every transform.

The constraint x^2 - 1 <= 0 on [-1, 1] is rewritten by each method.  We then
evaluate the exact and eps-hull rows at a point (v, y) = (0.01002, 0.01) that
sits just outside the exact hull but inside the eps-enlarged one.
"""

import numpy as np

from gdpq import QuadraticExpr
from gdpq.oracle import transform_row

h = QuadraticExpr.from_dense(np.array([[1.0]]), np.zeros(1), -1.0)
lo, hi = np.array([-1.0]), np.array([1.0])

for method in ("bigm", "hull-exact", "hull-poly", "hull-eps"):
    row, pack = transform_row(h, lo, hi, method, eps=1e-4)
    print(f"{method:>10}: {row.body}")

v, y = np.array([[0.01002]]), 0.01
for method in ("hull-exact", "hull-eps"):
    row, pack = transform_row(h, lo, hi, method, eps=1e-4)
    print(f"{method:>10} residual at (v={v[0, 0]}, y={y}): {float(row.residual(pack(v, y))[0]):+.3e}")
