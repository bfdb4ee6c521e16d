"""Solve a tiny k-means GDP through its hull reformulation and check it by enumeration."""

import itertools

import numpy as np

from gdpq.gen import KmeansParams, gen_kmeans
from gdpq.oracle import BruteForceBudget, brute_force_solve
from gdpq.reform import reformulate

gdp = gen_kmeans(KmeansParams(K=2, n_points=5, n_dims=2, seed=6))
points = np.asarray(gdp.metadata["points"])
minlp, report = reformulate(gdp, "hull-exact")
print("hull-exact MINLP:", report.counts)

res = brute_force_solve(minlp, BruteForceBudget(seed=6))
print(f"brute force: status={res.status} objective={res.objective:.8f}")

best = np.inf
for labels in itertools.product(range(2), repeat=len(points)):
    labels = np.array(labels)
    cost = sum(np.sum((points[labels == k] - points[labels == k].mean(0)) ** 2)
               for k in range(2) if np.any(labels == k))
    best = min(best, cost)
print(f"enumeration: objective={best:.8f}")
