#!/usr/bin/env python3
"""Regenerate the committed files under data/.

Everything here is deterministic (fixed seeds, fixed formatting), so the
checked-in files can be reproduced byte for byte:

  districts544.graph  synthetic 544-district adjacency at the scale of a
                      national district map: Delaunay triangulation of a
                      fixed-seed point cloud (planar, connected, mean degree
                      about 6, matching typical administrative adjacency)
  counties11.graph    the same construction at 11 nodes
  covid_sample.csv    cumulative daily counts for the 11-county graph over
                      40 days, one series per county, Poisson draws around a
                      smooth epidemic-style intensity (exercise for --cumulative)

Usage: python3 tools/make_assets.py [out_dir]   (default: data/)
"""

import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay


def delaunay_graph(n_nodes: int, seed: int) -> list[set[int]]:
    rng = np.random.default_rng(seed)
    pts = rng.random((n_nodes, 2))
    tri = Delaunay(pts)
    adj: list[set[int]] = [set() for _ in range(n_nodes)]
    for simplex in tri.simplices:
        for a in simplex:
            for b in simplex:
                if a != b:
                    adj[int(a)].add(int(b))
    # connectivity check (Delaunay of points in general position always is)
    seen = {0}
    stack = [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    assert len(seen) == n_nodes, "generated graph is disconnected"
    return adj


def write_graph(path: Path, adj: list[set[int]]) -> None:
    lines = [str(len(adj))]
    for i, nbs in enumerate(adj):
        ordered = sorted(nbs)
        lines.append(f"{i} {len(ordered)} " + " ".join(map(str, ordered)))
    path.write_text("\n".join(lines) + "\n")
    degs = [len(a) for a in adj]
    print(f"{path}: {len(adj)} nodes, mean degree {sum(degs) / len(degs):.2f}")


def write_covid_sample(path: Path, n_nodes: int, n_days: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    # county-level exposure (population scale) and a shared epidemic curve
    exposure = np.round(rng.uniform(0.5, 3.0, n_nodes), 2)
    t = np.arange(1, n_days + 1)
    curve = np.exp(1.0 + 1.6 * np.exp(-0.5 * ((t - 22.0) / 8.0) ** 2) - 0.8)
    county_level = rng.normal(0.0, 0.25, n_nodes)
    rows = ["time,region,count,exposure,replicate"]
    for s in range(n_nodes):
        lam = exposure[s] * curve * np.exp(county_level[s])
        daily = rng.poisson(lam)
        cumulative = np.cumsum(daily)
        for ti in range(n_days):
            rows.append(f"{ti + 1},{s},{cumulative[ti]},{exposure[s]},1")
    path.write_text("\n".join(rows) + "\n")
    print(f"{path}: {n_nodes * n_days} cumulative rows over {n_days} days")


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data"
    out.mkdir(parents=True, exist_ok=True)
    write_graph(out / "districts544.graph", delaunay_graph(544, seed=20240544))
    write_graph(out / "counties11.graph", delaunay_graph(11, seed=2024011))
    write_covid_sample(out / "covid_sample.csv", n_nodes=11, n_days=40, seed=424242)


if __name__ == "__main__":
    main()
