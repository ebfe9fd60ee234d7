"""Builds data/nkn31.json: a 31-node, 81-fiber Indian research-network-like topology.

The node set and fiber list are a reconstruction from approximate city coordinates
(minimum spanning tree plus the shortest remaining city pairs), not the operator's
real link map. Fiber lengths are great-circle distances times a 1.25 routing factor.
"""
import json
import math
import os

CITIES = [
    ("Delhi", 28.61, 77.21), ("Mumbai", 19.08, 72.88), ("Kolkata", 22.57, 88.36),
    ("Chennai", 13.08, 80.27), ("Bengaluru", 12.97, 77.59), ("Hyderabad", 17.39, 78.49),
    ("Ahmedabad", 23.02, 72.57), ("Pune", 18.52, 73.86), ("Jaipur", 26.91, 75.79),
    ("Lucknow", 26.85, 80.95), ("Kanpur", 26.45, 80.33), ("Nagpur", 21.15, 79.09),
    ("Bhopal", 23.26, 77.41), ("Patna", 25.59, 85.14), ("Bhubaneswar", 20.30, 85.82),
    ("Guwahati", 26.14, 91.74), ("Chandigarh", 30.73, 76.78), ("Jammu", 32.73, 74.86),
    ("Dehradun", 30.32, 78.03), ("Varanasi", 25.32, 82.97), ("Raipur", 21.25, 81.63),
    ("Ranchi", 23.34, 85.31), ("Indore", 22.72, 75.86), ("Goa", 15.49, 73.83),
    ("Kochi", 9.93, 76.27), ("Thiruvananthapuram", 8.52, 76.94), ("Coimbatore", 11.02, 76.96),
    ("Visakhapatnam", 17.69, 83.22), ("Shillong", 25.58, 91.89), ("Srinagar", 34.08, 74.80),
    ("Gandhinagar", 23.22, 72.65),
]
FIBERS = 81
ROUTING_FACTOR = 1.25


def km(a, b):
    (_, la1, lo1), (_, la2, lo2) = a, b
    p1, p2 = math.radians(la1), math.radians(la2)
    dp, dl = p2 - p1, math.radians(lo2 - lo1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def main():
    n = len(CITIES)
    pairs = sorted(
        (km(CITIES[i], CITIES[j]), i, j) for i in range(n) for j in range(i + 1, n)
    )
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for d, i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            chosen.append((i, j, d))
    tree = {(i, j) for i, j, _ in chosen}
    for d, i, j in pairs:
        if len(chosen) == FIBERS:
            break
        if (i, j) not in tree:
            chosen.append((i, j, d))
    chosen.sort()
    doc = {
        "name": "nkn31-reconstructed",
        "span_km": 80.0,
        "slots_total": 320,
        "ver_fraction": 0.3,
        "nodes": [{"id": i, "name": c[0]} for i, c in enumerate(CITIES)],
        "fibers": [
            {"id": k, "a": i, "b": j, "length_km": max(1.0, round(d * ROUTING_FACTOR))}
            for k, (i, j, d) in enumerate(chosen)
        ],
    }
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "nkn31.json")
    with open(out, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
