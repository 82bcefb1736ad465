#!/usr/bin/env python3
"""Checkpoint values of the bundled risk-score curves, computed with scipy.

Regenerate with:  python3 tests/oracles/pchip_golden.py > tests/golden/risk_curves.csv
"""
from scipy.interpolate import PchipInterpolator

CURVES = [
    ("nodes", [0, 5, 10, 20, 30, 40, 50], [-0.6, -0.1, 0.25, 0.6, 0.8, 0.9, 0.95]),
    ("age", [45, 50, 55, 60, 65, 70], [0.5, 0.1, -0.15, -0.15, 0.1, 0.5]),
    ("bmi", [17, 22, 27, 32, 38, 45], [-0.4, -0.25, 0.0, 0.2, 0.4, 0.6]),
]
FRACTIONS = [0.1, 0.3, 0.5, 0.7, 0.9]

print("curve,x,y")
for name, xs, ys in CURVES:
    f = PchipInterpolator(xs, ys)
    for t in FRACTIONS:
        x = xs[0] + (xs[-1] - xs[0]) * t
        print(f"{name},{x!r},{float(f(x))!r}")
