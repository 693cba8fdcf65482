"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test prints one ``criterion N: PASS|FAIL`` line followed by the
measured values; the lines are repeated in the terminal summary.
"""

import pytest

from mcfpf.recipes import SUITES

CRITERIA = [
    (1, "geodesic surface tensions", "geodesic"),
    (2, "energy-dissipation identity", "dissipation"),
    (3, "minimizing-movements estimate", "mm"),
    (4, "shrinking circle law", "circle"),
    (5, "equipartition of energy", "equipartition"),
    (6, "weak identity", "weakidentity"),
    (7, "volume-preserving variant", "volume"),
    (8, "forced variant", "forced"),
    (9, "Herring angles", "herring"),
    (10, "convergence-assumption monitor", "monitor"),
    (11, "invariant suites", "invariants"),
]

SUMMARY = []


@pytest.mark.acceptance
@pytest.mark.parametrize("number, title, suite", CRITERIA, ids=[f"criterion{c[0]}-{c[2]}" for c in CRITERIA])
def test_criterion(number, title, suite):
    results = SUITES[suite]()
    ok = all(r.passed for r in results)
    head = f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}"
    SUMMARY.append(head)
    print(head)
    for r in results:
        print("    " + r.line())
    failed = [r.line() for r in results if not r.passed]
    assert ok, "\n".join(failed)
