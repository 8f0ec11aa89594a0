"""Session-wide acceptance reporting.

Tests named ``test_criterion_NN_*`` anywhere in the run feed one summary
line per criterion number, printed after the normal pytest output.
"""

import re

CRITERIA = {
    1: "divergence correctness",
    2: "k-means reaches the brute-force optimum",
    3: "elbow recovers the planted cluster count",
    4: "fuzzy memberships",
    5: "lookup apportionment",
    6: "pseudo-label fidelity",
    7: "recommendation picks the divergence argmin",
    8: "drift trigger pattern",
    9: "divergence rank tracks proxy error rank",
    10: "concurrent reads and crash recovery",
    11: "latency budgets",
    12: "client wire round-trip",
}

_results = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    m = re.match(r"test_criterion_(\d+)", name)
    if not m:
        return
    num = int(m.group(1))
    if report.when == "call":
        _results[num] = "PASS" if report.passed else "FAIL"
    elif report.skipped:
        _results.setdefault(num, "SKIP")
    elif not report.passed:
        _results[num] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance")
    for num in sorted(_results):
        line = f"[acceptance] criterion {num:02d} {_results[num]} - {CRITERIA.get(num, '')}"
        terminalreporter.write_line(line)
