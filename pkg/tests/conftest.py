import os
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]
SYNTHETIC_CONFIG = REPO / "configs" / "synthetic.json"


def bank_csv_path():
    """Real UCI bank-additional-full.csv, if the user has supplied it."""
    env = os.environ.get("AEMINER_BANK_CSV")
    candidates = [Path(env)] if env else []
    candidates.append(REPO / "data" / "bank-additional-full.csv")
    for path in candidates:
        if path.is_file():
            return path
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    name = report.nodeid.split("::")[-1]
    if not name.startswith("test_c"):
        return
    number = int(name[6:8])
    props = dict(report.user_properties)
    _acceptance.setdefault(number, []).append((name, report.outcome, props.get("measured", ""), report))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    from test_acceptance import CRITERIA

    tr = terminalreporter
    tr.section("acceptance criteria")
    partial = False
    for number, title in CRITERIA.items():
        runs = _acceptance.get(number)
        if not runs:
            tr.write_line(f"criterion {number:2d}  NOT RUN {title}")
            continue
        outcomes = [o for _, o, _, _ in runs]
        if "failed" in outcomes:
            status = "FAIL"
        elif "skipped" in outcomes and "passed" in outcomes:
            status = "PASS*"
            partial = True
        elif "passed" in outcomes:
            status = "PASS"
        else:
            status = "SKIP"
        notes = []
        for name, outcome, measured, report in runs:
            variant = name.split("_", 2)[-1]
            if outcome == "skipped":
                reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
                notes.append(f"{variant}: skipped ({reason.removeprefix('Skipped: ')})")
            elif measured:
                notes.append(f"{variant}: {measured}")
        tr.write_line(f"criterion {number:2d}  {status:5s}  {title}" + (f"  [{'; '.join(notes)}]" if notes else ""))
    if partial:
        tr.write_line("PASS* = surrogate variant passed; the real-data variant was skipped")
