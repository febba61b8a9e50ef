import pytest

from virtglove.dataset import load_manifest
from virtglove.synth import SynthParams, synth_dataset

# filled by the acceptance module: (criterion, passed, detail)
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []
ACCEPTANCE_EXTRA: list[str] = []


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """10 frames per gesture at full resolution, 80/10/10 split."""
    out = tmp_path_factory.mktemp("ds")
    path = synth_dataset(10, SynthParams(), seed=3, out_dir=out)
    return load_manifest(path)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for extra in ACCEPTANCE_EXTRA:
        tr.write_line(extra)
    for name, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda t: int(t[0].split()[0])):
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
