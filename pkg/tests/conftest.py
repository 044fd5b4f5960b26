import numpy as np
import pytest
import torch

from rindnet.config import ModelConfig
from rindnet.model import RINDNet
from rindnet.synthetic import write_toy_dataset


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    return write_toy_dataset(tmp_path_factory.mktemp("toy"), n_train=2, n_test=2, size=64, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_model():
    torch.manual_seed(0)
    return RINDNet(ModelConfig()).eval()


def tiny_config(**kw):
    """Narrow widths so gradient-level tests stay fast."""
    base = dict(wl_channels=8, dec_channels=8, head_channels=8, att_channels=8)
    base.update(kw)
    return ModelConfig(**base)



# acceptance criteria are tagged with @pytest.mark.acceptance(number, title);
# one PASS/FAIL line per criterion is printed at the end of the session
_acceptance_markers = {}
_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_itemcollected(item):
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        _acceptance_markers[item.nodeid] = tuple(marker.args)


def pytest_collection_modifyitems(config, items):
    # run the long overfit criterion last so fast failures surface first
    items.sort(key=lambda item: item.get_closest_marker("slow") is not None)


def pytest_runtest_logreport(report):
    marker = _acceptance_markers.get(report.nodeid)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        line = f"criterion {number:>2} {status}  {title}"
        # each check prints "criterion N: PASS (measured values)"; append the values
        measured = [ln for ln in report.capstdout.splitlines() if ln.startswith(f"criterion {number}:")]
        if measured and "(" in measured[-1]:
            line += "  [" + measured[-1].split("(", 1)[1].rstrip(")") + "]"
        _acceptance[number] = line


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        terminalreporter.write_line(_acceptance[number])
