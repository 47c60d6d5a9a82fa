import pytest

from convsim.costmodel import ArchConfig
from convsim.netmodel import build_resnet50, build_resnet50_sparse, build_vgg16


@pytest.fixture(scope="session")
def arch():
    return ArchConfig()


@pytest.fixture(scope="session")
def resnet():
    return build_resnet50()


@pytest.fixture(scope="session")
def resnet_sparse():
    return build_resnet50_sparse()


@pytest.fixture(scope="session")
def vgg():
    return build_vgg16()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
