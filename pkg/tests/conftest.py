import os

import pytest

from nnbilevel import pipeline

# criterion number -> (passed, message); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session", autouse=True)
def runs_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    old = os.environ.get(pipeline.RUNS_ENV)
    os.environ[pipeline.RUNS_ENV] = str(root)
    yield root
    if old is None:
        os.environ.pop(pipeline.RUNS_ENV, None)
    else:
        os.environ[pipeline.RUNS_ENV] = old


@pytest.fixture(scope="session")
def case1_config():
    return pipeline.Case1Config()


@pytest.fixture(scope="session")
def reactor_data(case1_config):
    return pipeline.reactor_dataset(case1_config)


@pytest.fixture(scope="session")
def states_net(case1_config, reactor_data):
    net, _ = pipeline.train_states_net(case1_config, reactor_data)
    return net


@pytest.fixture(scope="session")
def case1_report(case1_config, reactor_data):
    # reactor_data first, so the oracle samples come from the shared cache
    return pipeline.run_case1(case1_config)


@pytest.fixture(scope="session")
def case1_dir(case1_config, case1_report):
    from dataclasses import asdict
    return pipeline.run_directory("case1", asdict(case1_config))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {msg}")
