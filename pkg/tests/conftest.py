import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402
from offline_stt import lang_model  # noqa: E402
from offline_stt.recognizer import save_model_dir  # noqa: E402


@pytest.fixture(scope="session")
def self_model():
    return helpers.self_model()


@pytest.fixture(scope="session")
def ambiguity_model():
    return helpers.ambiguity_model()


@pytest.fixture(scope="session")
def office_lm():
    return lang_model.train([s.split() for s in helpers.OFFICE_CORPUS], 2, model_id="office")


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, self_model):
    return save_model_dir(self_model, tmp_path_factory.mktemp("models") / "selftest")


@pytest.fixture(scope="session")
def stub_decoder(tmp_path_factory):
    return helpers.write_stub_decoder(tmp_path_factory.mktemp("decoder"))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
