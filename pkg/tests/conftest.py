import pytest

from volcast.harness.config import ExperimentConfig

TINY = {
    "seed": 3,
    "holdout_count": 5,
    "data": {"n_series": 8, "n_days": 300},
    "cnn": {"epochs": 5},
}


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return ExperimentConfig.from_dict({k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY.items()})


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """One tiny end-to-end run shared by the structural report tests."""
    from volcast.harness.experiment import run_experiment

    cfg = ExperimentConfig.from_dict({k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY.items()})
    out = tmp_path_factory.mktemp("tiny_run")
    return cfg, run_experiment(cfg, out), out


# --- acceptance summary ---------------------------------------------------------------

ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record ``(number, title, passed, detail)`` for the end-of-session summary."""

    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")
