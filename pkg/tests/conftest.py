import pytest

SMALL_BENCHMARK = {
    "classes": [
        {"name": "Benign", "count": 600, "distance": 0.0, "std": 1.0},
        {"name": "DoS attacks-Hulk", "count": 120, "distance": 5.0, "std": 1.0},
        {"name": "Bot", "count": 90, "distance": 5.0, "std": 1.0},
        {"name": "Brute Force -XSS", "count": 30, "distance": 3.5, "std": 0.8},
        {"name": "SQL Injection", "count": 20, "distance": 3.5, "std": 0.8},
    ],
    "n_features": 6,
}

SMALL_CONFIG = {
    "benchmark": SMALL_BENCHMARK,
    "ctgan": {"epochs": 2, "generator_hidden": [16, 16], "discriminator_hidden": [16, 16], "noise_dim": 8, "K": 3},
    "classifier": {"hidden": [16, 8], "epochs": 4, "batch_size": 64},
    "samples_per_rare_class": 40,
    "folds": 0,
}


@pytest.fixture
def small_config():
    from ctgsm.pipeline import PipelineConfig

    def make(**overrides):
        return PipelineConfig.from_dict({**SMALL_CONFIG, **overrides})

    return make


ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
