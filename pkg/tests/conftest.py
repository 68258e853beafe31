import pytest

from nomenflow.classifier import FeatureConfig, TrainConfig, train
from nomenflow.migration import DEFAULT_ALPHABETS, synthetic_names
from nomenflow.taxonomy import default_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def small_features():
    return FeatureConfig(bucket_count=2 ** 16)


@pytest.fixture(scope="session")
def name_models(taxonomy, small_features):
    """Level-3 and level-2 models trained on the default synthetic alphabets."""
    rows = synthetic_names(DEFAULT_ALPHABETS, 400, seed=11)
    names = [r.name for r in rows]
    cfg = TrainConfig(dim=24, epochs=4, seed=3)
    m3, _ = train(names, [r.country for r in rows], small_features, cfg, level=3)
    m2, _ = train(names, [taxonomy.rollup(r.country, 2) for r in rows], small_features, cfg, level=2)
    return m3, m2


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
