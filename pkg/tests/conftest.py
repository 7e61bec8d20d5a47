import numpy as np
import pytest

from distlearn.distlearn_core.commands import PROBLEMS_DIR_PATH
from distlearn.distlearn_core.problem import ProblemSpec, build_matrices, load_problem_from_file


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def example_one():
    return load_problem_from_file("example_one", PROBLEMS_DIR_PATH)


@pytest.fixture
def example_two():
    return load_problem_from_file("example_two", PROBLEMS_DIR_PATH)


@pytest.fixture
def seven_symbol():
    return load_problem_from_file("seven_symbol", PROBLEMS_DIR_PATH)


@pytest.fixture
def example_one_matrix(example_one):
    return build_matrices(example_one)


@pytest.fixture
def identity_spec():
    return ProblemSpec(alphabet_size=3, arms=[["x", "y", "z"]], distribution=[0.2, 0.3, 0.5],
                       horizon=100, trials=5, name="identity")


def random_arms(rng: np.random.Generator, n: int, num_arms: int, max_outputs: int | None = None) -> list[list[int]]:
    """Random arm functions: every symbol gets one of up to ``max_outputs`` labels."""
    max_outputs = max_outputs or n
    return [rng.integers(0, max_outputs, size=n).tolist() for _ in range(num_arms)]


def random_identifiable_spec(rng: np.random.Generator, n: int, num_arms: int, max_outputs: int | None = None,
                             **kwargs) -> ProblemSpec:
    while True:
        spec = ProblemSpec(alphabet_size=n, arms=random_arms(rng, n, num_arms, max_outputs), **kwargs)
        if build_matrices(spec).rank == n:
            return spec
