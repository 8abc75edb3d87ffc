import pytest

from extractopt.model import example_model

# collected by the acceptance tests; shown after the run so the per-criterion
# lines survive pytest's fd-level capture
acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
from extractopt.solver import build_system, select_admissible, solve_all_roots


@pytest.fixture(scope="session")
def ex1():
    return example_model(1)


@pytest.fixture(scope="session")
def ex2():
    return example_model(2)


@pytest.fixture(scope="session")
def ex1_formula_solution(ex1):
    model, _, _ = ex1
    return select_admissible(solve_all_roots(build_system(model, mode="formula")), model)


@pytest.fixture(scope="session")
def ex1_reference_solution(ex1):
    model, _, ref = ex1
    sys_ = build_system(model, mode="reference", reference=ref)
    return select_admissible(solve_all_roots(sys_), model)


@pytest.fixture(scope="session")
def ex2_formula_solution(ex2):
    model, _, _ = ex2
    return select_admissible(solve_all_roots(build_system(model, mode="formula")), model)
