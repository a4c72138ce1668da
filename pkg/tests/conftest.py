import pytest

from promptseg.fixtures import standard_suite, write_suite


@pytest.fixture(scope="session")
def suite50():
    """The standard 50-case synthetic suite (seeds 0..49), built once."""
    return standard_suite(50)


@pytest.fixture(scope="session")
def suite_dir(suite50, tmp_path_factory):
    """The standard suite materialized as manifest directories."""
    root = tmp_path_factory.mktemp("suite")
    write_suite(suite50, root)
    return root


_acceptance_results: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and report.when == "call":
        _acceptance_results[report.nodeid] = report


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid, report in sorted(_acceptance_results.items()):
        label = getattr(report, "acceptance_label", None) or nodeid.split("::")[-1]
        status = "PASS" if report.passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    doc = item.function.__doc__ if hasattr(item, "function") else None
    if doc:
        report.acceptance_label = doc.strip().splitlines()[0]
