import pytest

from memport.synthetic import write_ohlc_csv


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-criteria verdict lines after the test run."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixture_csv(tmp_path_factory):
    """Full bundled synthetic fixture: 7 assets, 17 years of daily OHLC."""
    path = tmp_path_factory.mktemp("data") / "synthetic_ohlc.csv"
    write_ohlc_csv(path)
    return path


@pytest.fixture(scope="session")
def small_fixture_csv(tmp_path_factory):
    """Three assets over seven years, for quick end-to-end runs."""
    path = tmp_path_factory.mktemp("data") / "small_ohlc.csv"
    write_ohlc_csv(path, tickers=("AAA", "BBB", "CCC"), years=7)
    return path
