import numba

numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda s: int(s.split()[0][2:])):
        terminalreporter.write_line(line)
