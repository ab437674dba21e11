import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion carried by the test")


@pytest.fixture
def detail(request):
    """Append ``key=value`` notes shown on the criterion's summary line."""
    notes = []
    request.node.user_properties.append(("detail", notes))
    return lambda text: notes.append(str(text))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    cid, title = mark.args
    notes = [n for k, v in item.user_properties if k == "detail" for n in v]
    ok = rep.passed
    prev = _RESULTS.get(cid)
    if prev is not None:
        ok = ok and prev[0]
        notes = prev[2] + notes
    _RESULTS[cid] = (ok, title, notes, rep.duration + (prev[3] if prev else 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c[1:])):
        ok, title, notes, dur = _RESULTS[cid]
        line = "%s %s: %s (%.1f s)" % ("PASS" if ok else "FAIL", cid, title, dur)
        if notes:
            line += " | " + "; ".join(notes)
        tr.write_line(line)
