import pytest

from sylnmt.corpus import Direction, load_corpus, table1_path

TABLE1 = [
    ("আমি তোমাকে শুনতে পাচ্ছি না", "আমি তোমারে হুনিয়ার না"),
    ("রাগ করো না", "রাগ কইর না"),
    ("তার হাসি ভাল ছিল", "হের আসি সুন্দর আছিল"),
    ("আমি পড়াশোনা করতে যাচ্ছি", "আমি পড়াত যাইরাম"),
    ("বনের জন্তুদের মধ্যে হাতি সবচেয়ে বড়", "বনের জন্তুর মাঝে হাতি হইল হক্কলের থাকি বড়"),
]


@pytest.fixture
def table1():
    return load_corpus(table1_path(), direction=Direction.BanglaToSylheti)


@pytest.fixture
def write_tsv(tmp_path):
    def _write(rows, header="bangla\tsylheti", name="corpus.tsv"):
        path = tmp_path / name
        lines = [header] + ["\t".join(r) if isinstance(r, tuple) else r for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    return _write


# acceptance summary: one PASS/FAIL line per criterion ----------------------

_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion n")


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        n, title = marker
        entry = _ACCEPTANCE.setdefault(n, [title, True])
        entry[1] = entry[1] and report.outcome == "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
