import os

from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion id -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(cid, title, passed, detail=""):
    ACCEPTANCE[cid] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[cid]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {cid:>2}. {title}  {detail}".rstrip())
