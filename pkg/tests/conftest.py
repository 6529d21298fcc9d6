import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance results, criterion number -> [(ok, detail)], reported after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        passed = sum(ok for ok, _ in checks)
        verdict = "PASS" if passed == len(checks) else "FAIL"
        tr.write_line(f"criterion {k}: {verdict} ({passed}/{len(checks)} checks)")
        for ok, detail in checks:
            tr.write_line(f"    {'ok  ' if ok else 'MISS'} {detail}")
