import random

import pytest

from streamsky import abe, group


@pytest.fixture(scope="session")
def ctx():
    return group.setup("transparent", seed=b"tests")


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def owner_keys(ctx):
    """Master/public keys plus window secrets for sizes 1, 2, 5 and 12."""
    r = ctx.rng("owner-keys")
    mk, pk = abe.master_keygen(ctx, r)
    ws = {b: abe.make_window_secrets(ctx, b, r) for b in (1, 2, 5, 12)}
    return mk, pk, ws


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Run one acceptance criterion; its PASS/FAIL line is echoed in the summary.

    ``check(fn)`` calls ``fn() -> (ok, detail)``; exceptions count as FAIL.
    """
    import time

    def check(number, title, fn):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # reported, then re-raised by the assert below
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail} ({time.perf_counter() - t0:.2f}s)"
        request.config.acceptance_lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
