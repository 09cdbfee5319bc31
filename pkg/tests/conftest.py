import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from ecgmamba.model import ModelConfig

# Bitwise determinism checks assume a single BLAS thread.
_limits = threadpool_limits(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(seq_len=136, d_model=8, conv_kernel=16, conv_stride=8, n_blocks=2, d_state=4, n_classes=3)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion.

    Usage: ``with verdict("C1 shape pipeline") as note: ...; note("detail")``.
    """
    from contextlib import contextmanager

    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    @contextmanager
    def judge(title):
        details = []
        try:
            yield details.append
        except BaseException as exc:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            lines.append(f"FAIL  {title}: {msg}")
            print(lines[-1])
            raise
        lines.append(f"PASS  {title}" + (f" ({'; '.join(details)})" if details else ""))
        print(lines[-1])

    return judge


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
