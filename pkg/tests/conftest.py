import math

import numpy as np
import pytest

from morphoseek.kernel import GridDims, StateVector


def spike_state(T=1, NY=4, NX=4, value=1.0):
    ssh = np.zeros((T, NY, NX))
    ssh[0, 0, 0] = value
    return StateVector(ssh, 1.0, 1.0, 1.0, 1.0)


def sinusoid_state(T=1, NY=4, NX=8, dy=1.0, dx=1.0, G=1.0, F=1.0, A=1.0):
    i = np.arange(NX)
    ssh = np.broadcast_to(A * np.sin(2 * math.pi * i / NX), (T, NY, NX)).copy()
    return StateVector(ssh, dy, dx, G, F)


def loop_energy(state, cyclic=True):
    """Pure-python triple loop, written independently of the package kernel."""
    T, NY, NX = state.ssh.shape
    h = state.ssh.tolist()
    c = state.G / state.F
    out = []
    for t in range(T):
        total = 0.0
        for j in range(NY):
            for i in range(NX):
                if cyclic:
                    dsdy = (h[t][(j + 1) % NY][i] - h[t][(j - 1) % NY][i]) / (2 * state.dy)
                    dsdx = (h[t][j][(i + 1) % NX] - h[t][j][(i - 1) % NX]) / (2 * state.dx)
                else:
                    if j == 0:
                        dsdy = (h[t][1][i] - h[t][0][i]) / state.dy
                    elif j == NY - 1:
                        dsdy = (h[t][NY - 1][i] - h[t][NY - 2][i]) / state.dy
                    else:
                        dsdy = (h[t][j + 1][i] - h[t][j - 1][i]) / (2 * state.dy)
                    ip, im = min(i + 1, NX - 1), max(i - 1, 0)
                    dsdx = (h[t][j][ip] - h[t][j][im]) / (2 * state.dx)
                u, v = -c * dsdy, c * dsdx
                total += u * u + v * v
        out.append(0.5 * total / (NY * NX))
    return np.array(out)


@pytest.fixture
def desk():
    return GridDims(3, 16, 16)


@pytest.fixture
def small():
    return GridDims(2, 4, 4)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = {}


def report_criterion(cid, passed, detail):
    line = f"{cid} {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[cid] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[cid])
