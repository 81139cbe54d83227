import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def make_wav(tmp_path):
    """Write a seeded PCM16 mono tone-plus-noise WAV and return its path."""
    import numpy as np

    from fusefront.audio import write_wav
    from fusefront.rng import SplitMix64
    from fusefront.spectral import Waveform

    def _make(name="a.wav", seconds=1.0, seed=0, sr=16000):
        n = int(round(seconds * sr))
        t = np.arange(n) / sr
        x = 0.3 * np.sin(2 * np.pi * (220 + 40 * seed) * t) + 0.05 * SplitMix64(seed).normal((n,))
        path = tmp_path / name
        write_wav(path, Waveform(x, sr))
        return path

    return _make
