import numpy as np
import pytest

from roadwarn import audio_io, synth


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """The full seeded 210-clip corpus, generated once per session."""
    out = tmp_path_factory.mktemp("corpus")
    synth.generate_corpus(out, seed=0)
    return out


@pytest.fixture(scope="session")
def features_csv(tmp_path_factory, corpus_dir):
    """Per-frame feature CSV extracted from the session corpus."""
    from roadwarn.cli import main

    path = tmp_path_factory.mktemp("features") / "features.csv"
    assert main(["extract", str(corpus_dir), str(path)]) == 0
    return path


def make_frame(samples, sample_rate=16000, index=0):
    return audio_io.Frame(samples=np.asarray(samples, dtype=float), index=index,
                          start_time=index * 0.1, sample_rate=sample_rate)


def sine_frame(freq_hz, sample_rate=16000, n=1600, amplitude=1.0):
    t = np.arange(n) / sample_rate
    return make_frame(amplitude * np.sin(2 * np.pi * freq_hz * t), sample_rate)
