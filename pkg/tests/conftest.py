import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ridecast.ingest import RouteProfile  # noqa: E402
from ridecast.synthetic import GeneratorSpec, generate_corpus  # noqa: E402


def profile_from_grades(grades, step=10.0, bearings=None, start_alt=100.0):
    """Profile with the given per-step grades (percent) and optional per-step bearings."""
    grades = np.asarray(grades, dtype=float)
    alt = start_alt + np.concatenate([[0.0], np.cumsum(grades * step / 100.0)])
    n = alt.size
    if bearings is None:
        bearing = np.zeros(n)
    else:
        b = np.asarray(bearings, dtype=float)
        bearing = np.append(b, b[-1])
    return RouteProfile(np.arange(n) * step, alt, bearing)


def segments(*parts):
    """Concatenate (length_m, grade) pairs into a per-step grade list at 10 m."""
    out = []
    for length, grade in parts:
        out += [grade] * int(round(length / 10.0))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus():
    """The default 96-ride synthetic corpus (sigma 5 min)."""
    return generate_corpus(GeneratorSpec(seed=7))


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(GeneratorSpec(seed=11, n=30, n_days=200))


def random_climb_profile(rng, max_points=5000):
    """Piecewise-constant grades biased toward the 3% and 100 m decision edges."""
    grades = [-6.0, -2.0, 0.0, 1.0, 2.9, 3.0, 3.1, 4.5, 6.0, 9.0, 12.0]
    lengths = [30, 60, 90, 100, 110, 200, 300, 490, 500, 510, 800, 1500]
    steps = []
    target = int(rng.integers(200, max_points))
    while len(steps) < target - 1:
        steps += [float(rng.choice(grades)) + float(rng.normal(0, 0.3)) * (rng.random() < 0.3)] * (
            int(rng.choice(lengths)) // 10)
    return profile_from_grades(steps[: target - 1])


@pytest.fixture(scope="session")
def corpus_dataset(corpus):
    """Topology + fitness rows of the default corpus."""
    from ridecast.dataset import assemble

    return assemble(corpus.activities, corpus.profiles, corpus.load_history, "topo-fit")


@pytest.fixture(scope="session")
def noiseless_dataset():
    from ridecast.dataset import assemble

    c = generate_corpus(GeneratorSpec(seed=7, sigma=0.0))
    return assemble(c.activities, c.profiles, c.load_history, "topo-fit")


@pytest.fixture(scope="session")
def topo_model(corpus):
    """Lasso on topology features of the default corpus, tuned by CV."""
    from ridecast.dataset import assemble
    from ridecast.validation import fit_final, lasso_spec

    ds = assemble(corpus.activities, corpus.profiles, None, "topo")
    return fit_final(ds, lasso_spec())


@pytest.fixture(scope="session")
def fit_model_topo_fit(corpus_dataset):
    """Lasso on topology plus fitness features of the default corpus."""
    from ridecast.validation import fit_final, lasso_spec

    return fit_final(corpus_dataset, lasso_spec())


# ---------------------------------------------------------------------------
# acceptance summary

_criteria: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by a test")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call" and call.excinfo is None:
        return
    n, title = mark.args
    ok = call.excinfo is None
    prev = _criteria.get(n, (title, True))[1]
    _criteria[n] = (title, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2} {title}: {'PASS' if ok else 'FAIL'}")
