import pytest

from nopain import features, sdot


@pytest.fixture(scope="session")
def two_mode_solved():
    """Labeled two-mode set with orthogonal mode means, solved to convergence.

    Shared by the boundary and attack tests; solving takes a couple of
    seconds so it runs once per session.
    """
    spec = features.axis_mixture_spec(modes=2, d=6, scale=12.0, stddev=0.4,
                                      seed=11)
    fs = features.synth_mixture(spec, 80, 6)
    heights, stats, report = sdot.solve(fs, sdot.SolverConfig(seed=5))
    assert report.converged
    return fs, heights, stats, report
