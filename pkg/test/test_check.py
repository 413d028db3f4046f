import re

import pytest

from app.errors import GammaBoundError
from app.services.check_service import CheckService


def _detail(report, name):
    return next(r for r in report.results if r.name == name)


@pytest.fixture(scope="module")
def delayed_report(fig1_graph):
    return CheckService(fig1_graph, tau_bar=2, gamma=0.1, seed=7, iters=40).run_suite()


def test_suite_passes_on_reference_network(delayed_report):
    """Test every invariant holds with delays"""
    assert delayed_report.passed
    assert len(delayed_report.results) == 9


def test_spectrum_check_covers_delayed_snapshots(delayed_report):
    """Test the spectrum check walks every round, including rounds with late arrivals"""
    result = _detail(delayed_report, "m0_spectrum_union")
    counts = dict((k, int(v)) for k, v in re.findall(r"(\w+)=(\d+)", result.detail))
    assert counts["snapshots"] == 40
    assert counts["delayed_snapshots"] > 0


def test_nilpotent_check_covers_every_round(delayed_report):
    """Test M1 squared is checked on every realized round"""
    result = _detail(delayed_report, "m1_nilpotent")
    assert result.passed
    assert "snapshots=40" in result.detail


def test_suite_without_delay(fig1_graph):
    """Test the suite on the delay-free system"""
    report = CheckService(fig1_graph, tau_bar=0, gamma=0.1, seed=1, iters=20).run_suite()
    assert report.passed
    assert "delayed_snapshots=0" in _detail(report, "m0_spectrum_union").detail


def test_suite_rejects_large_gamma(fig1_graph):
    """Test gain above the push-weight bound"""
    with pytest.raises(GammaBoundError):
        CheckService(fig1_graph, tau_bar=1, gamma=0.5, seed=1, iters=10)
