"""Python access to the verification core.

Every function takes and returns plain Python values; JSON is only the
transport between the two sides.
"""

import json

from . import _core
from ._core import VerifyError

__all__ = [
    "VerifyError",
    "parse_solution",
    "link",
    "run",
    "compute_metrics",
    "ab_compare",
    "parse_dataset",
    "strip_timing",
    "render_report",
]


def parse_solution(text, problem=None, normalize=True):
    """Parse (and by default normalize) a structured solution.

    Returns {"solution": ..., "violations": [...]}.
    """
    pj = json.dumps(problem) if problem is not None else ""
    return json.loads(_core.parse_solution(text, pj, normalize))


def link(solution, established_facts=None):
    """Hypergraph and reachability result for a parsed solution dict.

    established_facts: fact statement ids taken as established; None means all.
    """
    facts = None if established_facts is None else list(established_facts)
    return json.loads(_core.link(json.dumps(solution), facts))


def run(problem, config=None, base_dir="."):
    """Run the automatic pipeline on one problem; returns the report dict."""
    cj = json.dumps(config) if config is not None else ""
    return json.loads(_core.run(json.dumps(problem), cj, base_dir))


def compute_metrics(predictions, labels):
    """predictions: one list of booleans per run; labels: booleans."""
    return json.loads(_core.compute_metrics([list(map(bool, r)) for r in predictions], list(map(bool, labels))))


def ab_compare(run_a, run_b, include_trivial=False):
    return json.loads(_core.ab_compare(json.dumps(run_a), json.dumps(run_b), include_trivial))


def parse_dataset(text):
    return json.loads(_core.parse_dataset(text))


def strip_timing(report):
    return json.loads(_core.strip_timing(json.dumps(report)))


def render_report(report):
    return _core.render_report(json.dumps(report))
