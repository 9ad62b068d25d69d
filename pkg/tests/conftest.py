import numpy as np
import pytest

from dynhin import autodiff
from dynhin.graph import Schema, EdgeType, NodeUniverse, SnapshotSeries, SparseMatrix

_acceptance_results: list[tuple[int, str, bool]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        marker = item.get_closest_marker("acceptance")
        if marker:
            _acceptance_results.append((marker.args[0], marker.args[1], report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, desc, passed in sorted(_acceptance_results):
        terminalreporter.write_line(f"criterion {num} [{'PASS' if passed else 'FAIL'}]: {desc}")


@pytest.fixture(autouse=True)
def _debug_checks():
    autodiff.debug_checks = True
    yield
    autodiff.debug_checks = False


@pytest.fixture
def movie_schema() -> Schema:
    return Schema(
        node_types=("U", "M", "G", "A"),
        edge_types=(
            EdgeType("rates", "U", "M"),
            EdgeType("genre", "M", "G"),
            EdgeType("acts", "A", "M"),
        ),
    )


@pytest.fixture
def dblp_schema() -> Schema:
    return Schema(
        node_types=("A", "P", "V", "T"),
        edge_types=(
            EdgeType("writes", "A", "P"),
            EdgeType("published", "P", "V"),
            EdgeType("mentions", "P", "T"),
        ),
    )


def make_series(schema: Schema, sizes: dict[str, int], snapshots_entries) -> SnapshotSeries:
    """Build a series from {edge_type: [(src, dst, value), ...]} dicts per t."""
    universe = NodeUniverse({t: [f"{t}{i}" for i in range(n)] for t, n in sizes.items()})
    mats = []
    for per_type in snapshots_entries:
        built = {}
        for e in schema.edge_types:
            shape = (sizes[e.src], sizes[e.dst])
            entries = per_type.get(e.name, [])
            if entries:
                rows, cols, vals = zip(*entries)
                built[e.name] = SparseMatrix.from_entries(shape[0], shape[1], rows, cols, vals)
            else:
                built[e.name] = SparseMatrix.empty(*shape)
        mats.append(built)
    return SnapshotSeries(schema, universe, len(mats), tuple(mats))


def random_series(
    schema: Schema,
    rng: np.random.Generator,
    max_nodes: int = 12,
    n_steps: int = 1,
    edge_prob: float = 0.15,
) -> SnapshotSeries:
    sizes = {t: int(rng.integers(2, max_nodes + 1)) for t in schema.node_types}
    snapshots = []
    for _ in range(n_steps):
        per_type = {}
        for e in schema.edge_types:
            mask = rng.random((sizes[e.src], sizes[e.dst])) < edge_prob
            entries = [
                (int(r), int(c), float(rng.integers(1, 4)))
                for r, c in zip(*np.nonzero(mask))
            ]
            per_type[e.name] = entries
        snapshots.append(per_type)
    return make_series(schema, sizes, snapshots)
