import numpy as np
import pytest

from dynhin.errors import DataError
from dynhin.graph import load_schema, load_snapshots
from dynhin.synth import (
    INFORMATIVE_USER_VIEW,
    NOISE_USER_VIEW,
    SyntheticSpec,
    generate,
    write_files,
)
from dynhin.views import build_views, parse_metapath


def small_spec(**overrides) -> SyntheticSpec:
    base = dict(
        n_users=30, n_items=20, n_attractors=6, n_steps=3, n_communities=2,
        drift=0.15, seed=11,
    )
    base.update(overrides)
    return SyntheticSpec(**base)


class TestGenerate:
    def test_zero_drift_freezes_snapshots(self):
        data = generate(small_spec(drift=0.0, n_steps=4))
        by_step = {}
        for t, etype, src, dst in data.edge_rows:
            by_step.setdefault(t, set()).add((etype, src, dst))
        assert by_step[1] == by_step[2] == by_step[3] == by_step[4]

    def test_fixed_seed_identical_files(self, tmp_path):
        a = write_files(generate(small_spec()), str(tmp_path / "a"))
        b = write_files(generate(small_spec()), str(tmp_path / "b"))
        for key in a:
            assert open(a[key], "rb").read() == open(b[key], "rb").read()

    def test_every_node_present(self, tmp_path):
        spec = small_spec(p_noise=0.0, p_across=0.0, p_within=0.05)
        paths = write_files(generate(spec), str(tmp_path))
        schema = load_schema(paths["schema"])
        series = load_snapshots(schema, paths["edges"])
        assert series.universe.size("U") == spec.n_users
        assert series.universe.size("I") == spec.n_items
        assert series.universe.size("R") == spec.n_attractors

    def test_labels_are_final_communities(self):
        data = generate(small_spec())
        labels = {nid: c for nid, c in data.labels}
        final = data.user_communities[-1]
        for u in range(data.spec.n_users):
            assert labels[f"u{u}"] == final[u]

    def test_infeasible_community_count(self):
        with pytest.raises(DataError, match="communities exceed"):
            generate(small_spec(n_communities=25))

    def test_bad_drift(self):
        with pytest.raises(DataError, match="drift"):
            generate(small_spec(drift=1.5))

    def test_drift_changes_snapshots(self):
        data = generate(small_spec(drift=0.5, n_steps=2))
        by_step = {}
        for t, etype, src, dst in data.edge_rows:
            by_step.setdefault(t, set()).add((etype, src, dst))
        assert by_step[1] != by_step[2]


class TestPlantedSignal:
    def test_informative_view_separates_communities_at_every_t(self, tmp_path):
        # generator self-check: within-community PathSim mean strictly above
        # the cross-community mean for the informative view, at every step
        spec = small_spec(n_users=40, n_items=30, seed=3)
        data = generate(spec)
        paths = write_files(data, str(tmp_path))
        schema = load_schema(paths["schema"])
        series = load_snapshots(schema, paths["edges"])
        view = build_views(series, [INFORMATIVE_USER_VIEW])[0]
        uni = series.universe
        order = np.array([int(uid[1:]) for uid in uni.ids("U")])
        for t in range(1, spec.n_steps + 1):
            comm = data.user_communities[t - 1][order]
            sim = view.dense(t)
            same = comm[:, None] == comm[None, :]
            off_diag = ~np.eye(len(order), dtype=bool)
            within = sim[same & off_diag].mean()
            across = sim[~same].mean()
            assert within > across, f"t={t}"

    def test_noise_view_carries_no_community_signal(self, tmp_path):
        spec = small_spec(n_users=40, n_items=30, seed=3)
        data = generate(spec)
        paths = write_files(data, str(tmp_path))
        schema = load_schema(paths["schema"])
        series = load_snapshots(schema, paths["edges"])
        view = build_views(series, [NOISE_USER_VIEW])[0]
        uni = series.universe
        order = np.array([int(uid[1:]) for uid in uni.ids("U")])
        comm = data.user_communities[0][order]
        sim = view.dense(1)
        same = comm[:, None] == comm[None, :]
        off_diag = ~np.eye(len(order), dtype=bool)
        within = sim[same & off_diag].mean()
        across = sim[~same].mean()
        # gap should be an order of magnitude below the informative one
        assert abs(within - across) < 0.1

    def test_schema_parses_and_views_resolve(self, tmp_path):
        paths = write_files(generate(small_spec()), str(tmp_path))
        schema = load_schema(paths["schema"])
        for spec_str in ("U-I-U", "U-R-U", "I-U-I", "I-R-I"):
            path = parse_metapath(spec_str, schema)
            assert path.is_palindromic
