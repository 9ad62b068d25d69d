import numpy as np
import pytest
from sklearn.base import clone

from dynhin.estimator import TemporalViewEmbedder
from dynhin.graph import load_schema, load_snapshots
from dynhin.objectives import leave_one_out_split, load_labels
from dynhin.synth import SyntheticSpec, generate, write_files
from dynhin.validation import check_labels, check_views
from dynhin.views import build_views


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("est")
    spec = SyntheticSpec(
        n_users=25, n_items=15, n_attractors=6, n_steps=2, n_communities=2, seed=2
    )
    paths = write_files(generate(spec), str(out))
    schema = load_schema(paths["schema"])
    series = load_snapshots(schema, paths["edges"])
    labels = load_labels(paths["labels"], "U", series.universe)
    return series, labels


def fast_embedder(**overrides):
    kwargs = dict(dim=6, epochs=2, batch_size=16, learning_rate=0.01, seed=4)
    kwargs.update(overrides)
    return TemporalViewEmbedder(**kwargs)


class TestSklearnContract:
    def test_get_params_roundtrip(self):
        est = fast_embedder(cell="lstm", beta=0.5)
        params = est.get_params()
        assert params["cell"] == "lstm"
        assert params["beta"] == 0.5
        rebuilt = TemporalViewEmbedder(**params)
        assert rebuilt.get_params() == params

    def test_clone_keeps_params(self):
        est = fast_embedder(fusion="uniform")
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_set_params(self):
        est = fast_embedder()
        est.set_params(dim=12, cell="lstm")
        assert est.dim == 12 and est.cell == "lstm"


class TestFitTransform:
    def test_unsupervised_fit(self, dataset):
        series, _ = dataset
        views = build_views(series, ["U-I-U", "U-R-U"])
        est = fast_embedder(beta=0.0).fit(views)
        emb = est.transform()
        assert emb.shape == (views[0].n_nodes, 6)
        assert np.isfinite(emb).all()
        assert est.attention_weights_["U"].shape == (views[0].n_nodes, 2)

    def test_supervised_fit_with_label_container(self, dataset):
        series, labels = dataset
        views = build_views(series, ["U-I-U", "U-R-U"])
        est = fast_embedder().fit(views, labels)
        assert est.transform(anchor="U").shape[0] == views[0].n_nodes
        assert len(est.loss_trace_) == 2

    def test_fit_with_plain_array_labels(self, dataset):
        series, labels = dataset
        views = build_views(series, ["U-I-U"])
        y = -np.ones(views[0].n_nodes, dtype=int)
        y[labels.node_indices] = labels.class_ids
        est = fast_embedder().fit(views, y)
        assert est.transform().shape == (views[0].n_nodes, 6)

    def test_recommendation_split_fit(self, dataset):
        series, _ = dataset
        split, train_series = leave_one_out_split(series, "interact")
        views = build_views(train_series, ["U-I-U", "I-U-I"])
        est = fast_embedder(neg_per_pos_eval=4).fit(views, split)
        assert set(est.anchor_types_) == {"U", "I"}
        assert est.transform(anchor="I").shape[0] == split.n_items
        with pytest.raises(ValueError, match="anchor="):
            est.transform()

    def test_same_seed_same_embeddings(self, dataset):
        series, labels = dataset
        views = build_views(series, ["U-I-U"])
        a = fast_embedder().fit(views, labels).transform()
        b = fast_embedder().fit(views, labels).transform()
        assert np.array_equal(a, b)

    def test_transform_before_fit_rejected(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            fast_embedder().transform()

    def test_fit_transform_shortcut(self, dataset):
        series, labels = dataset
        views = build_views(series, ["U-I-U"])
        emb = fast_embedder().fit_transform(views, labels)
        assert emb.shape == (views[0].n_nodes, 6)


class TestValidationHelpers:
    def test_check_views_rejects_empty(self):
        with pytest.raises(ValueError, match="at least one view"):
            check_views([])

    def test_check_views_rejects_non_view(self):
        with pytest.raises(TypeError, match="ViewSeries"):
            check_views([np.zeros((2, 2))])

    def test_check_views_rejects_misaligned_steps(self, dataset):
        series, _ = dataset
        v1 = build_views(series, ["U-I-U"])[0]
        v2 = v1.truncate_to_last(1)
        with pytest.raises(ValueError, match="inconsistent snapshot counts"):
            check_views([v1, v2])

    def test_check_labels_array_forms(self, dataset):
        series, _ = dataset
        views = build_views(series, ["U-I-U"])
        n = views[0].n_nodes
        y = np.zeros(n, dtype=int)
        y[0] = 1
        labels = check_labels(y, views)
        assert labels.n_classes == 2
        assert labels.node_indices.size == n
        with pytest.raises(ValueError, match="length"):
            check_labels(np.zeros(n + 1, dtype=int), views)
        with pytest.raises(ValueError, match="unlabeled"):
            check_labels(-np.ones(n, dtype=int), views)
