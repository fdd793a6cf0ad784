import http.server
import io
import logging
import threading
import zipfile

import numpy as np
import pytest

from gnnlab import Dataset, parse_tu, stratified_folds, write_tu
from gnnlab.errors import (ConsistencyError, IngestError, IntegrityError,
                           StratificationError, TransportError, TuParseError)
from gnnlab.graphdata import fetch_tu

from conftest import synth_dataset, write_tu_files


def test_parse_two_graph_toy(tmp_path):
    # graph 1: nodes 1-2 with one edge, graph 2: isolated node 3
    write_tu_files(tmp_path, "TOY", [(2, [(1, 2)]), (1, [])], labels=[1, 2])
    ds = parse_tu(tmp_path, "TOY")
    assert len(ds.graphs) == 2
    assert ds.graphs[0].adj.n == 2 and ds.graphs[1].adj.n == 1
    assert ds.num_classes == 2
    assert [g.label for g in ds.graphs] == [0, 1]
    assert ds.graphs[0].adj.edge_set() == {(0, 1), (1, 0)}


def test_parse_label_onehot(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, [(1, 2)]), (2, [(1, 2)])],
                   labels=[1, 2], node_labels=[0, 1, 2, 1])
    ds = parse_tu(tmp_path, "TOY")
    assert ds.feature_policy == "label_onehot"
    assert ds.feature_dim == 3
    assert np.array_equal(ds.graphs[0].features, [[1, 0, 0], [0, 1, 0]])
    assert np.array_equal(ds.graphs[1].features, [[0, 0, 1], [0, 1, 0]])


def test_parse_degree_onehot_cap(tmp_path):
    # triangle: every node has degree 2; cap 2 puts them all in the overflow bucket
    write_tu_files(tmp_path, "TOY", [(3, [(1, 2), (2, 3), (1, 3)])], labels=[1, 1])
    (tmp_path / "TOY_graph_labels.txt").write_text("1\n")
    ds = parse_tu(tmp_path, "TOY", degree_cap=2)
    assert ds.feature_policy == "degree_onehot"
    assert ds.feature_dim == 2
    assert np.array_equal(ds.graphs[0].features, [[0, 1], [0, 1], [0, 1]])


def test_parse_degree_onehot_unused_columns_zero(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, [(1, 2)])], labels=[1])
    ds = parse_tu(tmp_path, "TOY", degree_cap=5)
    assert ds.feature_dim == 5
    assert np.array_equal(ds.graphs[0].features[:, 2:], np.zeros((2, 3)))
    assert np.array_equal(ds.graphs[0].features[:, 1], [1.0, 1.0])


def test_parse_attributes_take_precedence(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, [(1, 2)])], labels=[1],
                   node_labels=[0, 1], node_attributes=[[0.5, 1.5], [2.5, 3.5]])
    ds = parse_tu(tmp_path, "TOY")
    assert ds.feature_policy == "attributes"
    assert np.array_equal(ds.graphs[0].features, [[0.5, 1.5], [2.5, 3.5]])
    forced = parse_tu(tmp_path, "TOY", feature_policy="label_onehot")
    assert forced.feature_dim == 2


def test_parse_missing_mandatory_file(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, [(1, 2)])], labels=[1])
    (tmp_path / "TOY_graph_labels.txt").unlink()
    with pytest.raises(IngestError, match="TOY_graph_labels.txt"):
        parse_tu(tmp_path, "TOY")


def test_parse_bad_token_names_line(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, [(1, 2)])], labels=[1])
    (tmp_path / "TOY_A.txt").write_text("1, 2\n2, x\n")
    with pytest.raises(TuParseError, match="TOY_A.txt:2"):
        parse_tu(tmp_path, "TOY")


def test_parse_edge_crossing_graphs(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, []), (1, [])], labels=[1, 2])
    (tmp_path / "TOY_A.txt").write_text("1, 3\n")
    with pytest.raises(ConsistencyError, match="TOY_A.txt:1"):
        parse_tu(tmp_path, "TOY")


def test_parse_node_id_out_of_range(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, [])], labels=[1])
    (tmp_path / "TOY_A.txt").write_text("1, 9\n")
    with pytest.raises(ConsistencyError):
        parse_tu(tmp_path, "TOY")


def test_parse_drops_self_loops_with_warning(tmp_path, caplog):
    write_tu_files(tmp_path, "TOY", [(2, [(1, 2)])], labels=[1])
    (tmp_path / "TOY_A.txt").write_text("1, 2\n2, 1\n1, 1\n")
    with caplog.at_level(logging.WARNING, logger="gnnlab.graphdata"):
        ds = parse_tu(tmp_path, "TOY")
    assert ds.graphs[0].adj.edge_set() == {(0, 1), (1, 0)}
    assert any("self-loop" in rec.message for rec in caplog.records)


def test_parse_symmetrises_single_direction(tmp_path):
    write_tu_files(tmp_path, "TOY", [(2, [])], labels=[1])
    (tmp_path / "TOY_A.txt").write_text("1, 2\n")
    ds = parse_tu(tmp_path, "TOY")
    assert ds.graphs[0].adj.edge_set() == {(0, 1), (1, 0)}


def test_parse_remaps_arbitrary_labels(tmp_path):
    write_tu_files(tmp_path, "TOY", [(1, []), (1, []), (1, [])],
                   labels=[-1, 7, -1])
    ds = parse_tu(tmp_path, "TOY")
    assert [g.label for g in ds.graphs] == [0, 1, 0]
    assert ds.num_classes == 2


@pytest.mark.parametrize("policy_kwargs", [
    {},  # degree one-hot
    {"node_labels": [0, 1, 1, 0, 2]},
    {"node_attributes": [[0.25, -1.0], [1.5, 2.0], [3.0, 0.125],
                         [0.0, 4.5], [2.25, -0.5]]},
])
def test_round_trip_write_then_parse(tmp_path, policy_kwargs):
    write_tu_files(tmp_path
                   / "orig", "RT", [(3, [(1, 2), (2, 3)]), (2, [(1, 2)])],
                   labels=[5, 9], **policy_kwargs)
    ds = parse_tu(tmp_path / "orig", "RT")
    write_tu(ds, tmp_path / "copy")
    again = parse_tu(tmp_path / "copy", "RT")
    assert again.num_classes == ds.num_classes
    assert again.feature_dim == ds.feature_dim
    assert again.feature_policy == ds.feature_policy
    for a, b in zip(ds.graphs, again.graphs):
        assert a.label == b.label
        assert a.adj.edge_set() == b.adj.edge_set()
        assert np.array_equal(a.features, b.features)


def test_parsed_graphs_have_no_self_loops_and_are_symmetric(tmp_path):
    write_tu_files(tmp_path, "TOY", [(4, [(1, 2), (2, 3), (3, 4), (1, 4)])],
                   labels=[1])
    ds = parse_tu(tmp_path, "TOY")
    for g in ds.graphs:
        edges = g.adj.edge_set()
        assert all(i != j for i, j in edges)
        assert all((j, i) in edges for i, j in edges)


def test_stratified_folds_balanced():
    ds = synth_dataset(10, seed=1, num_classes=2)
    split = stratified_folds(ds, 2, seed=0)
    labels = ds.labels()
    for fold in range(2):
        members = labels[split.assignments == fold]
        assert members.shape[0] == 5
        assert (members == 0).sum() >= 2 and (members == 1).sum() >= 2


def test_stratified_folds_deterministic():
    ds = synth_dataset(24, seed=2)
    a = stratified_folds(ds, 4, seed=9).assignments
    b = stratified_folds(ds, 4, seed=9).assignments
    assert np.array_equal(a, b)


def test_stratified_folds_proportions():
    # 30/70 split over 100 graphs into 10 folds: 3 +/- 1 minority per fold
    rng_labels = [0] * 30 + [1] * 70
    base = synth_dataset(100, seed=3)
    graphs = tuple(
        type(g)(adj=g.adj, features=g.features, label=rng_labels[i], id=i)
        for i, g in enumerate(base.graphs))
    ds = Dataset(name="SKEW", graphs=graphs, num_classes=2,
                 feature_dim=base.feature_dim, feature_policy=base.feature_policy)
    split = stratified_folds(ds, 10, seed=4)
    labels = ds.labels()
    for fold in range(10):
        members = labels[split.assignments == fold]
        assert abs((members == 0).sum() - 3) <= 1
    assert np.bincount(split.assignments, minlength=10).sum() == 100


def test_stratified_folds_partition():
    ds = synth_dataset(37, seed=5)
    split = stratified_folds(ds, 5, seed=6)
    assert split.assignments.min() >= 0 and split.assignments.max() < 5
    sizes = np.bincount(split.assignments, minlength=5)
    assert sizes.sum() == 37
    for fold in range(5):
        train = set(split.train_indices(fold).tolist())
        test = set(split.test_indices(fold).tolist())
        assert not train & test
        assert len(train | test) == 37


def test_stratified_folds_errors():
    ds = synth_dataset(6, seed=7)
    with pytest.raises(StratificationError):
        stratified_folds(ds, 1)
    with pytest.raises(StratificationError):
        stratified_folds(ds, 4)  # only 3 members per class


# --------------------------------------------------------------------------
# fetching overHTTP (local server)

class _Handler(http.server.BaseHTTPRequestHandler):
    payloads = {}

    def do_GET(self):
        name = self.path.rsplit("/", 1)[-1]
        if name in self.payloads:
            body = self.payloads[name]
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self.send_error(404)

    def log_message(self, *args):
        pass


@pytest.fixture()
def tu_server(tmp_path):
    ds_dir = write_tu_files(tmp_path / "src", "MINI",
                            [(2, [(1, 2)]), (3, [(1, 2), (2, 3)])], labels=[1, 2])
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for f in sorted(ds_dir.iterdir()):
            zf.write(f, f"MINI/{f.name}")
    _Handler.payloads = {"MINI.zip": buf.getvalue(), "BROKEN.zip": b"not a zip"}
    server = http.server.HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    thread.join()


def test_fetch_tu_downloads_and_caches(tu_server, tmp_path):
    cache = tmp_path / "cache"
    raw = fetch_tu("MINI", url_base=tu_server, cache_dir=cache)
    assert (raw / "MINI_A.txt").is_file()
    ds = parse_tu(raw, "MINI")
    assert len(ds.graphs) == 2
    # second call is a pure cache hit (works even against a dead url)
    again = fetch_tu("MINI", url_base="http://127.0.0.1:1", cache_dir=cache)
    assert again == raw


def test_fetch_tu_404(tu_server, tmp_path):
    with pytest.raises(TransportError) as err:
        fetch_tu("NOPE", url_base=tu_server, cache_dir=tmp_path / "c2")
    assert err.value.status == 404


def test_fetch_tu_corrupt_archive(tu_server, tmp_path):
    with pytest.raises(IntegrityError):
        fetch_tu("BROKEN", url_base=tu_server, cache_dir=tmp_path / "c3")


def test_fetch_tu_connection_refused(tmp_path):
    with pytest.raises(TransportError):
        fetch_tu("MINI", url_base="http://127.0.0.1:1", cache_dir=tmp_path / "c4")
