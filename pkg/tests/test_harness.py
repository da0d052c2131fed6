import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from goodie.cli import main
from goodie.data import SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from goodie.experiment import (
    ExperimentConfig,
    canonical_method,
    derive_seeds,
    resolve_n_val,
    run_cell,
)
from goodie.linkpred import _pair_keys, link_split, sample_non_edges
from goodie.metrics import accuracy, average_precision, roc_auc
from goodie.model import GoodieConfig
from goodie.sweep import (
    aggregate,
    build_config,
    emit_results,
    parse_list,
    read_config_file,
    read_results,
    render_results,
    sweep,
    sweep_cells,
)
from goodie.training import CSV_COLUMNS

TINY = SyntheticSpec(n_nodes=80, n_classes=2, feature_dim=6, p_intra=0.15, p_inter=0.01, seed=1)
FAST = GoodieConfig(max_epochs=6, patience=2, hidden=8)


def tiny_cfg(tmp_path=None, **kw):
    base = dict(synthetic=TINY, mr_grid=(0.0, 1.0), seeds=(0, 1), methods=("goodie", "lp"),
                per_class_train=5, goodie=FAST)
    if tmp_path is not None:
        base["out"] = str(tmp_path / "res.csv")
    base.update(kw)
    return ExperimentConfig(**base)


class TestSynthetic:
    def test_reproducible(self):
        a, b = generate_synthetic(TINY), generate_synthetic(TINY)
        assert a.graph.edges.tobytes() == b.graph.edges.tobytes()
        assert a.features.tobytes() == b.features.tobytes()
        assert (a.labels == b.labels).all()

    def test_balanced_and_homophilous(self):
        ds = generate_synthetic(SyntheticSpec(n_nodes=400, seed=0))
        assert np.bincount(ds.labels).tolist() == [100] * 4
        same = ds.labels[ds.graph.edges[:, 0]] == ds.labels[ds.graph.edges[:, 1]]
        assert same.mean() > 0.7

    def test_rejects_heterophily(self):
        with pytest.raises(ValueError):
            SyntheticSpec(p_intra=0.01, p_inter=0.02)

    def test_roundtrip(self, tmp_path):
        ds = generate_synthetic(TINY)
        save_dataset(ds, tmp_path / "d")
        back = load_dataset(tmp_path / "d")
        assert back.graph.edges.tolist() == ds.graph.edges.tolist()
        assert back.features.tobytes() == ds.features.tobytes()
        assert (back.labels == ds.labels).all()


class TestLinkSplit:
    def test_properties(self):
        ds = generate_synthetic(SyntheticSpec(n_nodes=200, seed=2))
        sp = link_split(ds.graph, 0.10, 0.05, seed=0)
        m = len(ds.graph.edges)
        assert len(sp.test_pos) == round(0.1 * m) and len(sp.val_pos) == round(0.05 * m)
        assert len(sp.test_neg) == len(sp.test_pos) and len(sp.val_neg) == len(sp.val_pos)
        n = ds.graph.n_nodes
        keys = [set(_pair_keys(p, n).tolist()) for p in (sp.train_pos, sp.val_pos, sp.test_pos)]
        assert not (keys[0] & keys[1]) and not (keys[0] & keys[2]) and not (keys[1] & keys[2])
        assert sum(map(len, keys)) == m
        assert sp.train_graph.csr.nnz == 2 * len(sp.train_pos)
        edges = set(_pair_keys(ds.graph.edges, n).tolist())
        negs = _pair_keys(np.vstack([sp.val_neg, sp.test_neg]), n).tolist()
        assert not (set(negs) & edges) and len(set(negs)) == len(negs)
        assert (np.vstack([sp.val_neg, sp.test_neg])[:, 0] < np.vstack([sp.val_neg, sp.test_neg])[:, 1]).all()

    def test_deterministic(self):
        ds = generate_synthetic(TINY)
        a, b = link_split(ds.graph, seed=4), link_split(ds.graph, seed=4)
        assert a.test_neg.tobytes() == b.test_neg.tobytes() and a.val_pos.tobytes() == b.val_pos.tobytes()

    def test_non_edge_sampler_exhaustion(self):
        with pytest.raises(ValueError):
            sample_non_edges(3, 3, np.array([0 * 3 + 1]), np.random.default_rng(0))


class TestMetrics:
    def test_accuracy(self):
        assert accuracy([0, 1, 1], [0, 1, 0]) == pytest.approx(2 / 3)
        assert accuracy([0, 1, 1], [0, 1, 0], [0, 1]) == 1.0
        with pytest.raises(ValueError):
            accuracy([], [])

    def test_auc_examples(self):
        assert roc_auc([0.9, 0.8], [0.1, 0.2]) == 1.0
        assert roc_auc([0.1], [0.9]) == 0.0
        assert roc_auc([0.5, 0.5], [0.5]) == 0.5

    def test_ap_examples(self):
        assert average_precision([0.9], [0.1]) == 1.0
        # ranking pos, neg, pos: (1/2)*1 + (1/2)*(2/3)
        assert average_precision([0.9, 0.5], [0.7]) == pytest.approx(5 / 6, abs=1e-15)

    @settings(max_examples=80, deadline=None)
    @given(pos=st.lists(st.integers(0, 6), min_size=1, max_size=10),
           neg=st.lists(st.integers(0, 6), min_size=1, max_size=10))
    def test_exact_against_pairwise_oracle(self, pos, neg):
        p = [x / 4 for x in pos]
        n = [x / 4 for x in neg]
        assert roc_auc(p, n) == oracles.auc(p, n)
        assert average_precision(p, n) == oracles.average_precision(p, n)

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(0)
        assert abs(roc_auc(rng.random(4000), rng.random(4000)) - 0.5) < 0.02


class TestExperiment:
    def test_method_names(self):
        assert canonical_method("GCN_ZERO") == "gcn-zero"
        assert canonical_method("lp_only") == "lp"
        with pytest.raises(ValueError):
            canonical_method("mlp")

    def test_seed_streams_distinct(self):
        s = derive_seeds(3)
        assert len(set(s.values())) == len(s) and s == derive_seeds(3)

    def test_n_val(self):
        assert resolve_n_val(None, 2708, 140) == 1500
        assert resolve_n_val(None, 400, 80) == 160
        assert resolve_n_val(None, 2000, 80) == 960
        assert resolve_n_val(7, 400, 80) == 7

    def test_run_cell_fields(self):
        cfg = tiny_cfg()
        data = cfg.load_data()
        r = run_cell(data, "goodie", "structural", 0.5, 0, cfg)
        assert 0 <= r.test_acc <= 1 and 1 <= r.epochs <= 6
        assert r.alpha_lp_mean + r.alpha_fp_mean == pytest.approx(1.0)
        assert r.seconds is None
        lp = run_cell(data, "lp", "structural", 0.5, 0, cfg)
        assert lp.epochs == 0 and lp.alpha_fp_mean is None

    def test_run_cell_deterministic(self):
        cfg = tiny_cfg()
        data = cfg.load_data()
        for m in ("goodie", "gcn-nm", "fp-gcn"):
            assert run_cell(data, m, "uniform", 0.3, 2, cfg).row() == run_cell(data, m, "uniform", 0.3, 2, cfg).row()

    def test_link_cell(self):
        cfg = tiny_cfg(task="link")
        data = cfg.load_data()
        r = run_cell(data, "goodie", "structural", 0.9999, 0, cfg)
        assert 0 <= r.auc <= 1 and 0 <= r.ap <= 1 and r.test_acc is None
        with pytest.raises(ValueError):
            run_cell(data, "lp", "structural", 0.0, 0, cfg)


class TestResults:
    rows = [
        {"method": "goodie", "scenario": "uniform", "mr": 0.5, "seed": 0, "test_acc": 0.6},
        {"method": "goodie", "scenario": "uniform", "mr": 0.5, "seed": 1, "test_acc": 0.8},
    ]

    def test_header_only(self, tmp_path):
        emit_results([], tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_aggregate_population_std(self):
        (cell,) = aggregate(self.rows)
        assert cell.n == 2 and cell.mean == pytest.approx(0.7) and cell.std == pytest.approx(0.1)

    def test_csv_roundtrip_and_blanks(self, tmp_path):
        emit_results(self.rows, tmp_path / "r.csv")
        text = (tmp_path / "r.csv").read_text()
        assert text.splitlines()[1] == "goodie,uniform,0.5,0,0.6,,,,,,,"
        back = read_results(tmp_path / "r.csv")
        assert back[1]["test_acc"] == 0.8 and back[0]["auc"] is None

    def test_json_roundtrip(self, tmp_path):
        emit_results(self.rows, tmp_path / "r.json", "json")
        doc = json.loads((tmp_path / "r.json").read_text())
        assert list(doc[0]) == list(CSV_COLUMNS)
        assert read_results(tmp_path / "r.json") == read_results_csv(self.rows, tmp_path)

    def test_floats_exact(self):
        v = 0.1 + 0.2
        text = render_results([dict(self.rows[0], test_acc=v)])
        assert repr(v) in text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render_results(self.rows, "xml")


def read_results_csv(rows, tmp_path):
    emit_results(rows, tmp_path / "x.csv")
    return read_results(tmp_path / "x.csv")


class TestSweep:
    def test_cell_order(self):
        cells = sweep_cells(tiny_cfg())
        assert cells[:3] == [("goodie", "structural", 0.0, 0), ("lp", "structural", 0.0, 0),
                             ("goodie", "structural", 0.0, 1)]
        assert len(cells) == 8

    def test_rows_and_resume(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        rows = sweep(cfg)
        assert len(rows) == 8
        first = (tmp_path / "res.csv").read_bytes()
        # drop the last three rows; a rerun recomputes only those
        lines = first.decode().splitlines(keepends=True)
        (tmp_path / "res.csv").write_text("".join(lines[:-3]))
        calls = []
        import goodie.sweep as sw
        orig = sw.run_cell
        sw.run_cell = lambda *a, **k: calls.append(a[1:5]) or orig(*a, **k)
        try:
            sweep(cfg)
        finally:
            sw.run_cell = orig
        assert len(calls) == 3
        assert (tmp_path / "res.csv").read_bytes() == first

    def test_parallel_matches_serial(self, tmp_path):
        serial = sweep(tiny_cfg())
        par = sweep(tiny_cfg(), workers=2)
        assert par == serial


class TestConfig:
    def test_parse_list(self):
        assert parse_list("0-3,7", int) == (0, 1, 2, 3, 7)
        assert parse_list("0.1, 0.5;1", float) == (0.1, 0.5, 1.0)

    def test_config_file(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# sweep\nmethods = goodie, lp\nmr = 0, 0.5\nseeds = 0-2\nlambda = 0.01\n"
                     "n_nodes = 120\ndata_seed = 3\nn_val = auto\n")
        cfg = build_config(read_config_file(p))
        assert cfg.methods == ("goodie", "lp") and cfg.mr_grid == (0.0, 0.5) and cfg.seeds == (0, 1, 2)
        assert cfg.goodie.lam == 0.01 and cfg.synthetic.n_nodes == 120 and cfg.synthetic.seed == 3
        assert cfg.n_val is None

    def test_bad_lines(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("just words\n")
        with pytest.raises(ValueError):
            read_config_file(p)
        with pytest.raises(ValueError):
            build_config({"nonsense": "1"})

    def test_invalid_values(self):
        with pytest.raises(ValueError):
            build_config({"mr": "1.5"})


class TestCli:
    def test_run_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "o.csv"
        code = main(["run", "--method", "lp,gcn-zero", "--mr", "0,1", "--seed", "0-1",
                     "--out", str(out), "--set", "n_nodes=80", "--set", "n_classes=2",
                     "--set", "per_class_train=5", "--set", "max_epochs=3"])
        assert code == 0
        rows = read_results(out)
        assert len(rows) == 8 and {r["method"] for r in rows} == {"lp", "gcn-zero"}
        assert "test_acc=" in capsys.readouterr().out

    def test_bad_input_exit_code(self, capsys):
        assert main(["run", "--mr", "2.0"]) == 2
        assert "error" in capsys.readouterr().err

    def test_synth(self, tmp_path):
        assert main(["synth", str(tmp_path / "s"), "--n-nodes", "50", "--n-classes", "2"]) == 0
        ds = load_dataset(tmp_path / "s")
        assert ds.graph.n_nodes == 50 and ds.n_classes == 2

    def test_dataset_dir(self, tmp_path):
        save_dataset(generate_synthetic(TINY), tmp_path / "d")
        code = main(["run", "--dataset", str(tmp_path / "d"), "--method", "lp", "--mr", "0",
                     "--seed", "0", "--set", "per_class_train=5", "--out", str(tmp_path / "r.json"),
                     "--format", "json"])
        assert code == 0 and len(read_results(tmp_path / "r.json")) == 1
