import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from didkit import NEVER, write_panel
from didkit.cli import main

from conftest import make_panel

DOCS = Path(__file__).resolve().parent.parent / "docs"


def schema(name):
    return json.loads((DOCS / f"{name}.schema.json").read_text())


def validate(doc_path: Path, schema_name: str):
    doc = json.loads(doc_path.read_text())
    jsonschema.validate(doc, schema(schema_name))
    return doc


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "dgp.toml"
    cfg.write_text(
        """
n_units = 260
n_periods = 7
noise_sd = 1.0
n_covariates = 2
selection_on_covariates = [0.5, -0.4]
trend_coefficients = [0.3, 0.2]
weight_distribution = "lognormal"
seed = 5

[cohort_shares]
"3" = 0.3
"5" = 0.2
never = 0.5

[effects]
kind = "ramp"
base = 1.0
slope = 0.5
"""
    )
    out = base / "sim.csv"
    code = main(["simulate", "--config", str(cfg), "--out", str(out),
                 "--out-dir", str(base / "simout")])
    assert code == 0
    validate(base / "simout" / "simulate.json", "simulate")
    return out


def test_attgt_happy_path(sim_csv, tmp_path):
    code = main([
        "attgt", "--input", str(sim_csv), "--estimator", "dr",
        "--assumption", "not_yet", "--covariates", "x1,x2",
        "--boot", "299", "--seed", "7", "--out-dir", str(tmp_path),
    ])
    assert code == 0
    for name in ("attgt.json", "attgt.csv", "event_study.json",
                 "event_study.csv", "event_study.svg"):
        assert (tmp_path / name).exists()
    doc = validate(tmp_path / "attgt.json", "attgt")
    assert doc["estimator"] == "dr"
    assert doc["diagnostics"]["pretrend_test"]["dof"] >= 1
    assert doc["diagnostics"]["overlap"], "dr runs should report overlap per cohort"
    es = validate(tmp_path / "event_study.json", "event_study")
    assert es["overall"] is not None
    for point in es["points"]:
        lo_p, hi_p = point["pointwise"]
        lo_s, hi_s = point["simultaneous"]
        assert lo_s <= lo_p and hi_s >= hi_p


def test_unknown_estimator_exits_2(sim_csv, tmp_path, capsys):
    code = main(["attgt", "--input", str(sim_csv), "--estimator", "bogus",
                 "--out-dir", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "means" in err and "dr" in err  # message lists valid values


def test_validation_error_exits_2(tmp_path, capsys):
    code = main(["attgt", "--input", str(tmp_path / "nope.csv")])
    assert code == 2


def test_estimation_error_exits_3(tmp_path, capsys):
    # bacon on a panel without the always-treated group fails estimation
    data = make_panel([2.0, 2.0, NEVER, NEVER], np.zeros((4, 2)))
    path = tmp_path / "p.csv"
    write_panel(data, path)
    code = main(["bacon", "--input", str(path), "--out-dir", str(tmp_path)])
    assert code == 3


def test_same_seed_byte_identical_outputs(sim_csv, tmp_path):
    args = ["attgt", "--input", str(sim_csv), "--estimator", "means",
            "--boot", "299", "--seed", "13"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out-dir", str(a)]) == 0
    assert main(args + ["--out-dir", str(b), "--threads", "4"]) == 0
    for name in ("attgt.json", "event_study.json", "event_study.csv",
                 "event_study.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_aggregate_balanced_window(sim_csv, tmp_path):
    code = main(["aggregate", "--input", str(sim_csv), "--estimator", "means",
                 "--window", "0", "1", "--boot", "299", "--out-dir", str(tmp_path)])
    assert code == 0
    doc = validate(tmp_path / "event_study.json", "event_study")
    assert doc["balanced"] is True
    assert doc["window"] == [0, 1]
    assert [p["event_time"] for p in doc["points"]] == [0, 1]


def test_balance_outputs(sim_csv, tmp_path):
    code = main(["balance", "--input", str(sim_csv), "--pre", "1", "--post", "2",
                 "--weighted", "--out-dir", str(tmp_path)])
    assert code == 0
    doc = validate(tmp_path / "balance.json", "balance")
    assert {r["kind"] for r in doc["rows"]} == {"level", "difference"}
    md = (tmp_path / "balance.md").read_text()
    assert "| x1 |" in md


def test_twfe_and_bacon_cross_command_consistency(tmp_path):
    rng = np.random.default_rng(23)
    groups = rng.choice([1.0, 2.0, NEVER], size=120, p=[0.3, 0.4, 0.3])
    data = make_panel(groups, rng.normal(size=(120, 2)) * 2.0)
    path = tmp_path / "two_period.csv"
    write_panel(data, path)

    assert main(["bacon", "--input", str(path), "--out-dir", str(tmp_path / "b")]) == 0
    assert main(["twfe", "--input", str(path), "--spec", "static",
                 "--out-dir", str(tmp_path / "t")]) == 0
    bacon = validate(tmp_path / "b" / "bacon.json", "bacon")
    twfe = validate(tmp_path / "t" / "twfe.json", "twfe")
    beta = next(c["estimate"] for c in twfe["coefficients"] if c["name"] == "treated_post")
    assert abs(bacon["reconstructed_beta"] - beta) <= 1e-10


def test_sensitivity_worked_example_through_cli(tmp_path):
    # single cohort at t=6 over 7 periods; group means engineered so the
    # largest adjacent pre step is 4 and the event-0 estimate is -2.6
    m = {1: 3.0, 2: -1.0, 3: -1.0, 4: -0.5, 5: 0.0, 6: -2.6, 7: -2.0}
    c = [0.3, 0.5, 0.2, 0.6, 0.4, 0.7, 0.1]
    d = [0.2, 0.4, 0.6, 0.1, 0.3, 0.5, 0.7]
    y = np.zeros((4, 7))
    for j, t in enumerate(sorted(m)):
        y[0, j] = m[t] + c[j]
        y[1, j] = m[t] - c[j]
        y[2, j] = d[j]
        y[3, j] = -d[j]
    data = make_panel([6.0, 6.0, NEVER, NEVER], y)
    path = tmp_path / "fixture.csv"
    write_panel(data, path)

    code = main(["sensitivity", "--input", str(path), "--estimator", "means",
                 "--assumption", "never", "--target-e", "0", "--mbar", "1",
                 "--benchmark", "max_pre_step", "--boot", "299",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    doc = validate(tmp_path / "sensitivity.json", "sensitivity")
    lo, hi = doc["identified_set"]
    assert lo == pytest.approx(-6.6, abs=1e-9)
    assert hi == pytest.approx(1.4, abs=1e-9)
    assert doc["violation"] == pytest.approx(4.0, abs=1e-9)


def test_custom_weight_column_name(tmp_path):
    rng = np.random.default_rng(31)
    groups = np.where(rng.random(80) < 0.5, 2.0, NEVER)
    data = make_panel(groups, rng.normal(size=(80, 2)),
                      weights=np.exp(rng.normal(size=80) * 0.4))
    path = tmp_path / "w.csv"
    from didkit.panel import PanelSchema

    write_panel(data, path, PanelSchema(weight="pop"))
    code = main(["attgt", "--input", str(path), "--estimator", "means",
                 "--weights", "pop", "--boot", "299", "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "attgt.json").read_text())
    assert doc["settings"]["weight_kind"] == "supplied"


def test_cluster_column_changes_bands(tmp_path):
    rng = np.random.default_rng(77)
    n_pairs = 120
    shock = rng.normal(size=(n_pairs, 2)) * 1.5
    y = np.repeat(shock, 2, axis=0) + rng.normal(size=(2 * n_pairs, 2)) * 0.1
    groups = np.repeat(np.where(rng.random(n_pairs) < 0.5, 2.0, NEVER), 2)
    clusters = tuple(f"c{k // 2}" for k in range(2 * n_pairs))
    data = make_panel(groups, y, cluster_ids=clusters)
    path = tmp_path / "pairs.csv"
    from didkit.panel import PanelSchema

    write_panel(data, path, PanelSchema(cluster="cluster"))

    base = ["attgt", "--input", str(path), "--estimator", "means",
            "--covariates", "", "--boot", "299", "--seed", "5"]
    assert main(base + ["--out-dir", str(tmp_path / "unit")]) == 0
    assert main(base + ["--cluster", "cluster", "--out-dir", str(tmp_path / "cl")]) == 0
    unit_doc = json.loads((tmp_path / "unit" / "event_study.json").read_text())
    cl_doc = json.loads((tmp_path / "cl" / "event_study.json").read_text())
    se_unit = unit_doc["points"][0]["se"]
    se_cl = cl_doc["points"][0]["se"]
    # paired shocks are nearly perfectly correlated within cluster
    assert se_cl > 1.3 * se_unit


def test_simulate_then_attgt_pipeline(sim_csv, tmp_path):
    # round trip: simulate wrote the csv, attgt consumes it
    code = main(["attgt", "--input", str(sim_csv), "--estimator", "ipw",
                 "--covariates", "x1,x2", "--boot", "299",
                 "--out-dir", str(tmp_path)])
    assert code == 0


def test_aggregate_window_from_config(sim_csv, tmp_path):
    cfg = tmp_path / "agg.toml"
    cfg.write_text(
        f"""
input = "{sim_csv}"
estimator = "means"
out_dir = "{tmp_path / 'out'}"

[bootstrap]
draws = 299

[aggregate]
window = [0, 1]
"""
    )
    assert main(["aggregate", "--config", str(cfg)]) == 0
    doc = json.loads((tmp_path / "out" / "event_study.json").read_text())
    assert doc["balanced"] is True and doc["window"] == [0, 1]


def test_config_file_with_flag_override(sim_csv, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f"""
input = "{sim_csv}"
estimator = "means"
assumption = "never"
out_dir = "{tmp_path / 'cfg_out'}"

[bootstrap]
draws = 299
seed = 21
"""
    )
    assert main(["attgt", "--config", str(cfg)]) == 0
    doc = json.loads((tmp_path / "cfg_out" / "attgt.json").read_text())
    assert doc["assumption"] == "never"
    # flag wins over config
    assert main(["attgt", "--config", str(cfg), "--assumption", "not_yet",
                 "--out-dir", str(tmp_path / "cfg_out2")]) == 0
    doc2 = json.loads((tmp_path / "cfg_out2" / "attgt.json").read_text())
    assert doc2["assumption"] == "not_yet"
