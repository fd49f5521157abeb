import numpy as np
import pytest

from irrevhmm.cli import PRESETS, ConfigError, load_config, main, parse_config_text

FAST = ["--set", "T_total=4", "--set", "T_burn=0.5"]


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out.read_text() if out.exists() else None


def test_table_header_only_for_zero_replicates(tmp_path):
    code, text = _run(tmp_path, "t.csv", "table", "--replicates", "0")
    assert code == 0
    body = [line for line in text.splitlines() if not line.startswith("#")]
    assert body == ["scheme,eps,tau,delta,mean_err,std_err,mean_avar,std_avar,divergence_fraction,n_replicates"]


def test_table_rows_and_provenance(tmp_path):
    code, text = _run(tmp_path, "t.csv", "table", "--replicates", "3", *FAST)
    assert code == 0
    lines = text.splitlines()
    assert "# potential = double_well" in lines
    assert "# row = hmm 0.0001 5e-06 0.005" in lines
    body = [line for line in lines if not line.startswith("#")]
    assert len(body) == 1 + 6
    assert body[1].startswith("em,5.00000e+00,,5.00000e-03,")


def test_same_seed_same_bytes_across_threads(tmp_path):
    _, a = _run(tmp_path, "a.csv", "table", "--replicates", "5", "--seed", "7", "--threads", "1", *FAST)
    _, b = _run(tmp_path, "b.csv", "table", "--replicates", "5", "--seed", "7", "--threads", "3", *FAST)
    _, c = _run(tmp_path, "c.csv", "table", "--replicates", "5", "--seed", "8", "--threads", "1", *FAST)
    assert a == b
    assert a != c


def test_config_file(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# custom table\npotential = rbs3\nbeta = 0.2\nobservable = shifted_square\n"
                   "T_total = 2\nT_burn = 0.5\nrow = em 1 - 5e-3\nrow = hmm 1e-3 5e-5 5e-3\n")
    code, text = _run(tmp_path, "o.csv", "table", "--config", str(cfg), "--replicates", "2")
    assert code == 0
    assert "# true_average = 2.19868e+00" in text
    assert len([line for line in text.splitlines() if not line.startswith("#")]) == 3


@pytest.mark.parametrize("args", [
    ["table", "--set", "potential=nope"],
    ["table", "--set", "bogus=1"],
    ["table", "--set", "delta=abc"],
    ["table", "--preset", "table9"],
    ["table", "--config", "/nonexistent/file.cfg"],
    ["table", "--set", "beta=-1"],
    ["compare", "--config", "/dev/null", "--set", "eps=0"],
    ["transitions", "--set", "potential=quadratic_bowl"],
    ["gibbs", "--threads", "0"],
])
def test_config_errors_exit_2(args, capsys):
    assert main(args) == 2
    assert "configuration error" in capsys.readouterr().err


def test_usage_error_exit_2():
    assert main(["frobnicate"]) == 2


def test_parse_rows():
    preset, settings, rows = parse_config_text("preset = table2\nrow = hmm 1e-4 1e-6 1e-3\nseed = 4\n")
    assert preset == "table2" and settings == {"seed": 4}
    assert rows[0].tau == 1e-6
    with pytest.raises(ConfigError):
        parse_config_text("row = hmm 1e-4\n")
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")


def test_presets_resolve():
    for name in PRESETS:
        cfg = load_config(preset=name)
        assert cfg.resolved_rows()
    assert load_config(preset="table1").n_replicates == 200
    assert load_config(preset="table1_full").n_replicates == 2000
    taus = [r.tau / r.eps for r in load_config(preset="table2").resolved_rows() if r.scheme == "hmm"]
    assert sorted(set(np.round(taus, 6))) == [0.01, 0.02]


def test_gibbs_command(tmp_path):
    code, text = _run(tmp_path, "g.csv", "gibbs")
    assert code == 0
    assert text.splitlines()[-1].startswith("double_well,1.00000e-01,x_plus_y2,5.00000e-02")


def test_transitions_zero_window(tmp_path):
    code, text = _run(tmp_path, "tr.csv", "transitions", "--set", "T_total=20", "--set", "T_burn=20")
    assert code == 0
    assert "# total = 0" in text


def test_graph_command_bowl(tmp_path):
    code, text = _run(tmp_path, "gr.csv", "graph", "--set", "potential=quadratic_bowl", "--set", "n_energies=5")
    assert code == 0
    assert "# no interior vertices: no gluing conditions" in text


def test_ylimit_and_compare_small(tmp_path):
    code, text = _run(tmp_path, "y.csv", "ylimit", "--set", "n_samples=4", "--set", "t=0.01")
    assert code == 0
    assert len([line for line in text.splitlines() if not line.startswith("#")]) == 5
    code, text = _run(tmp_path, "c.csv", "compare", "--set", "n_samples=20", "--set", "t=0.01")
    assert code == 0
    assert text.splitlines()[-1].startswith("hmm,5.00000e-01")
