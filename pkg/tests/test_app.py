"""
Tests for the command-line front end.
"""

import pytest

from src.app import CliConfig, main, parse_args
from src.circuit.network import load
from src.memristor.device import ModelKind


def test_sweep_arguments():
    cfg = parse_args(["sweep", "--nin", "3", "--nout", "3", "--nbulk", "20,100,400", "--reals", "100", "--seed", "7"])
    spec = cfg.sweep_spec()
    assert spec.grid == ((3, 3, 20), (3, 3, 100), (3, 3, 400))
    assert spec.realizations == 100
    assert spec.base_seed == 7
    assert spec.variant is None


def test_defaults_follow_model_protocol():
    cfg = parse_args(["train", "--model", "bcm"])
    trainer = cfg.trainer_config()
    assert cfg.model is ModelKind.BCM
    assert trainer.v_write == -5.0
    assert trainer.max_corrections == 80


def test_no_arguments_is_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        parse_args([])
    assert excinfo.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_supra_threshold_read_rejected():
    with pytest.raises(SystemExit) as excinfo:
        parse_args(["train", "--vread", "0.2"])
    assert excinfo.value.code == 2


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as excinfo:
        parse_args(["sweep", "--bulk", "20"])
    assert excinfo.value.code == 2


def test_load_net_conflicts_with_dimensions():
    with pytest.raises(SystemExit) as excinfo:
        parse_args(["train", "--load-net", "net.txt", "--nin", "3"])
    assert excinfo.value.code == 2


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 3\nn_bulk = 20,40\nrealizations = 5\n")
    cfg = parse_args(["sweep", "--config", str(path), "--seed", "9"])
    assert cfg.seed == 9
    assert cfg.n_bulk == (20, 40)
    assert cfg.realizations == 5


def test_unknown_config_key_is_usage_error(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n_bulks = 20\n")
    with pytest.raises(SystemExit) as excinfo:
        parse_args(["sweep", "--config", str(path)])
    assert excinfo.value.code == 2


def test_variants_subcommand_carries_variant():
    cfg = parse_args(["variants", "--variant", "equal-r-random-vwrite", "--nbulk", "50"])
    assert cfg.sweep_spec().variant == "equal-r-random-vwrite"


def test_cli_config_list_parsing():
    cfg = CliConfig(command="toy", n_mid="50, 150,300")
    assert cfg.n_mid == (50, 150, 300)


def test_main_device_demo(tmp_path):
    assert main(["device-demo", "--out", str(tmp_path), "--plot"]) == 0
    lines = (tmp_path / "device_demo.csv").read_text().splitlines()
    assert lines[0] == "t,v,i,r"
    assert (tmp_path / "device_demo.svg").exists()


def test_main_output_is_deterministic(tmp_path):
    args = ["sweep", "--nin", "2", "--nout", "2", "--nbulk", "10", "--reals", "2", "--max-steps", "30", "--seed", "4", "--threads", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_main_train_save_and_load(tmp_path):
    saved = tmp_path / "net.txt"
    args = ["train", "--nin", "2", "--nbulk", "20", "--nout", "2", "--map", "1,0", "--max-steps", "50", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path), "--save-net", str(saved)]) == 0
    net = load(saved)
    assert (net.dims.n_in, net.dims.n_bulk, net.dims.n_out) == (2, 20, 2)

    assert main(["train", "--load-net", str(saved), "--map", "0,1", "--max-steps", "50", "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "train.csv").exists()


def test_main_sequential_maps(tmp_path):
    args = ["train", "--nin", "2", "--nbulk", "20", "--nout", "2", "--maps", "0,1;1,0", "--max-steps", "50", "--out", str(tmp_path)]
    assert main(args) == 0
    assert (tmp_path / "sequential.csv").exists()
    assert (tmp_path / "sequential_schedule.csv").exists()


def test_main_runtime_fault_exit_code(tmp_path):
    missing = tmp_path / "missing.txt"
    assert main(["train", "--load-net", str(missing), "--out", str(tmp_path)]) == 1


def test_main_bad_map_is_runtime_fault(tmp_path):
    assert main(["train", "--nin", "3", "--maps", "reference", "--out", str(tmp_path)]) == 1


def test_main_usage_exit_code():
    assert main([]) == 2


def test_every_option_is_described():
    missing = [name for name, info in CliConfig.model_fields.items() if not info.description]
    assert missing == []
