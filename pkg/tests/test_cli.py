import json

import numpy as np
import pytest

from locbridge.cli import ExperimentConfig, build_parser, main, resolve_config
from locbridge.io import read_dataset, read_metadata
from locbridge.exceptions import ParameterError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "e.cfg"
    cfg_file.write_text("epsilon = 0.5\nseed = 3\nM = 20\nN = 7\n")
    args = build_parser().parse_args(["gen", "--config", str(cfg_file), "--seed", "9",
                                      "--set", "N=11"])
    cfg = resolve_config(args)
    assert cfg.epsilon == 0.5 and cfg.seed == 9 and cfg.M == 20 and cfg.N == 11


@pytest.mark.parametrize("mapping", [{"foo": "1"}, {"epsilon": "-1"}, {"experiment": "x"},
                                     {"M": "abc"}, {"csv": "maybe"}])
def test_config_validation(mapping):
    with pytest.raises(ParameterError):
        ExperimentConfig.from_mapping(mapping)


def test_config_typing():
    cfg = ExperimentConfig.from_mapping({"csv": "true", "n_jobs": "none", "L": "3.5", "M": "1e3"})
    assert cfg.csv is True and cfg.n_jobs is None and cfg.L == 3.5 and cfg.M == 1000


def test_gen_fit_sample_pipeline(tmp_path, capsys):
    data, model, out = (str(tmp_path / n) for n in ("g.lsbs", "g.model", "s.lsbs"))
    code, res, _ = run(capsys, "gen", "--seed", "1", "--out", data, "--set", "d=21",
                       "--set", "M=30", "--set", "csv=true")
    assert code == 0 and res["d"] == 21 and res["M"] == 30
    assert read_metadata(data)["experiment"] == "gauss_tridiag"
    assert (tmp_path / "g.csv").exists()

    code, res, _ = run(capsys, "fit", "--epsilon", "1", "--radius", "1", "--out", model,
                       "--set", f"data={data}", "--scheme", "localized_data_aware")
    assert code == 0 and res["n_sets"] == 21

    argv = ["sample", "--epsilon", "1", "--scheme", "localized_data_aware", "--out", out,
            "--set", f"model={model}", "--set", "N=12", "--set", "n_c=3"]
    code, res, _ = run(capsys, *argv)
    assert code == 0 and res["N"] == 12
    first = read_dataset(out)
    assert first.shape == (12, 21)
    assert (tmp_path / "s_centered_rows.csv").exists()
    run(capsys, *argv)
    assert read_dataset(out).tobytes() == first.tobytes()

    code, res, _ = run(capsys, "diag", "--set", f"data={out}", "--out", str(tmp_path / "dg.csv"))
    assert code == 0 and (tmp_path / "dg_histogram.csv").exists()


def test_refit_is_bitwise_identical(tmp_path, capsys):
    data = str(tmp_path / "g.lsbs")
    run(capsys, "gen", "--out", data, "--set", "d=9", "--set", "M=15")
    for name in ("a", "b"):
        run(capsys, "fit", "--out", str(tmp_path / f"{name}.model"), "--set", f"data={data}")
    a = np.load(tmp_path / "a.model")
    b = np.load(tmp_path / "b.model")
    assert np.array_equal(a["local_weights"], b["local_weights"])


def test_sample_zero(tmp_path, capsys):
    data, model = str(tmp_path / "g.lsbs"), str(tmp_path / "g.model")
    run(capsys, "gen", "--out", data, "--set", "d=9", "--set", "M=15")
    run(capsys, "fit", "--out", model, "--set", f"data={data}")
    code, res, err = run(capsys, "sample", "--out", str(tmp_path / "e.lsbs"),
                         "--set", f"model={model}", "--set", "N=0")
    assert code == 0 and res["N"] == 0 and err == ""
    assert read_dataset(str(tmp_path / "e.lsbs")).shape == (0, 9)


def test_global_scheme_pipeline(tmp_path, capsys):
    data, model = str(tmp_path / "g.lsbs"), str(tmp_path / "g.model")
    run(capsys, "gen", "--out", data, "--set", "d=5", "--set", "M=15")
    code, res, _ = run(capsys, "fit", "--scheme", "split_step", "--out", model, "--set", f"data={data}")
    assert res["model"] == "SchrodingerBridge"
    code, res, _ = run(capsys, "sample", "--scheme", "split_step", "--out", str(tmp_path / "s.lsbs"),
                       "--set", f"model={model}", "--set", "N=4")
    assert code == 0


def test_closure_command_zero_closure(tmp_path, capsys):
    rng = np.random.default_rng(0)
    K = 4
    z = rng.normal(size=(40, K))
    psi = -0.3 * z
    from locbridge.io import write_dataset
    data = str(tmp_path / "l.lsbs")
    write_dataset(data, np.hstack([z, psi]), {"experiment": "lorenz96", "sigma_z": 1.0,
                                               "sigma_psi": 0.3})
    model = str(tmp_path / "l.model")
    code, res, _ = run(capsys, "fit", "--epsilon", "0.1", "--out", model, "--set", f"data={data}")
    assert code == 0 and res["n_sets"] == K
    out = str(tmp_path / "c.lsbs")
    argv = ["closure", "--out", out, "--set", f"model={model}", "--set", "n_steps=20",
            "--set", "n_c=2", "--set", "tau_max=5"]
    code, res, _ = run(capsys, *argv)
    assert code == 0 and read_dataset(out).shape == (21, K)
    assert (tmp_path / "c_autocov.csv").exists()
    first = read_dataset(out)
    run(capsys, *argv)
    assert read_dataset(out).tobytes() == first.tobytes()
    code, _, _ = run(capsys, *argv, "--set", "zero_closure=true")
    assert code == 0


def test_errors_are_json_lines(tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--set", f"data={tmp_path / 'missing.lsbs'}")
    rec = json.loads(err.strip())
    assert code != 0 and rec["error"] == "FileNotFoundError" and rec["path"].endswith("missing.lsbs")

    code, _, err = run(capsys, "sample")
    assert code == 2 and json.loads(err)["error"] == "ParameterError"

    with pytest.raises(SystemExit) as exc:
        main(["sample", "--epsilon", "abc"])
    assert exc.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"


def test_corrupted_dataset_fails_model_load(tmp_path, capsys):
    data, model = str(tmp_path / "g.lsbs"), str(tmp_path / "g.model")
    run(capsys, "gen", "--out", data, "--set", "d=5", "--set", "M=10")
    run(capsys, "fit", "--out", model, "--set", f"data={data}")
    raw = bytearray(open(data, "rb").read())
    raw[-1] ^= 1
    open(data, "wb").write(bytes(raw))
    code, _, err = run(capsys, "sample", "--set", f"model={model}", "--set", "N=2",
                       "--out", str(tmp_path / "s.lsbs"))
    assert code == 2 and json.loads(err)["error"] == "IntegrityError"
