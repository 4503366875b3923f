import subprocess
import sys

import numpy as np
import pytest

from robustcodec.cli import SUBCOMMANDS, main
from robustcodec.persist import read_csv

MIX = "synth:gaussian_mixture:n=6,count=96,seed=1"
MIX_TEST = "synth:gaussian_mixture:n=6,count=48,seed=2"
BARS = "synth:bars:n=144,count=48,seed=1"


def write_cfg(path, **kv):
    path.write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
    return str(path)


def run(tmp_path, sub, name="run", **kv):
    return main([sub, write_cfg(tmp_path / f"{name}.cfg", **kv)])


def test_unknown_subcommand(tmp_path):
    assert main(["train-everything", write_cfg(tmp_path / "c.cfg", seed=0)]) == 2


def test_unknown_key(tmp_path):
    assert run(tmp_path, "train-standard", wobble=3) == 2


def test_missing_arguments():
    assert main([]) == 2


def test_missing_data_key(tmp_path):
    assert run(tmp_path, "train-standard", checkpoint=tmp_path / "x.ckpt") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # the run is meant to blow up
def test_numerical_failure_exit_code(tmp_path):
    code = run(tmp_path, "train-standard", data=MIX, hidden=4, latent_m=2, epochs=3, lr=1e300,
               checkpoint=tmp_path / "x.ckpt")
    assert code == 3


def test_theory_verify(tmp_path):
    out = tmp_path / "theory.csv"
    assert run(tmp_path, "theory-verify", theory_N="2,3,4,5,6,7,8", theory_starts=2, csv=out) == 0
    rows = read_csv(out)
    assert len(rows) == 21
    assert list(rows[0]) == ["N", "delta", "D_1_opt", "D_1_minimax", "V_opt1", "V_opt1pd",
                             "V_minimax", "margin"]
    assert all(r["margin"] > 0 for r in rows)


def test_theory_minimax(tmp_path, capsys):
    out = tmp_path / "mm.csv"
    assert run(tmp_path, "theory-minimax", theory_N=2, theory_delta=0.4, csv=out) == 0
    (row,) = read_csv(out)
    assert row["V_minimax"] == pytest.approx(0.0409205, abs=1e-6)
    assert "minimax lengths" in capsys.readouterr().out


def test_k0_dro_equals_standard_bitwise(tmp_path):
    common = dict(data=MIX, hidden=8, latent_m=3, epochs=3, lr=0.05, seed=5, gamma=2.0,
                  inner_steps=0)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    assert run(tmp_path, "train-standard", "a", checkpoint=a, **common) == 0
    assert run(tmp_path, "train-dro", "b", checkpoint=b, **common) == 0
    assert a.read_bytes() == b.read_bytes()


def test_training_and_eval_pipeline(tmp_path):
    ck = {k: tmp_path / f"{k}.ckpt" for k in ("std", "dro", "awgn", "st")}
    common = dict(data=MIX, hidden=8, latent_m=3, epochs=2, lr=0.05, seed=1,
                  inner_steps=3, inner_lr_scale=1.0, gamma=3.0)
    assert run(tmp_path, "train-standard", "s", checkpoint=ck["std"], csv=tmp_path / "l.csv",
               **common) == 0
    assert len(read_csv(tmp_path / "l.csv")) == 2 * 3
    assert run(tmp_path, "train-dro", "d", checkpoint=ck["dro"], init=ck["std"], **common) == 0
    assert run(tmp_path, "augment-awgn", "a", checkpoint=ck["awgn"], rho=0.01, **common) == 0
    assert run(tmp_path, "train-structured", "t", checkpoint=ck["st"], m1=1, m2=2,
               **common) == 0
    out = tmp_path / "wcd.csv"
    models = ",".join(str(ck[k]) for k in ("std", "dro", "awgn", "st"))
    assert run(tmp_path, "eval-wcd", "e", model=models, test_data=MIX_TEST, gamma_grid="1e9,2,1.5",
               inner_steps=3, inner_lr_scale=1.0, csv=out) == 0
    rows = read_csv(out)
    assert len(rows) == 12
    assert {r["model_id"] for r in rows} == {"std", "dro", "awgn", "st"}


def test_rotation_pipeline(tmp_path):
    base, gsdro, pred = (tmp_path / f"{k}.ckpt" for k in ("base", "gs", "pred"))
    common = dict(data=BARS, hidden=8, epochs=1, lr=0.05, seed=0, grid_step_degrees=30)
    assert run(tmp_path, "train-standard", "b", checkpoint=base, latent_m=8, **common) == 0
    assert run(tmp_path, "train-groupshift", "g", checkpoint=gsdro, latent_m=10, **common) == 0
    assert run(tmp_path, "train-anglepred", "p", checkpoint=pred, model=base, **common) == 0
    out = tmp_path / "rot.csv"
    assert run(tmp_path, "eval-rotation", "r", model=f"{base},{gsdro}", predictor=pred, base=base,
               test_data=BARS, grid_step_degrees=30, csv=out) == 0
    rows = read_csv(out)
    assert len(rows) == 3 * 6
    assert {r["model_id"] for r in rows} == {"base", "gs", "structured"}


def test_augmented_standard(tmp_path):
    assert run(tmp_path, "train-standard", data=BARS, hidden=4, latent_m=2, epochs=1,
               augment="rotated_plus_original", checkpoint=tmp_path / "x.ckpt") == 0


def test_identical_runs_bitwise(tmp_path):
    outs = []
    for k in range(2):
        ck, csv = tmp_path / f"r{k}.ckpt", tmp_path / f"r{k}.csv"
        assert run(tmp_path, "train-dro", f"c{k}", data=MIX, hidden=8, latent_m=3, epochs=2,
                   inner_steps=3, gamma=2.0, seed=9, checkpoint=ck, csv=csv) == 0
        outs.append((ck.read_bytes(), csv.read_bytes()))
    assert outs[0] == outs[1]


def test_console_script(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", theory_N=2, theory_delta=0.3, csv=tmp_path / "o.csv")
    proc = subprocess.run([sys.executable, "-m", "robustcodec", "theory-minimax", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "theory-minimax" in proc.stdout
    bad = subprocess.run([sys.executable, "-m", "robustcodec", "nope", cfg],
                         capture_output=True, text=True)
    assert bad.returncode == 2


def test_all_subcommands_listed():
    assert len(SUBCOMMANDS) == 10
