import json

import numpy as np
import pytest

from pairlearn.cli import main
from pairlearn.config import ExperimentConfig, from_dict, load_config
from pairlearn.data import generate_blobs, load_csv_dataset, save_csv_dataset
from pairlearn.errors import ConfigError
from pairlearn.model import MlpSpec, ParameterVector, build, save_checkpoint

SMALL_BLOBS = {"blobs": {"n_classes": 4, "n_per_class": 40}}


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def kv_lines(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and " " not in line)


# -- config parsing ----------------------------------------------------------


def test_default_config_is_valid():
    cfg = ExperimentConfig()
    assert cfg.paradigm == "supervised" and cfg.data.blobs.n_per_class == 500


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ({"trian": {}}, "trian"),
        ({"train": {"epochz": 3}}, "epochz"),
        ({"data": {"blobs": {"colour": 1}}}, "colour"),
        ({"train": {"epochs": "ten"}}, "integer"),
        ({"train": {"lr": True}}, "number"),
        ({"paradigm": "weak"}, "paradigm"),
        ({"landscape": {"method": "pca"}}, "method"),
        ({"data": {"path": "x.csv", "blobs": {}}}, "either"),
    ],
)
def test_strict_config_rejects_bad_documents(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        from_dict(ExperimentConfig, doc)


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_seed_override_reaches_every_section():
    cfg = from_dict(ExperimentConfig, {"train": {"seed": 1}, "model": {"seed": 2}}).with_seed(42)
    assert {cfg.train.seed, cfg.model.seed, cfg.data.blobs.seed, cfg.data.split_seed, cfg.similarity.seed} == {42}


# -- gen-data ----------------------------------------------------------------


def test_gen_data_default_and_reproducible(tmp_path, capsys):
    code, out, _ = run(capsys, "gen-data", "--out", str(tmp_path / "a"))
    assert code == 0 and "N=2000 d=2 C=4" in out
    assert len((tmp_path / "a" / "data.csv").read_text().splitlines()) == 2000
    run(capsys, "gen-data", "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "data.csv").read_bytes() == (tmp_path / "b" / "data.csv").read_bytes()


def test_gen_data_seed_flag_changes_output(tmp_path, capsys):
    run(capsys, "gen-data", "--out", str(tmp_path / "a"))
    run(capsys, "gen-data", "--out", str(tmp_path / "b"), "--seed", "5")
    assert (tmp_path / "a" / "data.csv").read_bytes() != (tmp_path / "b" / "data.csv").read_bytes()


def test_missing_output_is_a_usage_error(capsys):
    code, _, err = run(capsys, "gen-data")
    assert code == 2 and "--out" in err


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code != 0


# -- train / eval ------------------------------------------------------------


@pytest.fixture(scope="module")
def supervised_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("sup")
    cfg = write_config(root / "cfg.json", {"data": SMALL_BLOBS, "train": {"epochs": 30, "lr": 0.01}})
    code = main(["train", "--config", cfg, "--out", str(root / "run")])
    assert code == 0
    return root


def test_train_writes_artifacts(supervised_run):
    run_dir = supervised_run / "run"
    lines = (run_dir / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,accuracy,nmi" and len(lines) == 31
    assert (run_dir / "model.ckpt").exists()
    assert float(lines[-1].split(",")[2]) >= 0.98


def test_train_is_byte_reproducible(supervised_run, capsys):
    cfg = str(supervised_run / "cfg.json")
    run(capsys, "train", "--config", cfg, "--out", str(supervised_run / "again"))
    for name in ("model.ckpt", "metrics.csv", "eval_data.csv"):
        assert (supervised_run / "run" / name).read_bytes() == (supervised_run / "again" / name).read_bytes()


def test_eval_matches_training_log(supervised_run, capsys):
    run_dir = supervised_run / "run"
    code, out, _ = run(
        capsys, "eval", "--checkpoint", str(run_dir / "model.ckpt"), "--data", str(run_dir / "eval_data.csv"), "--k", "4"
    )
    assert code == 0
    vals = kv_lines(out)
    final = (run_dir / "metrics.csv").read_text().splitlines()[-1].split(",")
    # same computation, same 17-digit formatting
    assert vals["accuracy"] == final[2]
    assert vals["nmi"] == final[3]
    assert sum(int(s) for s in vals["cluster_sizes"].split(",")) == 32
    assert {"loss_mcl", "loss_kcl", "loss_ce", "ndc"} <= vals.keys()


def test_eval_k_mismatch(supervised_run, capsys):
    run_dir = supervised_run / "run"
    code, _, err = run(
        capsys, "eval", "--checkpoint", str(run_dir / "model.ckpt"), "--data", str(run_dir / "eval_data.csv"), "--k", "7"
    )
    assert code != 0 and "7" in err


def test_eval_needs_checkpoint_and_data(capsys):
    code, _, _ = run(capsys, "eval")
    assert code == 2


def test_eval_untrained_model_is_at_chance(tmp_path, capsys):
    data = generate_blobs(4, 50, 2, 5.0, 0.5, seed=0)
    save_csv_dataset(data, tmp_path / "d.csv")
    m = build(MlpSpec((2, 8, 4)))
    # zero output layer: every sample gets the same uniform distribution
    groups = dict(m.params.items())
    groups["layer1.weight"] = np.zeros((4, 8))
    save_checkpoint(m.with_params(ParameterVector(groups)), tmp_path / "m.ckpt")
    _, out, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "m.ckpt"), "--data", str(tmp_path / "d.csv"))
    assert abs(float(kv_lines(out)["accuracy"]) - 0.25) <= 0.1


def test_eval_overclustered_checkpoint_counts_unmatched(tmp_path, capsys):
    data = generate_blobs(2, 50, 2, 5.0, 0.5, seed=0)
    save_csv_dataset(data, tmp_path / "d.csv")
    save_checkpoint(build(MlpSpec((2, 8, 5), seed=3)), tmp_path / "m.ckpt")
    _, out, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "m.ckpt"), "--data", str(tmp_path / "d.csv"))
    vals = kv_lines(out)
    sizes = sorted((int(s) for s in vals["cluster_sizes"].split(",")), reverse=True)
    assert float(vals["accuracy"]) <= sum(sizes[:2]) / 100
    # fewer classes than nodes: CE is reported, since labels fit inside K
    assert "loss_ce" in vals


def test_transfer_prints_ndc(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "t.json",
        {
            "data": SMALL_BLOBS,
            "paradigm": "transfer",
            "model": {"n_outputs": 10},
            "train": {"epochs": 5, "lr": 0.01},
        },
    )
    code, out, _ = run(capsys, "train", "--config", cfg, "--out", str(tmp_path / "run"))
    assert code == 0 and "ndc=" in out and "accuracy=" in out


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ({"paradigm": "semi"}, "labeled_fraction"),
        ({"paradigm": "transfer", "train": {"objective": "CE"}}, "MCL or KCL"),
    ],
)
def test_train_paradigm_errors(tmp_path, capsys, doc, fragment):
    cfg = write_config(tmp_path / "c.json", doc)
    code, _, err = run(capsys, "train", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 1 and fragment in err


def test_semi_paradigm_runs(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "s.json",
        {
            "data": {"blobs": {"n_classes": 3, "n_per_class": 40}, "labeled_fraction": 0.1},
            "paradigm": "semi",
            "train": {"epochs": 2, "warm_start_epochs": 3},
            "similarity": {"augmentation_scale": 0.1},
        },
    )
    code, out, _ = run(capsys, "train", "--config", cfg, "--out", str(tmp_path / "run"))
    assert code == 0 and out.startswith("final accuracy=")


def test_train_from_csv_path(tmp_path, capsys):
    save_csv_dataset(generate_blobs(3, 20, 3, 5.0, 0.5, seed=1), tmp_path / "d.csv")
    cfg = write_config(tmp_path / "c.json", {"data": {"path": str(tmp_path / "d.csv")}, "train": {"epochs": 2}})
    code, _, _ = run(capsys, "train", "--config", cfg, "--out", str(tmp_path / "run"))
    assert code == 0
    assert load_csv_dataset(tmp_path / "run" / "eval_data.csv").dim == 3


# -- landscape ---------------------------------------------------------------


def test_landscape_random_mode(supervised_run, tmp_path, capsys):
    cfg = write_config(
        tmp_path / "l.json",
        {
            "data": SMALL_BLOBS,
            "landscape": {"checkpoints": [str(supervised_run / "run" / "model.ckpt")], "resolution": 3},
        },
    )
    code, _, _ = run(capsys, "landscape", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 0
    lines = (tmp_path / "o" / "surface.csv").read_text().splitlines()
    assert lines[0] == "alpha,beta,loss" and len(lines) == 10


def test_landscape_mutual_origin_equals_eval_loss(tmp_path, capsys):
    ckpts = []
    for seed in (1, 2, 3):
        path = tmp_path / f"m{seed}.ckpt"
        save_checkpoint(build(MlpSpec((2, 8, 4), seed=seed)), path)
        ckpts.append(str(path))
    data = generate_blobs(4, 40, 2, 5.0, 0.5, seed=0)
    save_csv_dataset(data, tmp_path / "d.csv")
    cfg = write_config(
        tmp_path / "l.json",
        {
            "data": {"path": str(tmp_path / "d.csv")},
            "landscape": {"method": "mutual", "checkpoints": ckpts, "resolution": 5, "loss": "KCL"},
        },
    )
    assert run(capsys, "landscape", "--config", cfg, "--out", str(tmp_path / "o"))[0] == 0
    rows = [line.split(",") for line in (tmp_path / "o" / "surface.csv").read_text().splitlines()[1:]]
    corner = {(float(a), float(b)): v for a, b, v in rows}
    _, out, _ = run(capsys, "eval", "--checkpoint", ckpts[0], "--data", str(tmp_path / "d.csv"))
    assert corner[(0.0, 0.0)] == kv_lines(out)["loss_kcl"]
    _, out, _ = run(capsys, "eval", "--checkpoint", ckpts[1], "--data", str(tmp_path / "d.csv"))
    assert float(corner[(1.0, 0.0)]) == pytest.approx(float(kv_lines(out)["loss_kcl"]), abs=1e-9)


def test_landscape_checkpoint_errors(tmp_path, capsys):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(build(MlpSpec((2, 8, 4))), a)
    save_checkpoint(build(MlpSpec((2, 6, 4))), b)
    cfg = write_config(
        tmp_path / "l.json",
        {"data": SMALL_BLOBS, "landscape": {"method": "mutual", "checkpoints": [str(a), str(b), str(a)]}},
    )
    code, _, err = run(capsys, "landscape", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 1 and "architectures" in err
    cfg = write_config(tmp_path / "l2.json", {"data": SMALL_BLOBS, "landscape": {"method": "mutual", "checkpoints": [str(a)]}})
    code, _, err = run(capsys, "landscape", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 1 and "3 checkpoint" in err
