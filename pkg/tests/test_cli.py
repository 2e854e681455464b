import numpy as np
import pytest
from click.testing import CliRunner

from bagan_gp import data, toydata
from bagan_gp.cli import main
from bagan_gp.networks import read_manifest


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Toy dataset container + run config shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    images, labels = toydata.make_similar_shapes_dataset(counts=(40, 10, 10, 20), seed=1)
    data.save_container(root / "dataset.npz", images, labels)
    return root


def write_config(workspace, path, extra="", out="out", init_mode="none",
                 train_extra="", eval_extra=""):
    path.write_text(f"""\
[dataset]
name = toy
class_names = a,b,c,d
source = {workspace / 'dataset.npz'}
height = 64
width = 64
channels = 1

[architecture]
latent_dim = 16
base_width = 8

[train]
epochs = 1
batch_size = 16
n_critic = 1
init_mode = {init_mode}
{train_extra}
[loss]
variant = original_gan

[eval]
extractor_epochs = 2
grid_rows = 2
samples_per_class = 8
{eval_extra}
[output]
dir = {workspace / out}
{extra}""")
    return path


@pytest.fixture(scope="module")
def config_file(workspace):
    return write_config(workspace, workspace / "run.ini")


def invoke(config, *args):
    return CliRunner().invoke(main, ["--config", str(config), *args])


class TestGlobalOptions:
    def test_missing_config_fails(self):
        result = CliRunner().invoke(main, ["prepare-data"])
        assert result.exit_code == 1
        assert "no --config" in result.output

    def test_nonexistent_config_fails(self, tmp_path):
        result = invoke(tmp_path / "absent.ini", "prepare-data")
        assert result.exit_code == 1
        assert "not found" in result.output

    def test_unknown_key_rejected(self, workspace, tmp_path):
        cfg = write_config(workspace, tmp_path / "bad.ini",
                           train_extra="warmup = 5\n")
        result = invoke(cfg, "prepare-data")
        assert result.exit_code == 1
        assert "warmup" in result.output

    def test_unknown_section_rejected(self, workspace, tmp_path):
        cfg = write_config(workspace, tmp_path / "bad.ini",
                           extra="\n[distillation]\nalpha = 1\n")
        result = invoke(cfg, "prepare-data")
        assert result.exit_code == 1
        assert "distillation" in result.output

    def test_out_override(self, workspace, config_file, tmp_path):
        result = CliRunner().invoke(main, ["--config", str(config_file),
                                           "--out", str(tmp_path / "o"),
                                           "prepare-data"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "o" / "dataset.npz").exists()


class TestPrepareData:
    def test_artifacts_and_summary(self, workspace, config_file):
        result = invoke(config_file, "prepare-data")
        assert result.exit_code == 0, result.output
        out = workspace / "out"
        assert (out / "config.echo").exists()
        assert (out / "dataset.npz").exists()
        summary = (out / "summary.tsv").read_text().strip().splitlines()
        assert summary[0] == "class\tname\tcount"
        assert summary[1] == "0\ta\t40"
        assert summary[4] == "3\td\t20"

    def test_determinism_byte_identical(self, workspace, tmp_path):
        cfg_a = write_config(workspace, tmp_path / "a.ini", out="det_a")
        cfg_b = write_config(workspace, tmp_path / "b.ini", out="det_b")
        assert invoke(cfg_a, "prepare-data").exit_code == 0
        assert invoke(cfg_b, "prepare-data").exit_code == 0
        assert ((workspace / "det_a" / "dataset.npz").read_bytes()
                == (workspace / "det_b" / "dataset.npz").read_bytes())

    def test_schedule_applied(self, workspace, tmp_path):
        sched = tmp_path / "sched.txt"
        data.save_schedule_file(sched, data.ImbalanceSchedule({0: 10, 1: 5, 2: 5, 3: 4},
                                                              seed=2))
        cfg = write_config(workspace, tmp_path / "s.ini", out="out_sched",
                           extra=f"\n[schedule]\nfile = {sched}\n")
        result = invoke(cfg, "prepare-data")
        assert result.exit_code == 0, result.output
        summary = (workspace / "out_sched" / "summary.tsv").read_text()
        assert "0\ta\t10" in summary
        assert "3\td\t4" in summary

    def test_missing_schedule_file(self, workspace, tmp_path):
        cfg = write_config(workspace, tmp_path / "m.ini", out="out_m",
                           extra=f"\n[schedule]\nfile = {tmp_path / 'no.txt'}\n")
        result = invoke(cfg, "prepare-data")
        assert result.exit_code == 1


class TestPretrainAe:
    def test_supervised_checkpoint(self, workspace, config_file):
        result = invoke(config_file, "pretrain-ae", "--mode", "supervised")
        assert result.exit_code == 0, result.output
        stage1 = workspace / "out" / "stage1"
        manifest = read_manifest(stage1)
        assert manifest["tag"] == "ae_supervised"
        assert manifest["num_classes"] == "4"
        assert (stage1 / "embedding.npz").exists()
        assert (stage1 / "pretrain_log.csv").read_text().startswith("epoch,mse")

    def test_unsupervised_checkpoint(self, workspace, tmp_path):
        cfg = write_config(workspace, tmp_path / "u.ini", out="out_unsup")
        result = invoke(cfg, "pretrain-ae", "--mode", "unsupervised")
        assert result.exit_code == 0, result.output
        stage1 = workspace / "out_unsup" / "stage1"
        assert read_manifest(stage1)["tag"] == "ae_unsupervised"
        assert not (stage1 / "embedding.npz").exists()

    def test_zero_epochs_rejected(self, config_file):
        result = invoke(config_file, "pretrain-ae", "--epochs", "0")
        assert result.exit_code == 1
        assert "epochs" in result.output


class TestTrainGan:
    def test_run_and_config_echo(self, workspace, tmp_path):
        cfg = write_config(workspace, tmp_path / "t.ini", out="out_gan")
        result = invoke(cfg, "train-gan", "--variant", "bagan_gp", "--version", "v3")
        assert result.exit_code == 0, result.output
        out = workspace / "out_gan"
        echo = (out / "config.echo").read_text()
        assert "variant = bagan_gp" in echo
        assert "version = v3" in echo
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoints" / "epoch_1").is_dir()

    def test_invalid_variant_rejected(self, config_file):
        result = invoke(config_file, "train-gan", "--variant", "maxgan")
        assert result.exit_code != 0

    def test_default_stage1_used_when_present(self, workspace, tmp_path):
        cfg = write_config(workspace, tmp_path / "d.ini", out="out_init",
                           init_mode="both")
        assert invoke(cfg, "pretrain-ae").exit_code == 0
        result = invoke(cfg, "train-gan")
        assert result.exit_code == 0, result.output


@pytest.fixture(scope="module")
def trained_checkpoint(workspace, config_file):
    result = invoke(config_file, "train-gan")
    assert result.exit_code == 0, result.output
    return workspace / "out" / "checkpoints" / "epoch_1"


class TestGenerate:
    def test_writes_images_and_manifest(self, workspace, config_file, trained_checkpoint):
        result = invoke(config_file, "generate", str(trained_checkpoint),
                        "--class", "2", "-n", "3", "--seed", "5")
        assert result.exit_code == 0, result.output
        out = workspace / "out"
        for i in range(3):
            assert (out / f"gen_c2_{i:05d}.png").exists()
        manifest = (out / "generate_manifest.txt").read_text()
        assert "seed = 5" in manifest
        assert manifest.count("z_") == 3

    def test_same_seed_same_bytes(self, workspace, tmp_path, config_file,
                                  trained_checkpoint):
        cfg_a = write_config(workspace, tmp_path / "a.ini", out="gen_a")
        cfg_b = write_config(workspace, tmp_path / "b.ini", out="gen_b")
        for cfg in (cfg_a, cfg_b):
            assert invoke(cfg, "generate", str(trained_checkpoint),
                          "--class", "0", "--seed", "9").exit_code == 0
        assert ((workspace / "gen_a" / "gen_c0_00000.png").read_bytes()
                == (workspace / "gen_b" / "gen_c0_00000.png").read_bytes())

    def test_out_of_range_class(self, config_file, trained_checkpoint):
        result = invoke(config_file, "generate", str(trained_checkpoint),
                        "--class", "7")
        assert result.exit_code == 1
        assert "class" in result.output


class TestEvaluate:
    def test_artifacts(self, workspace, config_file, trained_checkpoint):
        result = invoke(config_file, "evaluate", str(trained_checkpoint))
        assert result.exit_code == 0, result.output
        out = workspace / "out"
        fid_lines = (out / "fid.csv").read_text().strip().splitlines()
        assert fid_lines[0] == "class,fid,n_real,n_gen,extractor_id"
        assert len(fid_lines) == 5
        assert (out / "grid.png").exists()
        assert (out / "grid.txt").exists()
        proj = (out / "feature_projection.csv").read_text().strip().splitlines()
        assert len(proj) == 1 + 80 + 4 * 64  # header + reals + generated

    def test_pretrained_extractor_missing_weights(self, workspace, tmp_path,
                                                  trained_checkpoint):
        cfg = write_config(workspace, tmp_path / "p.ini", out="out_pre",
                           eval_extra="extractor = pretrained\n")
        result = invoke(cfg, "evaluate", str(trained_checkpoint))
        assert result.exit_code == 1
        assert "extractor" in result.output.lower()


class TestPlotLatents:
    def test_latents_csv_and_silhouette(self, workspace, config_file):
        assert invoke(config_file, "pretrain-ae").exit_code == 0
        result = invoke(config_file, "plot-latents", str(workspace / "out" / "stage1"))
        assert result.exit_code == 0, result.output
        assert "silhouette = " in result.output
        rows = (workspace / "out" / "latents.csv").read_text().strip().splitlines()
        assert rows[0] == "x,y,class"
        assert len(rows) == 1 + 80
