"""End-to-end tests of the command line interface.

Commands run in-process via main(argv) so exit codes and output can be
asserted directly.  One tiny 3-step training run is shared by the train
and synth tests through a session-scoped fixture.
"""

import json
import shutil

import numpy as np
import pytest

from wolonet.cli import main
from wolonet.dsp import (MelConfig, Waveform, load_wav, log_mel, read_mel,
                         save_wav, write_mel)
from wolonet.evaluate import madds_resblock, madds_wolo

RATE = 22050


def tone(seconds=0.25, hz=440.0, rate=RATE, amp=0.3):
    t = np.arange(int(rate * seconds), dtype=np.float64) / rate
    return Waveform(amp * np.sin(2 * np.pi * hz * t), rate)


TRAIN_CONFIG = {
    "train": {"batch_size": 2, "segment_samples": 1024, "total_steps": 3,
              "lr_halve_every": 1000, "seed": 0, "checkpoint_every": 3,
              "validate_every": 3, "n_validation_clips": 2,
              "disc_channel_mult": 0.125},
    "generator": {"base_channels": 16, "upsample_strides": [8, 8, 2, 2],
                  "wolo_kernel": 3},
}


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory):
    """Run `train --synthetic` for 3 steps; yields (out_dir, config_path)."""
    root = tmp_path_factory.mktemp("cli_train")
    config = root / "config.json"
    config.write_text(json.dumps(TRAIN_CONFIG))
    out = root / "run"
    code = main(["train", "--config", str(config), "--synthetic", "4",
                 "--out", str(out), "--print-every", "1"])
    assert code == 0
    return out, config


class TestExitCodes:
    def test_no_command_is_usage_error(self):
        assert main([]) == 1

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag_is_usage_error(self):
        assert main(["extract-mel", "--in", "x.wav"]) == 1

    def test_unknown_flag_is_usage_error(self):
        assert main(["verify-madds", "--bogus", "1"]) == 1

    def test_bad_choice_is_usage_error(self):
        assert main(["gradcheck", "--module", "nope"]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "extract-mel" in capsys.readouterr().out

    def test_subcommand_help_exits_zero(self, capsys):
        assert main(["train", "--help"]) == 0
        assert "--synthetic" in capsys.readouterr().out

    def test_missing_input_file_is_runtime_error(self, tmp_path, capsys):
        code = main(["extract-mel", "--in", str(tmp_path / "absent.wav"),
                     "--out", str(tmp_path / "o.mel")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_assertion_maps_to_exit_three(self, monkeypatch, capsys):
        import wolonet.cli as cli_mod

        def boom(c, k):
            raise AssertionError("instrumented count out of band")

        monkeypatch.setattr(cli_mod, "empirical_madds", boom)
        assert main(["verify-madds"]) == 3
        assert "FAIL:" in capsys.readouterr().err

    def test_tolerance_miss_maps_to_exit_three(self, monkeypatch, capsys):
        import wolonet.cli as cli_mod
        monkeypatch.setattr(cli_mod, "gradcheck_suite",
                            lambda module, seed=0: {"fake": 1.0})
        assert main(["gradcheck"]) == 3
        assert "tolerance exceeded" in capsys.readouterr().err


class TestVerifyMadds:
    def test_reference_pair(self, capsys):
        assert main(["verify-madds"]) == 0
        out = capsys.readouterr().out
        assert "wolo_madds 293376" in out
        assert "resblock_madds 1310720" in out
        assert "ratio 4.46771" in out
        assert "instrumented_count" in out
        assert "reference parity (C=512, K=5): ok" in out

    def test_small_pair_skips_parity_line(self, capsys):
        assert main(["verify-madds", "--C", "8", "--K", "3"]) == 0
        out = capsys.readouterr().out
        assert f"wolo_madds {madds_wolo(8, 3)}" in out
        assert f"resblock_madds {madds_resblock(8, 3)}" in out
        assert "reference parity" not in out


class TestOracleCheck:
    def test_few_trials(self, capsys):
        assert main(["oracle-check", "--trials", "5"]) == 0
        out = capsys.readouterr().out
        assert "over 5 instances" in out
        worst = float(out.split()[4])
        assert worst < 1e-9


class TestGradcheck:
    def test_losses_suite(self, capsys):
        assert main(["gradcheck", "--module", "losses"]) == 0
        out = capsys.readouterr().out
        for name in ("adv_d_loss", "adv_g_loss", "feature_matching_loss",
                     "mel_loss", "worst"):
            assert name in out


class TestExtractMel:
    def test_writes_mel_file_matching_direct_analysis(self, tmp_path, capsys):
        wav_path = tmp_path / "in.wav"
        mel_path = tmp_path / "out.mel"
        save_wav(wav_path, tone())
        assert main(["extract-mel", "--in", str(wav_path),
                     "--out", str(mel_path)]) == 0

        reread = load_wav(wav_path)
        expect = log_mel(reread, MelConfig()).data.astype(np.float32)
        got = read_mel(mel_path)
        assert got.shape == expect.shape == (80, -(-len(reread) // 256))
        assert np.array_equal(got.astype(np.float32), expect)

        line = capsys.readouterr().out
        assert (f"wrote {mel_path}: 80 mels x {expect.shape[1]} frames "
                f"from {len(reread)} samples at {RATE} Hz") in line

    def test_config_overrides_analysis(self, tmp_path):
        wav_path = tmp_path / "in.wav"
        save_wav(wav_path, tone())
        config = tmp_path / "mel.json"
        config.write_text(json.dumps({"mel": {"n_mels": 32}}))
        mel_path = tmp_path / "out.mel"
        assert main(["extract-mel", "--in", str(wav_path), "--out",
                     str(mel_path), "--config", str(config)]) == 0
        assert read_mel(mel_path).shape[0] == 32


class TestConfigErrors:
    """Bad --config files exit 2 with a diagnostic on stderr."""

    @pytest.fixture()
    def wav_path(self, tmp_path):
        path = tmp_path / "in.wav"
        save_wav(path, tone(seconds=0.05))
        return path

    def run_with_config(self, tmp_path, wav_path, text, capsys):
        config = tmp_path / "bad.json"
        config.write_text(text)
        code = main(["extract-mel", "--in", str(wav_path),
                     "--out", str(tmp_path / "o.mel"),
                     "--config", str(config)])
        return code, capsys.readouterr().err

    def test_invalid_json(self, tmp_path, wav_path, capsys):
        code, err = self.run_with_config(tmp_path, wav_path, "{nope", capsys)
        assert code == 2 and err.startswith("error:")

    def test_root_not_object(self, tmp_path, wav_path, capsys):
        code, err = self.run_with_config(tmp_path, wav_path, "[1, 2]", capsys)
        assert code == 2 and "JSON object" in err

    def test_unknown_section(self, tmp_path, wav_path, capsys):
        code, err = self.run_with_config(
            tmp_path, wav_path, '{"optimizer": {}}', capsys)
        assert code == 2 and "unknown config sections" in err

    def test_unknown_key_in_section(self, tmp_path, wav_path, capsys):
        code, err = self.run_with_config(
            tmp_path, wav_path, '{"train": {"warp_factor": 1}}', capsys)
        assert code == 2 and "unknown keys" in err and "warp_factor" in err

    def test_section_not_object(self, tmp_path, wav_path, capsys):
        code, err = self.run_with_config(
            tmp_path, wav_path, '{"mel": 5}', capsys)
        assert code == 2 and "must be an object" in err

    def test_invalid_field_value(self, tmp_path, wav_path, capsys):
        code, err = self.run_with_config(
            tmp_path, wav_path, '{"train": {"batch_size": 0}}', capsys)
        assert code == 2 and err.startswith("error:")

    def test_missing_config_file(self, tmp_path, wav_path, capsys):
        code = main(["extract-mel", "--in", str(wav_path),
                     "--out", str(tmp_path / "o.mel"),
                     "--config", str(tmp_path / "absent.json")])
        assert code == 2


class TestTrain:
    def test_data_and_synthetic_are_mutually_exclusive(self, tmp_path):
        assert main(["train", "--data", "d", "--synthetic", "4",
                     "--out", str(tmp_path / "o")]) == 1

    def test_one_clip_source_is_required(self, tmp_path):
        assert main(["train", "--out", str(tmp_path / "o")]) == 1

    def test_synthetic_run_products(self, trained_run):
        out, _ = trained_run
        names = {p.name for p in out.iterdir()}
        assert names == {"train_log.csv", "validation.csv", "config.json",
                         "checkpoint_000003.ckpt"}
        rows = out.joinpath("train_log.csv").read_text().strip().splitlines()
        assert rows[0] == "step,loss_d,loss_g,loss_mel,loss_fm,lr"
        assert len(rows) == 1 + 3
        assert rows[1].startswith("1,") and rows[3].startswith("3,")
        val = out.joinpath("validation.csv").read_text().strip().splitlines()
        assert val[0] == "step,val_mel_l1"
        assert val[1].startswith("3,")
        sidecar = json.loads(out.joinpath("config.json").read_text())
        assert sidecar["generator"]["base_channels"] == 16

    def test_progress_and_summary_lines(self, trained_run, capsys):
        # The fixture already consumed its own stdout; run again cheaply by
        # resuming from the final checkpoint with one extra step.
        out, config = trained_run
        copy = out.parent / "resume_copy"
        if copy.exists():
            shutil.rmtree(copy)
        shutil.copytree(out, copy)
        longer = dict(TRAIN_CONFIG)
        longer["train"] = dict(TRAIN_CONFIG["train"], total_steps=4,
                               checkpoint_every=4, validate_every=4)
        config4 = out.parent / "config4.json"
        config4.write_text(json.dumps(longer))
        code = main(["train", "--config", str(config4), "--synthetic", "4",
                     "--out", str(copy), "--print-every", "1",
                     "--resume", str(copy / "checkpoint_000003.ckpt")])
        assert code == 0
        text = capsys.readouterr().out
        assert "step 4 " in text
        assert "finished at step 4" in text
        assert "generator params:" in text
        rows = copy.joinpath("train_log.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 4 and rows[4].startswith("4,")
        assert (copy / "checkpoint_000004.ckpt").exists()

    def test_wav_directory_source(self, tmp_path, capsys):
        data = tmp_path / "clips"
        data.mkdir()
        rng = np.random.default_rng(3)
        for i in range(2):
            save_wav(data / f"c{i}.wav",
                     Waveform(0.2 * rng.normal(size=8192), RATE))
        config = tmp_path / "config.json"
        quick = dict(TRAIN_CONFIG)
        quick["train"] = dict(TRAIN_CONFIG["train"], total_steps=1,
                              checkpoint_every=1, validate_every=1,
                              n_validation_clips=1)
        config.write_text(json.dumps(quick))
        out = tmp_path / "run"
        assert main(["train", "--config", str(config), "--data", str(data),
                     "--out", str(out)]) == 0
        assert (out / "checkpoint_000001.ckpt").exists()

    def test_writes_stay_under_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = tmp_path / "config.json"
        quick = dict(TRAIN_CONFIG)
        quick["train"] = dict(TRAIN_CONFIG["train"], total_steps=1,
                              checkpoint_every=1, validate_every=1)
        config.write_text(json.dumps(quick))
        before = {p.name for p in tmp_path.iterdir()}
        assert main(["train", "--config", str(config), "--synthetic", "2",
                     "--out", "run"]) == 0
        after = {p.name for p in tmp_path.iterdir()}
        assert after - before == {"run"}


class TestSynth:
    def test_round_trip_from_checkpoint(self, trained_run, tmp_path, capsys):
        out, _ = trained_run
        mel_path = tmp_path / "in.mel"
        rng = np.random.default_rng(0)
        write_mel(mel_path, rng.normal(size=(80, 4)))
        wav_path = tmp_path / "synth.wav"
        assert main(["synth", "--ckpt", str(out / "checkpoint_000003.ckpt"),
                     "--mel", str(mel_path), "--out", str(wav_path)]) == 0
        wav = load_wav(wav_path)
        assert len(wav) == 4 * 256
        assert wav.sample_rate == RATE
        line = capsys.readouterr().out
        assert f"wrote {wav_path}: 1024 samples (4 frames x hop 256)" in line

    def test_explicit_config_flag(self, trained_run, tmp_path):
        out, config = trained_run
        mel_path = tmp_path / "in.mel"
        write_mel(mel_path, np.zeros((80, 2)))
        wav_path = tmp_path / "synth.wav"
        assert main(["synth", "--ckpt", str(out / "checkpoint_000003.ckpt"),
                     "--mel", str(mel_path), "--out", str(wav_path),
                     "--config", str(config)]) == 0
        assert len(load_wav(wav_path)) == 2 * 256

    def test_checkpoint_without_sidecar_needs_config(self, trained_run,
                                                     tmp_path, capsys):
        out, _ = trained_run
        orphan = tmp_path / "orphan.ckpt"
        shutil.copy(out / "checkpoint_000003.ckpt", orphan)
        mel_path = tmp_path / "in.mel"
        write_mel(mel_path, np.zeros((80, 2)))
        code = main(["synth", "--ckpt", str(orphan), "--mel", str(mel_path),
                     "--out", str(tmp_path / "o.wav")])
        assert code == 2
        assert "config.json" in capsys.readouterr().err

    def test_mismatched_config_is_rejected(self, trained_run, tmp_path,
                                           capsys):
        out, _ = trained_run
        wide = tmp_path / "wide.json"
        wide.write_text(json.dumps({"generator": {
            "base_channels": 32, "upsample_strides": [8, 8, 2, 2],
            "wolo_kernel": 3}}))
        mel_path = tmp_path / "in.mel"
        write_mel(mel_path, np.zeros((80, 2)))
        code = main(["synth", "--ckpt", str(out / "checkpoint_000003.ckpt"),
                     "--mel", str(mel_path), "--out", str(tmp_path / "o.wav"),
                     "--config", str(wide)])
        assert code == 2
        assert "shape" in capsys.readouterr().err

    def test_missing_mel_file(self, trained_run, tmp_path):
        out, _ = trained_run
        code = main(["synth", "--ckpt", str(out / "checkpoint_000003.ckpt"),
                     "--mel", str(tmp_path / "absent.mel"),
                     "--out", str(tmp_path / "o.wav")])
        assert code == 2


class TestMcd:
    def test_identical_files_score_zero(self, tmp_path, capsys):
        path = tmp_path / "a.wav"
        save_wav(path, tone())
        assert main(["mcd", "--ref", str(path), "--syn", str(path)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("mcd_db ")
        assert float(out.split()[1]) == 0.0

    def test_different_signals_score_positive(self, tmp_path, capsys):
        a, b = tmp_path / "a.wav", tmp_path / "b.wav"
        save_wav(a, tone(hz=440.0))
        save_wav(b, tone(hz=880.0))
        assert main(["mcd", "--ref", str(a), "--syn", str(b)]) == 0
        assert float(capsys.readouterr().out.split()[1]) > 0.1


class TestAblate:
    def test_two_step_smoke(self, tmp_path, capsys):
        out = tmp_path / "ablate"
        code = main(["ablate", "--mode", "sine", "--steps", "2",
                     "--out", str(out), "--clips", "2",
                     "--batch-size", "2", "--segment", "2048"])
        assert code == 0
        text = capsys.readouterr().out
        assert "mode sine: max |kernel| - 1" in text
        assert "mode sine: 2 steps completed, kernels ok" in text
        assert (out / "sine" / "train_log.csv").exists()
