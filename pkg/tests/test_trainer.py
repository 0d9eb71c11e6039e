import numpy as np
import pytest
import torch

from cartoonforge.backbones import load_toy_backend, parameter_checksum
from cartoonforge.core import LossWeights
from cartoonforge.dataset import forge
from cartoonforge.errors import IoError
from cartoonforge.losses import read_reports
from cartoonforge.trainer import (LatentDiscriminator, TrainConfig, Trainer,
                                  checkpoint_digest, iteration_mode, train)

HIDDEN = (64, 64)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    handles = load_toy_backend()
    root = tmp_path_factory.mktemp("corpus")
    manifest = forge(12, seed=0, handles=handles, out_dir=root)
    return handles, manifest


def quick_cfg(**kw):
    defaults = dict(learning_rate=1e-3, batch_size=2, max_iterations=6, seed=0,
                    mapper_hidden=HIDDEN, checkpoint_every=100)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestIterationMode:
    def test_every_third_iteration_reconstructs(self):
        assert iteration_mode(3, 3) == "reconstruct"
        assert iteration_mode(1, 3) == "disentangle"
        assert iteration_mode(2, 3) == "disentangle"
        assert iteration_mode(300, 3) == "reconstruct"

    def test_window_counts(self):
        modes = [iteration_mode(i, 3) for i in range(1, 301)]
        assert modes.count("reconstruct") == 100

    def test_schedule_window_invariant(self):
        for period in (1, 2, 3, 5):
            for start in (1, 7):
                for n in (10, 31):
                    count = sum(iteration_mode(i, period) == "reconstruct"
                                for i in range(start, start + n))
                    assert abs(count - n // period) <= 1


class TestTrainStep:
    def test_disentangle_rows_have_zero_rec(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(), manifest, handles, tmp_path)
        report = trainer.step(1)
        assert report.mode == "disentangle"
        assert report.l_rec == 0.0

    def test_reconstruct_rows_have_positive_rec(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(), manifest, handles, tmp_path)
        report = trainer.step(3)
        assert report.mode == "reconstruct"
        assert report.l_rec > 0.0

    def test_weighted_sum_identity(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(), manifest, handles, tmp_path)
        for i in (1, 2, 3):
            report = trainer.step(i)
            assert abs(report.l_total - report.weighted_sum()) < 1e-9

    def test_frozen_backbones_unchanged_by_steps(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(), manifest, handles, tmp_path)
        for i in range(1, 5):
            trainer.step(i)
        assert trainer.frozen_backbones_intact()

    def test_zero_learning_rate_leaves_mapper_unchanged(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(learning_rate=0.0), manifest, handles, tmp_path)
        before = parameter_checksum(trainer.mapper)
        trainer.step(1)
        assert parameter_checksum(trainer.mapper) == before

    def test_nonzero_learning_rate_changes_mapper(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(), manifest, handles, tmp_path)
        before = parameter_checksum(trainer.mapper)
        trainer.step(1)
        assert parameter_checksum(trainer.mapper) != before


class TestRun:
    def test_zero_iterations_gives_initial_checkpoint_and_empty_log(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(max_iterations=0), manifest, handles, tmp_path)
        trainer.run()
        assert (tmp_path / "checkpoints" / "ckpt_000000.pt").exists()
        assert read_reports(tmp_path / "losses.csv") == []

    def test_loss_csv_rows_and_modes(self, corpus, tmp_path):
        handles, manifest = corpus
        train(quick_cfg(max_iterations=9), manifest, handles, tmp_path)
        reports = read_reports(tmp_path / "losses.csv")
        assert [r.iteration for r in reports] == list(range(1, 10))
        assert sum(r.mode == "reconstruct" for r in reports) == 3
        assert all(r.l_rec == 0.0 for r in reports if r.mode == "disentangle")

    def test_two_identical_runs_produce_identical_csvs(self, corpus, tmp_path):
        _, manifest = corpus
        train(quick_cfg(), manifest, load_toy_backend(), tmp_path / "a")
        train(quick_cfg(), manifest, load_toy_backend(), tmp_path / "b")
        a = (tmp_path / "a" / "losses.csv").read_text()
        b = (tmp_path / "b" / "losses.csv").read_text()
        assert a == b

    def test_landmark_dropout_zeroes_weight_not_measurement(self, corpus, tmp_path):
        handles, manifest = corpus
        train(quick_cfg(max_iterations=8, lnd_dropout_after=4), manifest,
              load_toy_backend(), tmp_path)
        reports = read_reports(tmp_path / "losses.csv")
        for r in reports:
            if r.iteration <= 4:
                assert r.lambda_lnd == 1.0
            else:
                assert r.lambda_lnd == 0.0
                assert r.l_lnd > 0.0  # still measured and logged

    def test_resume_reproduces_uninterrupted_checkpoint(self, corpus, tmp_path):
        _, manifest = corpus
        cfg = quick_cfg(max_iterations=10, checkpoint_every=5)
        final_full = train(cfg, manifest, load_toy_backend(), tmp_path / "full")

        train(quick_cfg(max_iterations=5, checkpoint_every=5), manifest,
              load_toy_backend(), tmp_path / "half")
        mid = tmp_path / "half" / "checkpoints" / "ckpt_000005.pt"
        final_resumed = Trainer(cfg, manifest, load_toy_backend(), tmp_path / "resumed"
                                ).run(resume=mid)
        assert checkpoint_digest(final_full) == checkpoint_digest(final_resumed)
        full_csv = (tmp_path / "full" / "losses.csv").read_text()
        resumed_csv = (tmp_path / "resumed" / "losses.csv").read_text()
        assert full_csv.splitlines()[6:] == resumed_csv.splitlines()[1:]

    def test_resume_from_missing_checkpoint(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(), manifest, handles, tmp_path)
        with pytest.raises(IoError):
            trainer.run(resume=tmp_path / "nope.pt")


class TestAdversarialPath:
    def test_chance_level_discriminator_loss(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(adversarial=True,
                                    weights=LossWeights(lambda_adv=0.1, gamma_r1=0.0)),
                          manifest, handles, tmp_path)
        # force chance level: constant-output discriminator at 0.5
        with torch.no_grad():
            for layer in trainer.discriminator.layers:
                layer.weight.zero_()
                layer.bias.zero_()
        w = torch.randn(4, 512, generator=torch.Generator().manual_seed(0))
        l_adv_d = trainer.adversarial_step(w, w + 1.0)
        assert abs(l_adv_d - 2 * np.log(2)) < 1e-6

    def test_adversarial_columns_logged(self, corpus, tmp_path):
        handles, manifest = corpus
        train(quick_cfg(max_iterations=4, adversarial=True,
                        weights=LossWeights(lambda_adv=0.1)),
              manifest, load_toy_backend(), tmp_path)
        reports = read_reports(tmp_path / "losses.csv")
        assert all(r.l_adv_g is not None and r.l_adv_d is not None for r in reports)
        assert all(abs(r.l_total - r.weighted_sum()) < 1e-9 for r in reports)

    def test_discriminator_learns_above_chance(self, corpus, tmp_path):
        handles, manifest = corpus
        trainer = Trainer(quick_cfg(learning_rate=1e-3, adversarial=True,
                                    weights=LossWeights(lambda_adv=0.0)),
                          manifest, handles, tmp_path)
        gen = torch.Generator().manual_seed(1)
        real = torch.randn(512, 512, generator=gen) + 0.5
        fake = torch.randn(512, 512, generator=gen) - 0.5
        for i in range(200):
            sl = slice((i * 16) % 256, (i * 16) % 256 + 16)
            trainer.adversarial_step(fake[sl], real[sl])
        with torch.no_grad():
            acc_real = (trainer.discriminator(real[256:]) > 0.5).float().mean()
            acc_fake = (trainer.discriminator(fake[256:]) < 0.5).float().mean()
        assert (acc_real + acc_fake) / 2 > 0.5

    def test_discriminator_architecture(self):
        d = LatentDiscriminator(seed=0)
        assert len(d.layers) == 3
        out = d(torch.randn(5, 512, generator=torch.Generator().manual_seed(2)))
        assert out.shape == (5,)
        assert (out > 0).all() and (out < 1).all()
