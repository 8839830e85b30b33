"""Training orchestration: selection modes, traces, artifacts, determinism."""

import numpy as np
import pytest

from dualdenoise.curriculum import CompetenceSchedule, competence, similarity_difficulty
from dualdenoise.errors import ContractError
from dualdenoise.model import Model, ModelConfig, build_vocab
from dualdenoise.pipeline import (RunConfig, compute_epoch_difficulties,
                                  read_trace_csv, run_alpha_ablation,
                                  run_config_from_dict, run_config_to_dict,
                                  run_training, write_ablation_csv,
                                  write_run_outputs, write_trace_csv,
                                  ALPHA_REFERENCE_CLAIM)
from dualdenoise.synth import SynthConfig, generate_dataset, split_dataset


def tiny_world(n_samples=24, noise=0.25, seed=9):
    scfg = SynthConfig(n_samples=n_samples, tokens_min=4, tokens_max=6,
                       image_blocks=2, image_feat_dim=4, clip_dim=6,
                       vocab_size=16, aspects_min=1, aspects_max=1,
                       sentence_noise_rate=noise, seed=seed)
    ds, man = generate_dataset(scfg)
    return split_dataset(ds, man)


def tiny_config(**kw):
    model_kw = dict(hidden_size=8, epochs=3, learning_rate=0.01, batch_size=4,
                    gcn_depth=1, seed=0)
    model_kw.update(kw.pop("model_kw", {}))
    defaults = dict(model=ModelConfig(**model_kw),
                    schedule=CompetenceSchedule(0.1, 2))
    defaults.update(kw)
    return RunConfig(**defaults)


class TestEpochDifficulties:
    def test_alpha_zero_composite_equals_static(self):
        splits = tiny_world()
        train = splits["train"]
        model = Model(ModelConfig(hidden_size=8, epochs=1, seed=0),
                      build_vocab(train), 4)
        d_s = similarity_difficulty([s.text_embed for s in train],
                                    [s.image_embed for s in train])
        records = compute_epoch_difficulties(model, train, d_s, alpha=0.0)
        for rec, ds_val in zip(records, d_s):
            assert rec.d_c == pytest.approx(ds_val, abs=1e-15)

    def test_two_calls_identical(self):
        splits = tiny_world()
        train = splits["train"][:6]
        model = Model(ModelConfig(hidden_size=8, epochs=1, seed=0),
                      build_vocab(train), 4)
        d_s = [0.0] * len(train)
        a = compute_epoch_difficulties(model, train, d_s, 0.8)
        b = compute_epoch_difficulties(model, train, d_s, 0.8)
        assert a == b

    def test_dl_argmax_matches_manual_losses(self):
        splits = tiny_world()
        train = splits["train"][:8]
        model = Model(ModelConfig(hidden_size=8, epochs=1, seed=0),
                      build_vocab(train), 4)
        manual = [model.sequence_loss(s).item() for s in train]
        records = compute_epoch_difficulties(model, train, [0.0] * len(train), 1.0)
        assert int(np.argmax([r.d_l for r in records])) == int(np.argmax(manual))
        assert records[int(np.argmax(manual))].d_l == pytest.approx(1.0)


class TestRunTraining:
    def test_trace_bookkeeping(self):
        splits = tiny_world()
        cfg = tiny_config()
        result = run_training(cfg, splits["train"], splits["dev"], splits["test"])
        assert len(result.traces) == cfg.model.epochs
        sched = cfg.resolved_schedule()
        for t, trace in enumerate(result.traces):
            assert trace.epoch == t
            assert trace.p == competence(t, sched)

    def test_mode_none_selects_everything(self):
        splits = tiny_world()
        cfg = tiny_config(curriculum="none")
        result = run_training(cfg, splits["train"], splits["dev"])
        assert all(t.selected == len(splits["train"]) for t in result.traces)

    def test_epoch_zero_selection_definition(self):
        splits = tiny_world()
        cfg = tiny_config(curriculum="hcd", alpha=0.8, min_selection=2)
        result = run_training(cfg, splits["train"], splits["dev"])
        trace0 = result.traces[0]
        assert trace0.p == pytest.approx(0.1)
        assert trace0.selected >= 2

    def test_curriculum_prefers_clean_early(self):
        splits = tiny_world(n_samples=40, noise=0.5, seed=12)
        train = splits["train"]
        d_s = similarity_difficulty([s.text_embed for s in train],
                                    [s.image_embed for s in train])
        cfg = tiny_config(curriculum="hcd", alpha=0.0,
                          schedule=CompetenceSchedule(0.2, 8),
                          model_kw=dict(epochs=2))
        result = run_training(cfg, train, splits["dev"])
        assert result.traces[0].mean_ds_selected < float(np.mean(d_s))

    def test_antihcd_prefers_hard_early(self):
        splits = tiny_world(n_samples=40, noise=0.5, seed=12)
        train = splits["train"]
        d_s = similarity_difficulty([s.text_embed for s in train],
                                    [s.image_embed for s in train])
        cfg = tiny_config(curriculum="antihcd", alpha=0.0,
                          schedule=CompetenceSchedule(0.2, 8),
                          model_kw=dict(epochs=2))
        result = run_training(cfg, train, splits["dev"])
        assert result.traces[0].mean_ds_selected > float(np.mean(d_s))

    def test_static_and_dynamic_modes_run(self):
        splits = tiny_world()
        for mode in ("static-d_s-only", "dynamic-d_l-only"):
            cfg = tiny_config(curriculum=mode, model_kw=dict(epochs=2))
            result = run_training(cfg, splits["train"], splits["dev"])
            assert len(result.traces) == 2

    def test_aed_bypass_trains_and_evaluates(self):
        splits = tiny_world()
        cfg = tiny_config(model_kw=dict(aed_bypass=True, fusion_alpha_1=1.0,
                                        fusion_alpha_2=0.0, epochs=2))
        result = run_training(cfg, splits["train"], splits["dev"], splits["test"])
        assert np.isfinite(result.traces[-1].train_loss)
        assert result.metric("dev", "JMASA")["f1"] >= 0.0

    def test_empty_train_rejected(self):
        with pytest.raises(ContractError, match="empty"):
            run_training(tiny_config(), [], [], [])

    def test_metrics_objects_per_task_per_split(self):
        splits = tiny_world()
        cfg = tiny_config(model_kw=dict(epochs=1))
        result = run_training(cfg, splits["train"], splits["dev"], splits["test"])
        keys = {(m["split"], m["task"]) for m in result.metrics}
        assert keys == {(s, t) for s in ("dev", "test")
                        for t in ("JMASA", "MATE", "MASC")}

    def test_reproducible_end_to_end(self, tmp_path):
        splits = tiny_world()
        cfg = tiny_config(model_kw=dict(epochs=2))
        r1 = run_training(cfg, splits["train"], splits["dev"], splits["test"])
        r2 = run_training(cfg, splits["train"], splits["dev"], splits["test"])
        p1 = write_run_outputs(r1, tmp_path / "a")
        p2 = write_run_outputs(r2, tmp_path / "b")
        for key in ("trace", "metrics", "params"):
            assert p1[key].read_bytes() == p2[key].read_bytes(), key


class TestTraceCsv:
    def test_column_order_and_round_trip(self, tmp_path):
        splits = tiny_world()
        cfg = tiny_config(model_kw=dict(epochs=2))
        result = run_training(cfg, splits["train"], splits["dev"])
        path = tmp_path / "trace.csv"
        write_trace_csv(result.traces, path)
        header = path.read_text().splitlines()[0]
        assert header == "epoch,p,selected,mean_ds_selected,mean_dc_selected,train_loss,dev_f1"
        assert read_trace_csv(path) == result.traces

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("epoch,p\n")
        with pytest.raises(ContractError, match="header"):
            read_trace_csv(path)


class TestAlphaAblation:
    def test_grid_shape_and_alpha_echo(self, tmp_path):
        splits = tiny_world()
        cfg = tiny_config(model_kw=dict(epochs=1))
        alphas = [0.0, 0.8, 1.0]
        seeds = [0, 1]
        rows = run_alpha_ablation(cfg, alphas, seeds, splits["train"], splits["dev"])
        assert len(rows) == len(alphas) * len(seeds)
        assert [r[0] for r in rows] == [a for a in alphas for _ in seeds]
        path = tmp_path / "grid.csv"
        write_ablation_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("#")
        assert 'achieves the highest F1-score of 67.1' in lines[0]
        assert lines[1] == "alpha,seed,dev_f1"
        assert len(lines) == 2 + len(rows)

    def test_reference_claim_never_asserted(self):
        # the claim is documentation: no ablation row is compared against it
        assert "67.1" in ALPHA_REFERENCE_CLAIM

    def test_alpha_range_validated(self):
        splits = tiny_world()
        with pytest.raises(ContractError):
            run_alpha_ablation(tiny_config(), [1.2], [0], splits["train"],
                               splits["dev"])


class TestRunConfigParsing:
    def test_round_trip_through_dict(self):
        cfg = tiny_config(alpha=0.6, curriculum="antihcd", min_selection=3)
        raw = run_config_to_dict(cfg)
        back = run_config_from_dict(raw)
        assert run_config_to_dict(back) == raw

    def test_defaults(self):
        cfg = run_config_from_dict({"model": {"epochs": 10}})
        sched = cfg.resolved_schedule()
        assert sched.T == 5
        assert sched.lambda_init == 0.1
        assert cfg.curriculum == "hcd"
        assert cfg.alpha == 0.8

    def test_unknown_mode_rejected(self):
        with pytest.raises(ContractError, match="unknown curriculum"):
            run_config_from_dict({"curriculum": "sorted"})


class TestNoiseFlagBoundary:
    def test_model_inputs_ignore_noise_flag(self):
        # flipping the ground-truth flag must not change any model output
        splits = tiny_world()
        train = splits["train"]
        model = Model(ModelConfig(hidden_size=8, epochs=1, seed=0),
                      build_vocab(train), 4)
        s = train[0]
        loss_before = model.sequence_loss(s).item()
        pred_before = model.predict(s)
        s.noise_flag = not s.noise_flag
        assert model.sequence_loss(s).item() == loss_before
        assert model.predict(s) == pred_before
