import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from astnlab.data import (
    Cohort,
    PressureSequence,
    SplitPlan,
    SynthConfig,
    generate_cohort,
    ingest_csv_dir,
    label_windows,
    load_cohort,
    make_split,
    normalize_levels,
    save_cohort,
)
from astnlab.data.io import CohortFileError
from astnlab.evaluation import roc_auc


def tiny_cohort(trials_per_subject, p=2, w=4, h=4, seed=0):
    rng = np.random.default_rng(seed)
    seqs = []
    for m, count in enumerate(trials_per_subject):
        for n in range(count):
            t = int(rng.integers(1, 4))
            seqs.append(PressureSequence(m, n, rng.uniform(0, 1, (t * p, w, h)), p, rng.integers(0, 2, t)))
    return Cohort(seqs)


# -- labels --------------------------------------------------------------------


def test_label_examples():
    np.testing.assert_array_equal(label_windows([0, 0, 0, 0, 0, 1, 0, 0], 4), [0, 1])
    np.testing.assert_array_equal(label_windows(np.zeros(12), 4), [0, 0, 0])
    np.testing.assert_array_equal(label_windows([1, 1, 1, 1], 4), [1])


def test_label_rule_on_every_four_frame_pattern():
    patterns = list(itertools.product([0, 1], repeat=4))
    assert len(patterns) == 16
    for pat in patterns:
        assert label_windows(pat, 4).tolist() == [int(any(pat))]
    # all 16 windows back to back
    flat = np.array(patterns).reshape(-1)
    np.testing.assert_array_equal(label_windows(flat, 4), [int(any(p)) for p in patterns])


def test_label_length_not_multiple():
    with pytest.raises(ValueError, match="truncate"):
        label_windows([0, 1, 0], 2)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.lists(st.integers(0, 1), min_size=0, max_size=60))
def test_label_output_length(p, frames):
    frames = frames[: len(frames) // p * p]
    assert label_windows(frames, p).shape == (len(frames) // p,)


def test_normalize_levels():
    np.testing.assert_allclose(normalize_levels([0, 3, 9], 10), [0, 1 / 3, 1])
    with pytest.raises(ValueError):
        normalize_levels([10], 10)


# -- sequences -----------------------------------------------------------------


def test_from_frames_drops_partial_second():
    raw = np.full((11, 3, 2), 9.0)
    labels = np.zeros(11)
    labels[9] = 1
    s = PressureSequence.from_frames(0, 0, raw, 4, labels, levels=10)
    assert s.frames.shape == (8, 3, 2) and s.n_seconds == 2
    np.testing.assert_array_equal(s.labels, [0, 0])
    assert s.frames.max() == 1.0


@pytest.mark.parametrize("frames,labels", [
    (np.zeros((5, 2, 2)), [0, 0]),           # not whole seconds
    (np.full((4, 2, 2), 1.5), [0, 0]),       # out of range
    (np.zeros((4, 2, 2)), [0]),              # wrong label count
])
def test_sequence_invariants(frames, labels):
    with pytest.raises(ValueError):
        PressureSequence(0, 0, frames, 2, labels)


def test_cohort_rejects_duplicate_keys():
    s = PressureSequence(0, 0, np.zeros((2, 2, 2)), 2, [0])
    with pytest.raises(ValueError):
        Cohort([s, s])


# -- splits --------------------------------------------------------------------


def test_subject_split_four_subjects():
    plan = make_split(tiny_cohort([2, 2, 2, 2]), "subject", seed=3)
    train_side = plan.subjects("train") | plan.subjects("val")
    assert not train_side & plan.subjects("test")
    assert len(train_side) == 2 and len(plan.subjects("test")) == 2


def test_subject_split_one_subject_rejected():
    with pytest.raises(ValueError, match="3 subjects"):
        make_split(tiny_cohort([5]), "subject")


def test_split_deterministic():
    c = tiny_cohort([3, 2, 4, 1, 2])
    assert make_split(c, "subject", seed=7) == make_split(c, "subject", seed=7)
    assert make_split(c, "trial", seed=7) == make_split(c, "trial", seed=7)


def test_trial_split_one_to_one():
    c = tiny_cohort([3, 3, 3, 3])
    plan = make_split(c, "trial", seed=0, val_fraction=0.0)
    assert len(plan.train_ids) == len(plan.test_ids) == 6
    # trial-level splits usually share subjects across the boundary
    assert plan.subjects("train") & plan.subjects("test")


def test_validation_fraction():
    plan = make_split(tiny_cohort([5] * 4), "subject", seed=1, val_fraction=0.2)
    assert len(plan.val_ids) == 2 and len(plan.train_ids) == 8


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=3, max_size=9), st.integers(0, 2**31 - 1))
def test_subject_split_disjoint_property(counts, seed):
    c = tiny_cohort(counts, seed=seed % 1000)
    plan = make_split(c, "subject", seed=seed)
    parts = [set(plan.train_ids), set(plan.val_ids), set(plan.test_ids)]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert parts[0] | parts[1] | parts[2] == set(c.keys)
    assert not (plan.subjects("train") | plan.subjects("val")) & plan.subjects("test")


def test_split_plan_json_round_trip():
    plan = make_split(tiny_cohort([2, 3, 2]), "subject", seed=2)
    assert SplitPlan.from_json(plan.to_json()) == plan


def test_split_plan_validate_catches_leak():
    c = tiny_cohort([2, 2, 2])
    bad = SplitPlan("subject", ((0, 0), (1, 0), (2, 0)), (), ((0, 1), (1, 1), (2, 1)), 0)
    with pytest.raises(ValueError, match="leaks"):
        bad.validate(c)


# -- cohort files --------------------------------------------------------------


def test_cohort_round_trip_bit_exact(tmp_path):
    c = generate_cohort(SynthConfig(n_subjects=3, trials_per_subject=2, min_seconds=3, max_seconds=5))
    save_cohort(c, tmp_path / "c.fpsq")
    back = load_cohort(tmp_path / "c.fpsq")
    assert back == c
    for a, b in zip(c, back):
        assert a.frames.tobytes() == b.frames.tobytes()


def test_cohort_header_drives_dims(tmp_path):
    c = generate_cohort(SynthConfig(n_subjects=1, trials_per_subject=1, width=32, height=16, sample_rate=12,
                                    min_seconds=2, max_seconds=2))
    save_cohort(c, tmp_path / "c.fpsq")
    back = load_cohort(tmp_path / "c.fpsq")
    assert back.grid == (32, 16) and back.sample_rate == 12


def test_truncated_cohort_file(tmp_path):
    c = tiny_cohort([1, 1])
    path = tmp_path / "c.fpsq"
    save_cohort(c, path)
    data = path.read_bytes()
    for cut in (3, 10, 20, len(data) - 1):
        path.write_bytes(data[:cut])
        with pytest.raises(CohortFileError):
            load_cohort(path)


def test_bad_magic_and_corrupt_manifest(tmp_path):
    path = tmp_path / "c.fpsq"
    save_cohort(tiny_cohort([1]), path)
    data = bytearray(path.read_bytes())
    path.write_bytes(b"XXXXX" + bytes(data[5:]))
    with pytest.raises(CohortFileError, match="magic"):
        load_cohort(path)
    data[14] = ord("#")
    path.write_bytes(bytes(data))
    with pytest.raises(CohortFileError, match="manifest"):
        load_cohort(path)


def test_csv_ingest(tmp_path):
    rng = np.random.default_rng(0)
    for m, n in [(0, 0), (1, 0)]:
        d = tmp_path / f"trial_{m}_{n}"
        d.mkdir()
        for k in range(5):
            np.savetxt(d / f"frame_{k}.csv", rng.integers(0, 10, (3, 2)), delimiter=",", fmt="%d")
        np.savetxt(d / "frame_labels.csv", [0, 0, 1, 0, 0], fmt="%d")
    c = ingest_csv_dir(tmp_path, sample_rate=2)
    assert c.keys == [(0, 0), (1, 0)]
    assert c[(0, 0)].frames.shape == (4, 3, 2)
    np.testing.assert_array_equal(c[(0, 0)].labels, [0, 1])


def test_csv_ingest_missing_labels(tmp_path):
    d = tmp_path / "trial_0_0"
    d.mkdir()
    np.savetxt(d / "frame_0.csv", np.zeros((2, 2)), delimiter=",")
    with pytest.raises(CohortFileError, match="frame_labels"):
        ingest_csv_dir(tmp_path, 1)


# -- generator -----------------------------------------------------------------


def test_generator_deterministic_and_normalized():
    cfg = SynthConfig(n_subjects=2, trials_per_subject=2, min_seconds=3, max_seconds=6, seed=5)
    a, b = generate_cohort(cfg), generate_cohort(cfg)
    assert a == b
    for s in a:
        assert s.frames.min() >= 0 and s.frames.max() <= 1
        assert s.labels.size == s.n_seconds


def test_generator_event_rate_near_target():
    c = generate_cohort(SynthConfig(n_subjects=10, trials_per_subject=5, seed=1))
    assert len(c) == 50
    assert 0.13 <= c.event_rate() <= 0.33
    assert abs(c.event_rate() - 0.228) <= 0.1


def test_generator_rejects_bad_config():
    with pytest.raises(ValueError):
        generate_cohort(SynthConfig(fog_episode_rate=1.2))


def window_features(seq):
    """Hand-made per-second summaries a linear probe can use."""
    win = seq.windows().astype(np.float64)                      # T x P x W x H
    total = win.sum(axis=(2, 3))
    diff = np.abs(np.diff(win, axis=1)).sum(axis=(2, 3))
    xs = np.arange(win.shape[2])
    mass = win.sum(axis=3)
    com = (mass * xs).sum(axis=2) / np.maximum(mass.sum(axis=2), 1e-9)
    return np.column_stack([total.mean(1), total.std(1), diff.mean(1), diff.std(1), np.abs(np.diff(com, axis=1)).mean(1),
                            (win > 0.3).mean(axis=(1, 2, 3))])


def probe_auc(cohort, train_keys, test_keys):
    """Fisher linear discriminant on window_features; returns the test AUC."""
    def stack(keys):
        xs = [window_features(cohort[k]) for k in keys]
        return np.concatenate(xs), np.concatenate([cohort[k].labels for k in keys])

    x, y = stack(train_keys)
    mu, sd = x.mean(0), x.std(0) + 1e-9
    x = (x - mu) / sd
    m1, m0 = x[y == 1].mean(0), x[y == 0].mean(0)
    cov = np.cov(x[y == 1].T) + np.cov(x[y == 0].T) + 1e-3 * np.eye(x.shape[1])
    w = np.linalg.solve(cov, m1 - m0)
    xt, yt = stack(test_keys)
    return roc_auc(((xt - mu) / sd) @ w, yt).auc


def test_probe_sees_signal_when_present():
    c = generate_cohort(SynthConfig(n_subjects=8, trials_per_subject=4, min_seconds=15, max_seconds=25, seed=2))
    plan = make_split(c, "subject", seed=0, val_fraction=0)
    assert probe_auc(c, plan.train_ids, plan.test_ids) > 0.8


def test_zero_signal_is_undetectable():
    c = generate_cohort(SynthConfig(n_subjects=8, trials_per_subject=4, min_seconds=15, max_seconds=25,
                                    fog_signal_strength=0.0, seed=2))
    plan = make_split(c, "subject", seed=0, val_fraction=0)
    assert abs(probe_auc(c, plan.train_ids, plan.test_ids) - 0.5) <= 0.07


def test_zero_nuisance_makes_split_protocols_agree():
    gaps = []
    for seed in range(3):
        c = generate_cohort(SynthConfig(n_subjects=8, trials_per_subject=4, min_seconds=15, max_seconds=25,
                                        subject_nuisance_amplitude=0.0, fog_signal_strength=0.3, seed=seed))
        aucs = []
        for mode in ("subject", "trial"):
            plan = make_split(c, mode, seed=seed, val_fraction=0)
            aucs.append(probe_auc(c, plan.train_ids, plan.test_ids))
        gaps.append(aucs[1] - aucs[0])
    assert abs(np.mean(gaps)) <= 0.03
