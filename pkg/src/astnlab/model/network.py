"""Generator G (spatial encoder, intrinsic temporal encoder, GRU) and classifier C."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from .config import AstnConfig
from .params import AstnParams


def _dense(x: Tensor, params: AstnParams, prefix: str) -> Tensor:
    return x @ params[f"{prefix}.weight"] + params[f"{prefix}.bias"]


def spatial_encode(frames, params: AstnParams, config: AstnConfig) -> Tensor:
    """Per-frame spatial representation: ``N x W x H`` frames to ``N x S``.

    Every frame goes through the same conv stack, so the output for a frame
    does not depend on where it sits in the batch.
    """
    x = ag.as_tensor(frames)
    if x.ndim != 3 or x.shape[1:] != (config.width, config.height):
        raise ValueError(f"expected N x {config.width} x {config.height} frames, got {x.shape}")
    n = x.shape[0]
    x = x.reshape(n, 1, config.width, config.height)
    pad = config.spatial_kernel // 2
    for i in range(len(config.spatial_channels)):
        x = ag.conv2d(x, params[f"spatial.conv{i}.weight"], params[f"spatial.conv{i}.bias"], padding=pad)
        x = ag.leaky_relu(x, config.leaky_slope)
        if i in config.spatial_pool_after:
            x = ag.max_pool2d(x, 2)
    x = x.reshape(n, -1)
    return ag.leaky_relu(_dense(x, params, "spatial.fc"), config.leaky_slope)


def intrinsic_encode(windows, params: AstnParams, config: AstnConfig) -> Tensor:
    """``Nw x P x S`` window stacks to ``Nw x H1``; a single ``P x S`` window gives ``H1``.

    Each window is read as an S-channel sequence of length P and filtered by
    temporal convolutions shared across all windows and trials.
    """
    s = ag.as_tensor(windows)
    single = s.ndim == 2
    if single:
        s = s.reshape(1, *s.shape)
    if s.ndim != 3 or s.shape[1:] != (config.sample_rate, config.spatial_dim):
        raise ValueError(f"expected windows of {config.sample_rate} x {config.spatial_dim}, got {s.shape}")
    nw = s.shape[0]
    x = s.transpose(0, 2, 1)
    pad = config.intrinsic_kernel // 2
    for i in range(len(config.intrinsic_channels)):
        x = ag.conv1d(x, params[f"intrinsic.conv{i}.weight"], params[f"intrinsic.conv{i}.bias"], padding=pad)
        x = ag.leaky_relu(x, config.leaky_slope)
        if i in config.intrinsic_pool_after:
            x = ag.max_pool1d(x, 2)
    out = ag.leaky_relu(_dense(x.reshape(nw, -1), params, "intrinsic.fc"), config.leaky_slope)
    return out.reshape(-1) if single else out


def _gru_cell(xz: Tensor, xr: Tensor, xh: Tensor, h_prev: Tensor, params: AstnParams, d: str) -> Tensor:
    z = ag.sigmoid(xz + h_prev @ params[f"gru.{d}.W_hz"])
    r = ag.sigmoid(xr + h_prev @ params[f"gru.{d}.W_hr"])
    h_tilde = ag.tanh(xh + r * (h_prev @ params[f"gru.{d}.W_hh"]))
    return (1.0 - z) * h_tilde + z * h_prev


def gru_step(x, h_prev, params: AstnParams, direction: str = "fwd") -> Tensor:
    """One GRU update; ``x`` is ``[B x] H1`` and ``h_prev`` is ``[B x] H2``.

    Gates: z = sig(x W_xz + h W_hz + b_z), r = sig(x W_xr + h W_hr + b_r),
    h~ = tanh(x W_xh + r * (h W_hh) + b_h), out = (1 - z) h~ + z h.
    """
    x, h_prev = ag.as_tensor(x), ag.as_tensor(h_prev)
    single = x.ndim == 1
    if single:
        x, h_prev = x.reshape(1, -1), h_prev.reshape(1, -1)
    if x.shape[1] != params[f"gru.{direction}.W_xz"].shape[0] or h_prev.shape[1] != params[f"gru.{direction}.W_hz"].shape[0]:
        raise ValueError(f"gru_step dims mismatch: x {x.shape}, h {h_prev.shape}")
    p = lambda n: params[f"gru.{direction}.{n}"]
    out = _gru_cell(x @ p("W_xz") + p("b_z"), x @ p("W_xr") + p("b_r"), x @ p("W_xh") + p("b_h"), h_prev, params,
                    direction)
    return out.reshape(-1) if single else out


def _run_direction(x: Tensor, params: AstnParams, direction: str) -> Tensor:
    """``Tm x B x H1`` padded inputs to ``(Tm * B) x H2`` states, zero initial state."""
    tm, b, h1 = x.shape
    p = lambda n: params[f"gru.{direction}.{n}"]
    h2 = p("W_hz").shape[0]
    flat = x.reshape(tm * b, h1)
    xz = (flat @ p("W_xz") + p("b_z")).reshape(tm, b, h2)
    xr = (flat @ p("W_xr") + p("b_r")).reshape(tm, b, h2)
    xh = (flat @ p("W_xh") + p("b_h")).reshape(tm, b, h2)
    h = Tensor(np.zeros((b, h2), dtype=x.dtype))
    states = []
    for t in range(tm):
        h = _gru_cell(xz[t], xr[t], xh[t], h, params, direction)
        states.append(h)
    return ag.stack(states, axis=0).reshape(tm * b, h2)


def gru_batched(g_dot: Tensor, lengths: Sequence[int], params: AstnParams, bidirectional: bool) -> Tensor:
    """Run the GRU over several trials packed back to back in ``g_dot`` (``sum(T) x H1``).

    Trials are padded at the end to a common length; the backward direction
    reverses each trial before padding, so padding never leaks into outputs.
    Returns ``sum(T) x H2`` (``2 H2`` when bidirectional, forward half first).
    """
    lengths = [int(t) for t in lengths]
    if min(lengths) < 1:
        raise ValueError("every trial needs at least one window")
    nw, h1 = g_dot.shape
    if sum(lengths) != nw:
        raise ValueError(f"lengths sum to {sum(lengths)} but got {nw} windows")
    b, tm = len(lengths), max(lengths)
    offsets = np.r_[0, np.cumsum(lengths)[:-1]]
    padded = ag.concat([g_dot, Tensor(np.zeros((1, h1), dtype=g_dot.dtype))], axis=0)

    t_idx = np.arange(tm)[:, None]
    valid = t_idx < np.asarray(lengths)[None, :]
    fwd_in = np.where(valid, offsets[None, :] + t_idx, nw)
    bwd_in = np.where(valid, offsets[None, :] + np.asarray(lengths)[None, :] - 1 - t_idx, nw)
    # flat output position (t * B + b) for every packed window
    trial_of = np.repeat(np.arange(b), lengths)
    t_of = np.arange(nw) - offsets[trial_of]
    fwd_out = t_of * b + trial_of
    bwd_out = (np.asarray(lengths)[trial_of] - 1 - t_of) * b + trial_of

    fwd = _run_direction(ag.take(padded, fwd_in.reshape(-1)).reshape(tm, b, h1), params, "fwd")
    out = ag.take(fwd, fwd_out)
    if bidirectional:
        bwd = _run_direction(ag.take(padded, bwd_in.reshape(-1)).reshape(tm, b, h1), params, "bwd")
        out = ag.concat([out, ag.take(bwd, bwd_out)], axis=1)
    return out


def gru_sequence(g_dot, params: AstnParams, bidirectional: bool = False) -> Tensor:
    """``T x H1`` intrinsic sequence to ``T x H2`` (or ``T x 2 H2``) dynamic sequence."""
    g_dot = ag.as_tensor(g_dot)
    if g_dot.ndim != 2 or g_dot.shape[0] < 1:
        raise ValueError(f"expected a T x H1 sequence with T >= 1, got {g_dot.shape}")
    return gru_batched(g_dot, [g_dot.shape[0]], params, bidirectional)


def classify(g_ddot, params: AstnParams, config: AstnConfig) -> Tensor:
    """FoG probability for each row of ``N x dynamic_dim``."""
    x = ag.as_tensor(g_ddot)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != config.dynamic_dim:
        raise ValueError(f"classifier expects {config.dynamic_dim} features, got {x.shape[1]}")
    n_layers = len(config.classifier_hidden) + 1
    for i in range(n_layers):
        x = _dense(x, params, f"classifier.fc{i}")
        if i < n_layers - 1:
            x = ag.leaky_relu(x, config.leaky_slope)
    return ag.sigmoid(x).reshape(-1)


def loss_jc(predictions: Tensor, labels, lengths: Sequence[int]) -> Tensor:
    """BCE averaged within each trial, then across trials.

    ``predictions`` packs the trials back to back in the order of ``lengths``.
    """
    lengths = [int(t) for t in lengths]
    if not lengths or sum(lengths) == 0:
        raise ValueError("J_C needs at least one prediction")
    labels = np.asarray(labels).reshape(-1)
    if predictions.shape != (sum(lengths),) or labels.size != sum(lengths):
        raise ValueError("predictions, labels and trial lengths disagree")
    weights = np.repeat([1.0 / (t * len(lengths)) for t in lengths], lengths)
    return ag.bce(predictions, labels, weights)


@dataclass
class Representations:
    """One trial's spatial (T x P x S), intrinsic (T x H1) and dynamic (T x H2') sequences."""

    s: Tensor
    g_dot: Tensor
    g_ddot: Tensor

    @property
    def length(self) -> int:
        return self.g_ddot.shape[0]


@dataclass
class RepresentationBatch:
    """Representations of several trials packed along the window axis."""

    s: Tensor          # Nw x P x S
    g_dot: Tensor      # Nw x H1
    g_ddot: Tensor     # Nw x H2'
    lengths: list[int]

    @property
    def offsets(self) -> np.ndarray:
        return np.r_[0, np.cumsum(self.lengths)[:-1]]

    def trial(self, i: int) -> Representations:
        a = int(self.offsets[i])
        b = a + self.lengths[i]
        return Representations(self.s[a:b], self.g_dot[a:b], self.g_ddot[a:b])

    def __len__(self) -> int:
        return len(self.lengths)


def generate(trial_frames: Sequence, params: AstnParams, config: AstnConfig) -> RepresentationBatch:
    """Run G over trials given as ``(T*P) x W x H`` frame arrays."""
    arrays = [f.values if isinstance(f, Tensor) else np.asarray(f) for f in trial_frames]
    if not arrays:
        raise ValueError("generate needs at least one trial")
    p = config.sample_rate
    lengths = []
    for a in arrays:
        if a.ndim != 3 or a.shape[0] % p or a.shape[0] == 0:
            raise ValueError(f"trial frames must be (T*{p}) x W x H, got {a.shape}")
        lengths.append(a.shape[0] // p)
    dtype = params.partition("G")[0].dtype
    frames = Tensor(np.concatenate(arrays, axis=0).astype(dtype, copy=False))
    s = spatial_encode(frames, params, config)
    s_win = s.reshape(sum(lengths), p, config.spatial_dim)
    g_dot = intrinsic_encode(s_win, params, config)
    g_ddot = gru_batched(g_dot, lengths, params, config.bidirectional)
    return RepresentationBatch(s_win, g_dot, g_ddot, lengths)
