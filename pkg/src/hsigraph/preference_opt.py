"""Toy-scale direct preference optimization of a trajectory denoiser.

Samples are 32-frame foot trajectories (per-frame horizontal displacement,
foot height) standing in for generated videos.  The denoiser is a
two-layer perceptron predicting the diffusion noise; the preference
objective is

    loss = softplus((beta / 2) * (L(x_w, p) - L(x_l, p)))
         = -log sigmoid(-(beta / 2) * (L(x_w, p) - L(x_l, p)))

where L is the noise-prediction MSE at one sampled timestep, and the pair
shares that timestep and noise draw.

Trajectory units: column 0 is displacement in units of 2 cm per frame,
column 1 is height in units of 10 cm, so the 5 cm contact threshold is 0.5.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import KeyedStream

SEQ_LEN = 32
NUM_PROMPTS = 4
TIME_EMBED = 8
HIDDEN = 64
CONTACT = 0.5
MARGIN_FLOOR = 0.25
CHECKPOINT_VERSION = "hsigraph-denoiser/1"

IN_DIM = 2 * SEQ_LEN + TIME_EMBED + NUM_PROMPTS
OUT_DIM = 2 * SEQ_LEN
NUM_PARAMS = HIDDEN * IN_DIM + HIDDEN + OUT_DIM * HIDDEN + OUT_DIM     # 9088

# gait templates per prompt: (cycles per clip, swing speed, lift)
TEMPLATES = ((1.0, 1.6, 1.5), (1.5, 2.0, 2.0), (2.0, 2.4, 2.5), (2.5, 1.2, 1.2))

# named hyperparameter presets
LARGE_BETA_PRESET = {"beta": 5000.0, "lr": 1e-5}
TOY_PRESET = {"beta": 2.0, "lr": 1e-3}


class NumericalError(FloatingPointError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrajectorySample:
    points: np.ndarray        # (SEQ_LEN, 2)
    prompt: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(SEQ_LEN, 2)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("trajectory has non-finite values")
        if not 0 <= self.prompt < NUM_PROMPTS:
            raise ValueError(f"prompt {self.prompt} outside 0..{NUM_PROMPTS - 1}")


@dataclass
class PreferencePair:
    x_w: TrajectorySample
    x_l: TrajectorySample

    def __post_init__(self):
        if self.x_w.prompt != self.x_l.prompt:
            raise ValueError("a preference pair must share its prompt")

    @property
    def prompt(self) -> int:
        return self.x_w.prompt

    def swapped(self) -> "PreferencePair":
        return PreferencePair(self.x_l, self.x_w)


@dataclass
class DpoConfig:
    beta: float = TOY_PRESET["beta"]
    lr: float = TOY_PRESET["lr"]
    steps: int = 500
    timesteps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    seed: int = 0
    reference: bool = False           # reference-relative losses
    eval_repeats: int = 16
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.beta <= 0 or self.lr < 0:
            raise ValueError("beta must be positive and lr non-negative")
        if self.timesteps < 1:
            raise ValueError("need at least one timestep")

    def alpha_bar(self) -> np.ndarray:
        betas = np.linspace(self.beta_start, self.beta_end, self.timesteps)
        return np.cumprod(1.0 - betas)


def time_embedding(t, timesteps: int) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)) / timesteps
    freqs = np.pi * 2.0 ** np.arange(TIME_EMBED // 2)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class DenoiserModel:
    """tanh MLP: [x_t (64), time embedding (8), prompt one-hot (4)] -> 64 -> predicted noise (64)."""

    def __init__(self, params: np.ndarray):
        params = np.asarray(params, dtype=np.float64).copy()
        if params.shape != (NUM_PARAMS,):
            raise ValueError(f"expected {NUM_PARAMS} parameters, got {params.shape}")
        self.params = params

    @classmethod
    def init(cls, seed: int = 0, out_scale: float = 0.01) -> "DenoiserModel":
        s = KeyedStream(seed, 0xD0)
        W1 = s.child(1).normal(HIDDEN * IN_DIM) / math.sqrt(IN_DIM)
        W2 = s.child(2).normal(OUT_DIM * HIDDEN) * out_scale
        return cls(np.concatenate([W1, np.zeros(HIDDEN), W2, np.zeros(OUT_DIM)]))

    def copy(self) -> "DenoiserModel":
        return DenoiserModel(self.params)

    def unpack(self, params=None):
        p = self.params if params is None else params
        i = 0
        W1 = p[i:i + HIDDEN * IN_DIM].reshape(HIDDEN, IN_DIM)
        i += HIDDEN * IN_DIM
        b1 = p[i:i + HIDDEN]
        i += HIDDEN
        W2 = p[i:i + OUT_DIM * HIDDEN].reshape(OUT_DIM, HIDDEN)
        i += OUT_DIM * HIDDEN
        b2 = p[i:i + OUT_DIM]
        return W1, b1, W2, b2

    def forward(self, u: np.ndarray):
        W1, b1, W2, b2 = self.unpack()
        h = np.tanh(u @ W1.T + b1)
        return h @ W2.T + b2, h

    def backward(self, u: np.ndarray, h: np.ndarray, dout: np.ndarray) -> np.ndarray:
        """Parameter gradient given per-row output gradients (rows summed)."""
        _, _, W2, _ = self.unpack()
        dW2 = dout.T @ h
        db2 = dout.sum(axis=0)
        dz = (dout @ W2) * (1.0 - h * h)
        dW1 = dz.T @ u
        db1 = dz.sum(axis=0)
        return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])


def _inputs(xs: np.ndarray, prompts: np.ndarray, t: np.ndarray, eps: np.ndarray, cfg: DpoConfig) -> np.ndarray:
    ab = cfg.alpha_bar()[t]
    xt = np.sqrt(ab)[:, None] * xs + np.sqrt(1.0 - ab)[:, None] * eps
    onehot = np.eye(NUM_PROMPTS)[prompts]
    return np.concatenate([xt, time_embedding(t + 1, cfg.timesteps), onehot], axis=1)


def losses(model: DenoiserModel, xs, prompts, t, eps, cfg: DpoConfig, *, grad: bool = False):
    """Per-sample noise-prediction MSE for stacked flat samples; optionally the d(out) cache."""
    u = _inputs(xs, prompts, t, eps, cfg)
    out, h = model.forward(u)
    r = out - eps
    L = np.mean(r * r, axis=1)
    if grad:
        return L, (u, h, 2.0 * r / OUT_DIM)
    return L


def per_sample_loss(model: DenoiserModel, x: TrajectorySample, t: int, noise, config: DpoConfig | None = None) -> float:
    cfg = config or DpoConfig()
    if not 0 <= t < cfg.timesteps:
        raise ValueError(f"timestep {t} outside 0..{cfg.timesteps - 1}")
    eps = np.asarray(noise, dtype=np.float64).reshape(1, OUT_DIM)
    return float(losses(model, x.points.reshape(1, -1), np.array([x.prompt]), np.array([t]), eps, cfg)[0])


def dpo_objective(l_w, l_l, beta: float):
    """softplus(beta/2 * (L_w - L_l)), stable for large arguments."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    z = 0.5 * beta * (np.asarray(l_w, dtype=np.float64) - np.asarray(l_l, dtype=np.float64))
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def draws(n: int, cfg: DpoConfig, *key):
    """Shared (timestep, noise) draws for ``n`` pairs, keyed by ``key``."""
    s = KeyedStream(cfg.seed, *key)
    t = s.child(0).integers(0, cfg.timesteps, n)
    eps = s.child(1).normal(n * OUT_DIM).reshape(n, OUT_DIM)
    return t, eps


def _stack(pairs):
    xw = np.stack([p.x_w.points.ravel() for p in pairs])
    xl = np.stack([p.x_l.points.ravel() for p in pairs])
    pr = np.array([p.prompt for p in pairs])
    return xw, xl, pr


def pair_losses(model, pairs, t, eps, cfg: DpoConfig, reference: DenoiserModel | None = None):
    xw, xl, pr = _stack(pairs)
    lw = losses(model, xw, pr, t, eps, cfg)
    ll = losses(model, xl, pr, t, eps, cfg)
    if cfg.reference and reference is not None:
        lw = lw - losses(reference, xw, pr, t, eps, cfg)
        ll = ll - losses(reference, xl, pr, t, eps, cfg)
    return lw, ll


def dpo_loss(model: DenoiserModel, pair, beta: float, t, noise, config: DpoConfig | None = None,
             reference: DenoiserModel | None = None) -> float:
    """Preference loss of one pair (or mean over a list) under shared draws."""
    cfg = replace(config or DpoConfig(), beta=beta)
    pairs = pair if isinstance(pair, list) else [pair]
    t = np.atleast_1d(np.asarray(t))
    eps = np.asarray(noise, dtype=np.float64).reshape(len(pairs), OUT_DIM)
    lw, ll = pair_losses(model, pairs, t, eps, cfg, reference)
    return float(np.mean(dpo_objective(lw, ll, cfg.beta)))


def gradient(model: DenoiserModel, pairs, config: DpoConfig, t, noise,
             reference: DenoiserModel | None = None):
    """Mean loss and its analytic parameter gradient over ``pairs``."""
    if not pairs:
        raise ValueError("gradient needs at least one pair")
    cfg = config
    xw, xl, pr = _stack(pairs)
    eps = np.asarray(noise, dtype=np.float64).reshape(len(pairs), OUT_DIM)
    t = np.asarray(t)
    lw, (uw, hw, dw) = losses(model, xw, pr, t, eps, cfg, grad=True)
    ll, (ul, hl, dl) = losses(model, xl, pr, t, eps, cfg, grad=True)
    if cfg.reference and reference is not None:
        lw = lw - losses(reference, xw, pr, t, eps, cfg)
        ll = ll - losses(reference, xl, pr, t, eps, cfg)
    z = 0.5 * cfg.beta * (lw - ll)
    n = len(pairs)
    g = 0.5 * cfg.beta * _sigmoid(z) / n          # d loss / d L_w; d loss / d L_l = -g
    grad = model.backward(uw, hw, dw * g[:, None]) - model.backward(ul, hl, dl * g[:, None])
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NumericalError(f"non-finite gradient at parameter {int(bad[0])}")
    return float(np.mean(np.logaddexp(0.0, z))), grad


# ---------------------------------------------------------------- data

def slide_score(points: np.ndarray, contact: float = CONTACT) -> float:
    """Mean absolute displacement over contact frames (height below ``contact``)."""
    pts = np.asarray(points, dtype=np.float64).reshape(SEQ_LEN, 2)
    mask = pts[:, 1] < contact
    return float(np.abs(pts[mask, 0]).mean()) if mask.any() else 0.0


def _trajectory(prompt: int, phase: float, amp: float, jitter: np.ndarray, slide: float) -> np.ndarray:
    cycles, speed, lift = TEMPLATES[prompt]
    k = np.arange(SEQ_LEN)
    s = np.sin(2.0 * np.pi * cycles * k / SEQ_LEN + phase)
    swing = s > 0.0
    height = np.where(swing, np.maximum(lift * amp * s, CONTACT + 0.1), 0.0)
    disp = np.where(swing, speed * amp * (0.5 + 0.5 * s) + 0.1 * jitter[:, 0], slide + 0.05 * np.abs(jitter[:, 1]))
    return np.column_stack([disp, height])


def synth_pairs(n: int, seed: int = 0) -> list:
    """Pairs sharing gait template, phase and jitter; the loser slides more on contact frames."""
    if n < 1:
        raise ValueError("n must be at least 1")
    pairs = []
    for i in range(n):
        s = KeyedStream(seed, 0x5A, i)
        prompt = i % NUM_PROMPTS
        u = s.child(0).uniform(4)
        phase = 2.0 * np.pi * u[0]
        amp = 0.8 + 0.4 * u[1]
        jitter = s.child(1).normal(2 * SEQ_LEN).reshape(SEQ_LEN, 2)
        slide_w = 0.3 * u[2]
        slide_l = slide_w + MARGIN_FLOOR + 0.5 * u[3]
        xw = _trajectory(prompt, phase, amp, jitter, slide_w)
        xl = _trajectory(prompt, phase, amp, jitter, slide_l)
        if slide_score(xl) - slide_score(xw) < MARGIN_FLOOR - 1e-12:
            raise AssertionError("pair construction fell below the margin floor")
        pairs.append(PreferencePair(TrajectorySample(xw, prompt), TrajectorySample(xl, prompt)))
    return pairs


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: DenoiserModel
    trace: list = field(default_factory=list)
    steps: int = 0


def train(model: DenoiserModel, pairs, config: DpoConfig) -> TrainResult:
    """Full-batch Adam on the preference loss; fresh shared draws each step."""
    if not pairs:
        raise ValueError("no training pairs")
    cfg = config
    model = model.copy()
    reference = model.copy() if cfg.reference else None
    m = np.zeros(NUM_PARAMS)
    v = np.zeros(NUM_PARAMS)
    b1, b2, eps_adam = 0.9, 0.999, 1e-8
    trace = []
    initial = None
    for step in range(cfg.steps):
        t, eps = draws(len(pairs), cfg, 0x7A, step)
        loss, g = gradient(model, pairs, cfg, t, eps, reference)
        trace.append(loss)
        if initial is None:
            initial = loss
        elif not math.isfinite(loss) or loss > cfg.divergence_factor * initial:
            raise TrainingDiverged(f"loss {loss:.4g} exceeded {cfg.divergence_factor}x the initial {initial:.4g}",
                                   trace)
        if cfg.lr == 0.0:
            continue
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** (step + 1))
        vh = v / (1 - b2 ** (step + 1))
        model.params -= cfg.lr * mh / (np.sqrt(vh) + eps_adam)
    return TrainResult(model, trace, cfg.steps)


def preference_margins(model: DenoiserModel, pairs, config: DpoConfig, seed: int | None = None) -> np.ndarray:
    """L(x_l) - L(x_w) per (repeat, pair) under shared draws; positive means preferred wins."""
    cfg = config if seed is None else replace(config, seed=seed)
    out = np.empty((cfg.eval_repeats, len(pairs)))
    for r in range(cfg.eval_repeats):
        t, eps = draws(len(pairs), cfg, 0xE7, r)
        lw, ll = pair_losses(model, pairs, t, eps, cfg)
        out[r] = ll - lw
    return out


def eval_preference_accuracy(model: DenoiserModel, pairs, config: DpoConfig, seed: int | None = None) -> float:
    if not pairs:
        raise ValueError("no evaluation pairs")
    return float(np.mean(preference_margins(model, pairs, config, seed) > 0.0))


# ---------------------------------------------------------------- persistence

def save_checkpoint(path, model: DenoiserModel, *, seed: int = 0, steps: int = 0) -> None:
    header = {"format": CHECKPOINT_VERSION, "in": IN_DIM, "hidden": HIDDEN, "out": OUT_DIM,
              "params": NUM_PARAMS, "seed": seed, "steps": steps}
    body = "\n".join(repr(float(x)) for x in model.params)
    Path(path).write_text(json.dumps(header, sort_keys=True) + "\n" + body + "\n")


def load_checkpoint(path):
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("format") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
    if (header["in"], header["hidden"], header["out"]) != (IN_DIM, HIDDEN, OUT_DIM):
        raise ValueError("checkpoint widths do not match this model")
    params = np.array([float(x) for x in lines[1:1 + header["params"]]])
    return DenoiserModel(params), header


def trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for i, v in enumerate(trace):
        w.writerow([i, repr(float(v))])
    return buf.getvalue()
