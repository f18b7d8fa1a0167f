"""Clipped-surrogate PPO with a small numpy actor-critic.

Policy and value function are separate 4-64-64 tanh MLPs (a 2-logit head
and a scalar head). Gradients are written out by hand so they can be
checked against finite differences; optimisation is Adam with global-norm
gradient clipping.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .env import EpisodeSpec, HeaterEnv, Observation, RewardParams

log = logging.getLogger(__name__)

POLICY_FORMAT = "heatplan-ppo-v1"
HIDDEN = (64, 64)
OBS_DIM = 4


class PolicyFormatError(ValueError):
    """A policy file is unreadable, truncated or has the wrong layer shapes."""


class PolicyVersionError(PolicyFormatError):
    """A policy file was written in a different format version."""


class TrainingDivergedError(RuntimeError):
    """A PPO update produced a non-finite loss or parameters."""


@dataclass(frozen=True)
class PpoConfig:
    total_steps: int = 500_000
    steps_per_batch: int = 2048
    minibatch: int = 64
    epochs_per_batch: int = 10
    learning_rate: float = 3e-4
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    grad_clip_norm: float = 0.5
    adam_eps: float = 1e-5
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.clip_ratio < 1:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        for name in ("total_steps", "steps_per_batch", "minibatch", "epochs_per_batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def n_batches(self) -> int:
        return -(-self.total_steps // self.steps_per_batch)


# ---------------------------------------------------------------------------
# network


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MLP:
    """tanh hidden layers, linear output; weights stored (out, in)."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, rng: np.random.Generator, sizes: Iterable[int], out_gain: float) -> "MLP":
        sizes = list(sizes)
        ws, bs = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else math.sqrt(2.0)
            ws.append(_orthogonal(rng, n_out, n_in, gain))
            bs.append(np.zeros(n_out))
        return cls(ws, bs)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], dout: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        n = len(self.weights)
        dws: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        dbs: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        d = dout
        for i in range(n - 1, -1, -1):
            dws[i] = d.T @ acts[i]
            dbs[i] = d.sum(axis=0)
            if i > 0:
                d = (d @ self.weights[i]) * (1.0 - acts[i] ** 2)
        return dws, dbs


@dataclass
class PolicyNet:
    pi: MLP
    vf: MLP
    temp_scale: float = 100.0
    time_scale: float = 100.0

    @classmethod
    def init(cls, rng: np.random.Generator) -> "PolicyNet":
        sizes = (OBS_DIM, *HIDDEN)
        return cls(MLP.init(rng, (*sizes, 2), 0.01), MLP.init(rng, (*sizes, 1), 1.0))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for m in (self.pi, self.vf):
            for w, b in zip(m.weights, m.biases):
                out += [w, b]
        return out

    def normalize(self, obs) -> np.ndarray:
        """Scale an observation (or an (n, 4) array of them) to O(1) inputs."""
        x = np.asarray(obs, dtype=np.float64)
        scale = np.array([self.temp_scale, self.temp_scale, self.temp_scale, self.time_scale])
        return x / scale

    def forward(self, x: np.ndarray):
        logits, pi_acts = self.pi.forward(x)
        value, vf_acts = self.vf.forward(x)
        return logits, value[..., 0], (pi_acts, vf_acts)

    def backward(self, cache, dlogits: np.ndarray, dvalue: np.ndarray) -> list[np.ndarray]:
        pi_acts, vf_acts = cache
        dw_pi, db_pi = self.pi.backward(pi_acts, dlogits)
        dw_vf, db_vf = self.vf.backward(vf_acts, dvalue[:, None])
        grads = []
        for dws, dbs in ((dw_pi, db_pi), (dw_vf, db_vf)):
            for dw, db in zip(dws, dbs):
                grads += [dw, db]
        return grads

    def act(self, obs: Observation, deterministic: bool = True, rng: np.random.Generator | None = None) -> int:
        probs, _ = policy_forward(obs, self)
        if deterministic:
            return 1 if probs[1] > probs[0] else 0
        return int(rng.random() < probs[1])

    def controller(self, deterministic: bool = True, rng: np.random.Generator | None = None):
        if not deterministic and rng is None:
            raise ValueError("sampling mode needs an rng")
        return lambda obs: self.act(obs, deterministic, rng)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_forward(obs: Observation, net: PolicyNet) -> tuple[np.ndarray, float]:
    """Action probabilities (off, on) and state value for one observation."""
    x = net.normalize(obs)
    logits, value, _ = net.forward(x[None, :])
    if not (np.all(np.isfinite(logits)) and np.isfinite(value[0])):
        raise TrainingDivergedError("non-finite network output; parameters are corrupt")
    return np.exp(log_softmax(logits)[0]), float(value[0])


# ---------------------------------------------------------------------------
# advantages and loss


def gae_advantages(rewards, values, dones, last_value: float, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates by backward recursion.

    ``dones[t]`` marks that transition ``t`` ended its episode, so nothing
    is bootstrapped across it. ``last_value`` is V of the state following
    the final transition (ignored if that transition is terminal).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = rewards.size
    adv = np.zeros(n)
    next_value = last_value
    running = 0.0
    for t in range(n - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv


@dataclass
class RolloutBatch:
    obs: np.ndarray  # normalised, (n, 4)
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray = field(default=None)  # type: ignore[assignment]
    returns: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __len__(self) -> int:
        return len(self.actions)

    def finish(self, last_value: float, gamma: float, lam: float) -> None:
        adv = gae_advantages(self.rewards, self.values, self.dones, last_value, gamma, lam)
        self.returns = adv + self.values
        self.advantages = (adv - adv.mean()) / (adv.std() + 1e-8)


def clipped_surrogate(ratio: np.ndarray, adv: np.ndarray, clip: float) -> np.ndarray:
    """Per-sample min(ratio*A, clip(ratio)*A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)


def ppo_loss(net: PolicyNet, obs, actions, old_logp, adv, returns, cfg: PpoConfig, with_grads: bool = True):
    """Total PPO loss on a minibatch and, optionally, its parameter gradients.

    Returns ``(loss, info, grads)``; ``grads`` is aligned with ``net.params``.
    """
    n = len(actions)
    logits, values, cache = net.forward(obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - old_logp)
    eps = cfg.clip_ratio
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -np.mean(np.minimum(unclipped, clipped))
    value_loss = np.mean((returns - values) ** 2)
    entropy = -np.sum(probs * logp_all, axis=1)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy.mean()
    info = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy.mean()),
        "approx_kl": float(np.mean(old_logp - logp)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
    }
    if not with_grads:
        return float(loss), info, None

    onehot = np.zeros_like(logits)
    onehot[idx, actions] = 1.0
    use = (unclipped <= clipped).astype(np.float64)
    dlogp = -(ratio * adv * use) / n
    dlogits = dlogp[:, None] * (onehot - probs)
    if cfg.entropy_coef:
        dent = -probs * (logp_all + entropy[:, None])
        dlogits -= cfg.entropy_coef * dent / n
    dvalues = cfg.value_coef * 2.0 * (values - returns) / n
    return float(loss), info, net.backward(cache, dlogits, dvalues)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, eps: float = 1e-5, betas=(0.9, 0.999)):
        self.params = params
        self.lr = lr
        self.eps = eps
        self.b1, self.b2 = betas
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for g in grads:
            g *= scale
    return total


def ppo_update(net: PolicyNet, batch: RolloutBatch, cfg: PpoConfig, opt: Adam, rng: np.random.Generator) -> dict:
    """Several epochs of minibatch gradient steps on one rollout batch."""
    n = len(batch)
    stats: dict[str, list[float]] = {}
    for _ in range(cfg.epochs_per_batch):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            mb = perm[start:start + cfg.minibatch]
            loss, info, grads = ppo_loss(
                net, batch.obs[mb], batch.actions[mb], batch.logp[mb],
                batch.advantages[mb], batch.returns[mb], cfg,
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss} ({info})")
            clip_grad_norm(grads, cfg.grad_clip_norm)
            opt.step(grads)
            for k, v in info.items():
                stats.setdefault(k, []).append(v)
    if not all(np.all(np.isfinite(p)) for p in net.params):
        raise TrainingDivergedError("non-finite parameters after update")
    return {k: float(np.mean(v)) for k, v in stats.items()}


# ---------------------------------------------------------------------------
# training


def default_spec_sampler(rng: np.random.Generator) -> EpisodeSpec:
    """Random start: T0 ~ U[10, 30], target ~ U[40, 80], deadline ~ U{30..90}."""
    t0 = rng.uniform(10.0, 30.0)
    target = rng.uniform(40.0, 80.0)
    deadline = int(rng.integers(30, 91))
    return EpisodeSpec(t0, target, deadline)


@dataclass
class CurvePoint:
    env_steps: int
    mean_return: float
    mean_energy_wh: float


def collect_rollout(net: PolicyNet, env: HeaterEnv, obs: Observation, n_steps: int, rng: np.random.Generator,
                    sampler: Callable[[np.random.Generator], EpisodeSpec], finished: list[tuple[float, float]],
                    ep_acc: list[float]):
    """Run the sampling policy for ``n_steps`` transitions, resetting at deadlines.

    ``ep_acc`` carries [return, energy_wh] of the episode in progress across
    calls; completed episodes are appended to ``finished``.
    """
    xs = np.empty((n_steps, OBS_DIM))
    actions = np.empty(n_steps, dtype=np.int64)
    logps = np.empty(n_steps)
    rewards = np.empty(n_steps)
    values = np.empty(n_steps)
    dones = np.empty(n_steps, dtype=bool)
    for t in range(n_steps):
        x = net.normalize(obs)
        logits, value, _ = net.forward(x[None, :])
        lp = log_softmax(logits)[0]
        a = int(rng.random() < math.exp(lp[1]))
        out = env.step(a)
        xs[t], actions[t], logps[t], values[t] = x, a, lp[a], value[0]
        rewards[t], dones[t] = out.reward, out.done
        ep_acc[0] += out.reward
        ep_acc[1] += out.energy_j / 3600.0
        if out.done:
            finished.append((ep_acc[0], ep_acc[1]))
            ep_acc[0] = ep_acc[1] = 0.0
            obs = env.reset(sampler(rng))
        else:
            obs = out.obs
    if dones[-1]:
        last_value = 0.0
    else:
        _, v, _ = net.forward(net.normalize(obs)[None, :])
        last_value = float(v[0])
    return RolloutBatch(xs, actions, logps, rewards, values, dones), last_value, obs


def train(cfg: PpoConfig = PpoConfig(), spec_sampler: Callable[[np.random.Generator], EpisodeSpec] | None = None,
          reward: RewardParams | None = None, progress: Callable[[CurvePoint, dict], None] | None = None):
    """Train a policy from scratch; returns ``(net, learning_curve)``.

    One curve point per rollout batch, averaging the episodes that finished
    within that batch. Everything is drawn from a single PCG64 stream seeded
    with ``cfg.rng_seed``, so a given config always yields the same network.
    """
    sampler = spec_sampler or default_spec_sampler
    rng = np.random.default_rng(cfg.rng_seed)
    net = PolicyNet.init(rng)
    opt = Adam(net.params, cfg.learning_rate, cfg.adam_eps)
    env = HeaterEnv(reward)
    obs = env.reset(sampler(rng))
    ep_acc = [0.0, 0.0]
    curve: list[CurvePoint] = []
    steps = 0
    for _ in range(cfg.n_batches):
        finished: list[tuple[float, float]] = []
        batch, last_value, obs = collect_rollout(net, env, obs, cfg.steps_per_batch, rng, sampler, finished, ep_acc)
        steps += cfg.steps_per_batch
        batch.finish(last_value, cfg.gamma, cfg.gae_lambda)
        info = ppo_update(net, batch, cfg, opt, rng)
        if finished:
            rets, energies = zip(*finished)
            point = CurvePoint(steps, float(np.mean(rets)), float(np.mean(energies)))
        else:
            point = CurvePoint(steps, math.nan, math.nan)
        curve.append(point)
        log.debug("steps=%d return=%.4f energy=%.0f %s", steps, point.mean_return, point.mean_energy_wh, info)
        if progress is not None:
            progress(point, info)
    return net, curve


def write_curve_csv(curve: list[CurvePoint], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("env_steps,mean_return,mean_energy_wh\n")
        for p in curve:
            fh.write(f"{p.env_steps},{p.mean_return!r},{p.mean_energy_wh!r}\n")


# ---------------------------------------------------------------------------
# persistence


def save_policy(net: PolicyNet, path: str | Path) -> None:
    layers = []
    for prefix, mlp in (("pi", net.pi), ("vf", net.vf)):
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            rows, cols = w.shape
            layers.append({
                "name": f"{prefix}.{i}",
                "rows": rows,
                "cols": cols,
                "weights": [float(v) for v in w.ravel()],
                "bias": [float(v) for v in b],
            })
    doc = {
        "format": POLICY_FORMAT,
        "obs_norm": {"temp_scale": net.temp_scale, "time_scale": net.time_scale},
        "layers": layers,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_policy(path: str | Path) -> PolicyNet:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PolicyFormatError(f"{path}: unreadable policy file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != POLICY_FORMAT:
        found = doc.get("format") if isinstance(doc, dict) else None
        raise PolicyVersionError(f"{path}: expected format {POLICY_FORMAT!r}, found {found!r}")
    try:
        norm = doc["obs_norm"]
        mlps = {"pi": ([], []), "vf": ([], [])}
        for layer in doc["layers"]:
            prefix = layer["name"].split(".")[0]
            rows, cols = int(layer["rows"]), int(layer["cols"])
            w = np.array(layer["weights"], dtype=np.float64)
            b = np.array(layer["bias"], dtype=np.float64)
            if w.size != rows * cols or b.size != rows:
                raise PolicyFormatError(f"{path}: layer {layer['name']} does not match {rows}x{cols}")
            mlps[prefix][0].append(w.reshape(rows, cols))
            mlps[prefix][1].append(b)
        net = PolicyNet(MLP(*mlps["pi"]), MLP(*mlps["vf"]), float(norm["temp_scale"]), float(norm["time_scale"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PolicyFormatError):
            raise
        raise PolicyFormatError(f"{path}: malformed policy file ({exc})") from exc
    expected = {"pi": (OBS_DIM, *HIDDEN, 2), "vf": (OBS_DIM, *HIDDEN, 1)}
    for prefix, mlp in (("pi", net.pi), ("vf", net.vf)):
        sizes = tuple([mlp.weights[0].shape[1]] + [w.shape[0] for w in mlp.weights]) if mlp.weights else ()
        chained = all(mlp.weights[i + 1].shape[1] == mlp.weights[i].shape[0] for i in range(len(mlp.weights) - 1))
        if sizes != expected[prefix] or not chained:
            raise PolicyFormatError(f"{path}: {prefix} layer shapes {sizes} != {expected[prefix]}")
    return net
