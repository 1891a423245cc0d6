"""Soft actor-critic learner: twin critics, Polyak targets, entropy tuning.

The learner sees normalized states in [-1,1]^(2F+1) and emits normalized
actions in [-1,1]^(action_dim); the codec turns those into discrete system
actions. Stored transitions hold the learner's own continuous action, while
environment effects always come from the corrected discrete action.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint as ckpt
from .codec import (FULL_ACTION_SPACE, ActionMask, NormalizationSpec,
                    correct, quantize)
from .env import (SystemConfig, TransitionModel, initial_state,
                  sample_request_trace, step)
from .nets import DenseNet, GaussianPolicy, make_optimizer


class TrainingDiverged(RuntimeError):
    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class SacHyper:
    hidden: int = 256
    lr: float = 1e-4
    alpha_lr: float | None = None          # None: same as lr
    batch_size: int = 256
    buffer_capacity: int = 10_000_000
    polyak: float = 0.005                  # xi
    target_update_interval: int = 1        # gradient steps per target blend
    optimizer: str = "adam"                # "adam" | "sgd"
    alpha_init: float = 1.0
    target_entropy: float | None = None    # None: -action_dim


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    steps_per_epoch: int = 1000   # one epoch = 1000 environment steps
    eval_every: int = 10          # training epochs between evaluation blocks
    eval_epochs: int = 10         # epochs per evaluation block (0: skip)


class SacAgent:
    """Twin-critic SAC with automatic entropy-temperature tuning."""

    def __init__(self, state_dim: int, action_dim: int, hyper: SacHyper,
                 discount: float, seed=0):
        if not 0.0 <= hyper.polyak <= 1.0:
            raise ValueError("polyak weight must lie in [0, 1]")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hyper = hyper
        self.discount = discount
        root = seed if isinstance(seed, np.random.SeedSequence) \
            else np.random.SeedSequence(seed)
        init_seq, eps_seq = root.spawn(2)
        init_rng = np.random.default_rng(init_seq)
        self._eps_rng = np.random.default_rng(eps_seq)

        h = hyper.hidden
        qdims = [state_dim + action_dim, h, h, 1]
        qacts = ["relu", "relu", "linear"]
        self.policy = GaussianPolicy(state_dim, action_dim, h, init_rng)
        self.q1 = DenseNet(qdims, qacts, init_rng, final_scale=3e-3)
        self.q2 = DenseNet(qdims, qacts, init_rng, final_scale=3e-3)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()

        self.log_alpha = np.array([math.log(hyper.alpha_init)])
        self.target_entropy = (hyper.target_entropy
                               if hyper.target_entropy is not None
                               else -float(action_dim))

        lr = hyper.lr
        alpha_lr = hyper.alpha_lr if hyper.alpha_lr is not None else lr
        self.policy_opt = make_optimizer(hyper.optimizer, self.policy.params(), lr)
        self.q1_opt = make_optimizer(hyper.optimizer, self.q1.params(), lr)
        self.q2_opt = make_optimizer(hyper.optimizer, self.q2.params(), lr)
        self.alpha_opt = make_optimizer(hyper.optimizer, [self.log_alpha], alpha_lr)
        self.update_count = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def act(self, state_vec: np.ndarray, rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        x = np.asarray(state_vec, dtype=float)[None, :]
        if deterministic:
            return self.policy.deterministic(x)[0]
        rng = rng if rng is not None else self._eps_rng
        eps = rng.standard_normal((1, self.action_dim))
        action, _, _ = self.policy.sample(x, eps)
        return action[0]

    # -- losses -----------------------------------------------------------

    def compute_target(self, batch, eps: np.ndarray | None = None,
                       record: dict | None = None) -> np.ndarray:
        """Soft one-step target r + gamma * (min_i Qt_i(x', a') - alpha log pi)."""
        x2 = batch["next_states"]
        if eps is None:
            eps = self._eps_rng.standard_normal((x2.shape[0], self.action_dim))
        a2, logp2, _ = self.policy.sample(x2, eps)
        inp = np.concatenate([x2, a2], axis=1)
        q1t, _ = self.q1_target.forward(inp)
        q2t, _ = self.q2_target.forward(inp)
        qmin = np.minimum(q1t, q2t)
        value = qmin - self.alpha * logp2[:, None]
        y = batch["rewards"][:, None] + self.discount * value
        if record is not None:
            record.update({"q1_target": q1t, "q2_target": q2t, "min": qmin,
                           "log_prob": logp2, "target": y})
        return y

    def critic_losses_and_grads(self, batch, target: np.ndarray | None = None):
        """Per-critic soft Bellman residuals and their parameter gradients."""
        if batch["states"].shape[0] == 0:
            raise ValueError("empty batch")
        if target is None:
            target = self.compute_target(batch)
        inp = np.concatenate([batch["states"], batch["actions"]], axis=1)
        n = inp.shape[0]
        out = []
        for net in (self.q1, self.q2):
            q, cache = net.forward(inp)
            residual = q - target
            loss = float(0.5 * np.mean(residual ** 2))
            _, grads = net.backward(cache, residual / n)
            out.append((loss, grads))
        return out

    def actor_loss_and_grads(self, batch, eps: np.ndarray | None = None):
        """KL-style policy objective with the reparameterized pathwise grad."""
        x = batch["states"]
        n = x.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        if eps is None:
            eps = self._eps_rng.standard_normal((n, self.action_dim))
        action, logp, cache = self.policy.sample(x, eps)
        inp = np.concatenate([x, action], axis=1)
        q1, c1 = self.q1.forward(inp)
        q2, c2 = self.q2.forward(inp)
        qmin = np.minimum(q1, q2)
        loss = float(np.mean(self.alpha * logp - qmin[:, 0]))
        pick1 = (q1 <= q2).astype(float)
        dx1, _ = self.q1.backward(c1, -pick1 / n)
        dx2, _ = self.q2.backward(c2, -(1.0 - pick1) / n)
        d_action = (dx1 + dx2)[:, self.state_dim:]
        d_logp = np.full(n, self.alpha / n)
        grads = self.policy.backward_sample(cache, d_action, d_logp)
        return loss, grads, logp

    def temperature_update(self, log_prob: np.ndarray) -> float:
        """Gradient step on J(alpha) = E[-alpha (log pi + target entropy)]."""
        grad = -self.alpha * float(np.mean(log_prob + self.target_entropy))
        self.alpha_opt.step([self.log_alpha], [np.array([grad])])
        return self.alpha

    def soft_target_update(self) -> None:
        xi = self.hyper.polyak
        for online, target in ((self.q1, self.q1_target),
                               (self.q2, self.q2_target)):
            for p, pt in zip(online.params(), target.params()):
                pt *= 1.0 - xi
                pt += xi * p

    def update(self, batch) -> dict[str, float]:
        """One gradient step on critics, actor, and temperature."""
        (loss1, grads1), (loss2, grads2) = self.critic_losses_and_grads(batch)
        self.q1_opt.step(self.q1.params(), grads1)
        self.q2_opt.step(self.q2.params(), grads2)
        actor_loss, policy_grads, logp = self.actor_loss_and_grads(batch)
        self.policy_opt.step(self.policy.params(), policy_grads)
        self.temperature_update(logp)
        self.update_count += 1
        if self.update_count % self.hyper.target_update_interval == 0:
            self.soft_target_update()
        return {"critic_loss": 0.5 * (loss1 + loss2),
                "actor_loss": actor_loss, "alpha": self.alpha}

    # -- persistence ------------------------------------------------------

    def _named_nets(self):
        return {"policy": self.policy.params(),
                "q1": self.q1.params(), "q2": self.q2.params(),
                "q1_target": self.q1_target.params(),
                "q2_target": self.q2_target.params()}

    def to_tensors(self) -> dict[str, np.ndarray]:
        tensors = {"log_alpha": self.log_alpha.copy(),
                   "update_count": np.array([float(self.update_count)])}
        for net_name, params in self._named_nets().items():
            for i, p in enumerate(params):
                tensors[f"{net_name}/p{i}"] = p
        for opt_name, opt in (("policy", self.policy_opt), ("q1", self.q1_opt),
                              ("q2", self.q2_opt), ("alpha", self.alpha_opt)):
            for key, val in opt.state_tensors().items():
                tensors[f"opt/{opt_name}/{key}"] = val
        return tensors

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.log_alpha[...] = tensors["log_alpha"]
        self.update_count = int(tensors["update_count"][0])
        for net_name, params in self._named_nets().items():
            for i, p in enumerate(params):
                p[...] = tensors[f"{net_name}/p{i}"]
        for opt_name, opt in (("policy", self.policy_opt), ("q1", self.q1_opt),
                              ("q2", self.q2_opt), ("alpha", self.alpha_opt)):
            prefix = f"opt/{opt_name}/"
            state = {k[len(prefix):]: v for k, v in tensors.items()
                     if k.startswith(prefix)}
            opt.load_state_tensors(state)


def save_agent(path, agent: SacAgent, manifest: dict) -> None:
    """Binary tensors at <path>, JSON manifest at <path>.manifest.json."""
    ckpt.save_tensors(path, agent.to_tensors())
    payload = dict(manifest)
    payload.setdefault("alpha", agent.alpha)
    payload["state_dim"] = agent.state_dim
    payload["action_dim"] = agent.action_dim
    payload["hidden"] = agent.hyper.hidden
    payload["rng_state"] = _rng_state_json(agent._eps_rng)
    with open(str(path) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)


def load_agent(path, hyper: SacHyper, discount: float, seed=0) -> tuple[SacAgent, dict]:
    with open(str(path) + ".manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    hyper = replace(hyper, hidden=int(manifest["hidden"]))
    agent = SacAgent(int(manifest["state_dim"]), int(manifest["action_dim"]),
                     hyper, discount, seed=seed)
    agent.load_tensors(ckpt.load_tensors(path))
    return agent, manifest


def _rng_state_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


# -- training loop ---------------------------------------------------------

METRICS_COLUMNS = ["epoch", "train_reward", "eval_reward", "critic_loss",
                   "actor_loss", "alpha"]


@dataclass
class TrainResult:
    agent: SacAgent
    metrics: list[list]           # rows matching METRICS_COLUMNS
    final_state: object
    normalizer: NormalizationSpec
    buffer: object = None


def train(config: SystemConfig, model: TransitionModel,
          schedule: TrainSchedule, hyper: SacHyper = SacHyper(),
          mask: ActionMask = FULL_ACTION_SPACE, seed=0,
          initial_agent: SacAgent | None = None,
          action_dump: list | None = None,
          divergence_checkpoint: str | None = None) -> TrainResult:
    """Run the environment/gradient loop and collect per-epoch metrics.

    One gradient step per environment step once the buffer can fill a
    batch. Evaluation blocks run the deterministic policy on a separate
    seeded trace and contribute the eval_reward column (averaged over the
    block, reported on its last training epoch).
    """
    root = np.random.SeedSequence(seed)
    agent_seq, rollout_seq, buffer_seq, trace_seq, eval_seq = root.spawn(5)

    norm = NormalizationSpec.for_config(config)
    action_dim = mask.action_dim(config.num_tasks)
    agent = initial_agent if initial_agent is not None else SacAgent(
        norm.state_dim, action_dim, hyper, config.discount, seed=agent_seq)
    if agent.action_dim != action_dim or agent.state_dim != norm.state_dim:
        raise ValueError("agent dimensions do not match config/mask")

    from .replay import ReplayBuffer
    buffer = ReplayBuffer(hyper.buffer_capacity, norm.state_dim, action_dim,
                          seed=np.random.default_rng(buffer_seq))
    rollout_rng = np.random.default_rng(rollout_seq)
    eval_rng = np.random.default_rng(eval_seq)

    total_steps = schedule.epochs * schedule.steps_per_epoch
    trace = sample_request_trace(model, total_steps + 1, np.random.default_rng(trace_seq))
    state = initial_state(config, int(trace[0])) if total_steps else None

    metrics: list[list] = []
    x = norm.normalize_state(state) if state is not None else None
    for epoch in range(schedule.epochs):
        snr = model.snr_at(epoch)
        reward_sum = 0.0
        critic_sum = actor_sum = 0.0
        update_n = 0
        for s in range(schedule.steps_per_epoch):
            t = epoch * schedule.steps_per_epoch + s
            a_vec = agent.act(x, rng=rollout_rng)
            cont = norm.denormalize_action(a_vec, mask)
            quantized = quantize(cont, config)
            corrected = correct(state, quantized, cont, config, mask)
            if action_dump is not None:
                action_dump.append((t, state, quantized, corrected))
            next_state, costs = step(state, corrected, snr,
                                     int(trace[t + 1]), config)
            x2 = norm.normalize_state(next_state)
            buffer.add(x, a_vec, costs.reward, x2)
            reward_sum += costs.reward
            if len(buffer) >= hyper.batch_size:
                stats = agent.update(buffer.sample(hyper.batch_size))
                if not (math.isfinite(stats["critic_loss"])
                        and math.isfinite(stats["actor_loss"])):
                    path = divergence_checkpoint or "diverged.ckpt"
                    save_agent(path, agent, {"epoch": epoch, "reason": "nan-loss"})
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} step {s}", path)
                critic_sum += stats["critic_loss"]
                actor_sum += stats["actor_loss"]
                update_n += 1
            state, x = next_state, x2

        eval_reward = ""
        if (schedule.eval_epochs > 0 and schedule.eval_every > 0
                and (epoch + 1) % schedule.eval_every == 0):
            eval_steps = schedule.eval_epochs * schedule.steps_per_epoch
            result = evaluate_agent(agent, config, model, snr, eval_steps,
                                    seed=eval_rng, mask=mask)
            eval_reward = repr(result["mean_reward"])
        metrics.append([
            epoch + 1,
            repr(reward_sum / schedule.steps_per_epoch),
            eval_reward,
            repr(critic_sum / update_n) if update_n else "",
            repr(actor_sum / update_n) if update_n else "",
            repr(agent.alpha),
        ])

    return TrainResult(agent=agent, metrics=metrics, final_state=state,
                       normalizer=norm, buffer=buffer)


def evaluate_agent(agent: SacAgent, config: SystemConfig,
                   model: TransitionModel, snr: float, steps: int, seed=0,
                   mask: ActionMask = FULL_ACTION_SPACE,
                   collect: list | None = None) -> dict[str, float]:
    """Deterministic-policy rollout; returns per-step mean costs.

    With `collect` supplied, appends (t, state, action, costs) tuples for
    trace export.
    """
    norm = NormalizationSpec.for_config(config)
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    trace = sample_request_trace(model, steps + 1, rng)
    state = initial_state(config, int(trace[0])) if steps else None
    sums = {"bandwidth": 0.0, "energy": 0.0, "weighted_cost": 0.0, "reward": 0.0}
    for t in range(steps):
        x = norm.normalize_state(state)
        a_vec = agent.act(x, deterministic=True)
        cont = norm.denormalize_action(a_vec, mask)
        corrected = correct(state, quantize(cont, config), cont, config, mask)
        next_state, costs = step(state, corrected, snr, int(trace[t + 1]), config)
        if collect is not None:
            collect.append((t, state, corrected, costs))
        sums["bandwidth"] += costs.bandwidth
        sums["energy"] += costs.energy
        sums["weighted_cost"] += costs.weighted_cost
        sums["reward"] += costs.reward
        state = next_state
    n = max(steps, 1)
    return {"mean_bandwidth": sums["bandwidth"] / n,
            "mean_energy": sums["energy"] / n,
            "mean_weighted_cost": sums["weighted_cost"] / n,
            "mean_reward": sums["reward"] / n,
            "steps": steps}
