"""Finite-dimension Monte Carlo engine.

Episodes are rolled out against a random teacher on the sphere of radius
sqrt(D); the policy-gradient update

    w <- w + (1 / (T sqrt(D))) sum_t y_t x_t G_t,

with G_t the discounted return from step t, is applied after every episode.
Reward magnitudes are folded into the returns, so the effective rates eta1,
eta2 (and beta, r_sub) appear directly in the per-step rewards.

Randomness is counter-based: every seed owns two Philox streams (key =
(seed, 0) for initialisation, (seed, 1) for episodes), and each episode
consumes a fixed count of draws from the episode stream, so runs are
bit-identical for a fixed config and independent across seeds.  The
expected-update oracle keys one stream per fixed-size sample block
(key = (seed, block)), which makes its reduction order, and therefore its
output, independent of how blocks are scheduled.

The hot loops are numba-compiled but generate their variates through the
NumPy Generator API, which numba reproduces bit-for-bit; the pure-NumPy
reference path (run_episode) therefore replays the exact kernel trajectory,
which the test suite exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .core import (
    AllCorrect,
    Breadcrumb,
    EpisodeSpec,
    NOrMore,
    OrderState,
    RewardProtocol,
    Subtask,
    Trajectory,
    check_protocol,
    expected_reward,
)
from .errors import DomainError, InvalidStateError, NumericsError

_STREAM_INIT = 0
_STREAM_EPISODES = 1

# Protocol tags for the jitted kernel.
_PROTO_ALL_CORRECT = 0
_PROTO_N_OR_MORE = 1
_PROTO_BREADCRUMB = 2
_PROTO_SUBTASK = 3

_POLICY_DETERMINISTIC = 0
_POLICY_LOGISTIC = 1

_INPUT_GAUSSIAN = 0
_INPUT_HALF_GAUSSIAN = 1


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitSpec:
    """Initial overlaps; the student is constructed with these exactly."""

    q0: float = 1.0
    rho0: float = 0.0

    def __post_init__(self):
        if self.q0 <= 0.0:
            raise InvalidStateError(f"q0 must be positive, got {self.q0}")
        if not (0.0 <= self.rho0 <= 1.0):
            raise InvalidStateError(f"rho0 must lie in [0, 1], got {self.rho0}")


@dataclass(frozen=True)
class SimConfig:
    D: int
    spec: EpisodeSpec
    protocol: RewardProtocol
    n_episodes: int
    seed: int
    init: InitSpec = field(default_factory=InitSpec)
    record_every: Optional[int] = None
    spherical: bool = False
    policy: str = "deterministic"
    input_mode: str = "gaussian"

    def __post_init__(self):
        if self.D < 2:
            raise DomainError(f"D must be >= 2, got {self.D}")
        if self.n_episodes < 1:
            raise DomainError(f"n_episodes must be >= 1, got {self.n_episodes}")
        if self.policy not in ("deterministic", "logistic"):
            raise DomainError(f"policy must be 'deterministic' or 'logistic', got {self.policy!r}")
        if self.input_mode not in ("gaussian", "half_gaussian"):
            raise DomainError(
                f"input_mode must be 'gaussian' or 'half_gaussian', got {self.input_mode!r}"
            )
        check_protocol(self.protocol, self.spec)

    @property
    def stride(self) -> int:
        if self.record_every is not None:
            if self.record_every < 1:
                raise DomainError("record_every must be >= 1")
            return self.record_every
        return max(1, self.n_episodes // 1000)


def _proto_codes(protocol: RewardProtocol) -> tuple[int, float, float, int]:
    if isinstance(protocol, AllCorrect):
        return _PROTO_ALL_CORRECT, protocol.eta1, protocol.eta2, 0
    if isinstance(protocol, NOrMore):
        return _PROTO_N_OR_MORE, protocol.eta1, 0.0, protocol.n
    if isinstance(protocol, Breadcrumb):
        return _PROTO_BREADCRUMB, protocol.eta1, protocol.beta, 0
    if isinstance(protocol, Subtask):
        return _PROTO_SUBTASK, protocol.eta1, protocol.r_sub, protocol.T0
    raise DomainError(f"unknown protocol {protocol!r}")


def _episode_stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed % 2**64, stream]))


def _block_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed % 2**64, 2 + block]))


# ---------------------------------------------------------------------------
# Jitted episode kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _draw_inputs(gen, X, wstar, T, D, sqrtD, input_mode):  # pragma: no cover - jitted
    if input_mode == _INPUT_GAUSSIAN:
        flat = X.reshape(T * D)
        for i in range(T * D):
            flat[i] = gen.standard_normal()
    else:
        for t in range(T):
            s = 1.0 if gen.random() < 0.5 else -1.0
            row = X[t]
            for d in range(D):
                row[d] = gen.standard_normal()
            proj = np.dot(row, wstar) / D
            if (proj > 0.0) != (s > 0.0):
                for d in range(D):
                    row[d] -= 2.0 * proj * wstar[d]


@njit(cache=True)
def _episode_returns(
    lam, nu, u_act, T, gamma, proto_id, pa, pb, pn, policy, ybuf, cbuf, rbuf, coef, sqrtD
):  # pragma: no cover - jitted
    """Actions, per-step rewards and update coefficients for one episode.

    Returns (episode_reward, any_update).  coef_t = y_t G_t / (T sqrt(D)).
    """
    all_correct = True
    n_correct = 0
    for t in range(T):
        if policy == _POLICY_DETERMINISTIC:
            y = 1.0 if lam[t] > 0.0 else -1.0
        else:
            p_plus = 1.0 / (1.0 + math.exp(-lam[t]))
            y = 1.0 if u_act[t] < p_plus else -1.0
        ybuf[t] = y
        if y * nu[t] > 0.0:
            cbuf[t] = 1.0
            n_correct += 1
        else:
            cbuf[t] = 0.0
            all_correct = False

    for t in range(T):
        rbuf[t] = 0.0
    if proto_id == _PROTO_ALL_CORRECT:
        rbuf[T - 1] = pa if all_correct else -pb
    elif proto_id == _PROTO_N_OR_MORE:
        if n_correct >= pn:
            rbuf[T - 1] = pa
    elif proto_id == _PROTO_BREADCRUMB:
        for t in range(T):
            rbuf[t] = pb * cbuf[t]
        if all_correct:
            rbuf[T - 1] += pa
    else:
        head_ok = True
        for t in range(pn):
            if cbuf[t] == 0.0:
                head_ok = False
                break
        if head_ok:
            rbuf[pn - 1] += pb
        if all_correct:
            rbuf[T - 1] += pa

    ep_reward = 0.0
    for t in range(T):
        ep_reward += rbuf[t]

    G = 0.0
    any_update = False
    for t in range(T - 1, -1, -1):
        G = rbuf[t] + gamma * G
        c = ybuf[t] * G / (T * sqrtD)
        coef[t] = c
        if c != 0.0:
            any_update = True
    return ep_reward, any_update


@njit(cache=True)
def _sim_kernel(
    gen,
    w,
    wstar,
    T,
    D,
    gamma,
    proto_id,
    pa,
    pb,
    pn,
    spherical,
    policy,
    input_mode,
    n_episodes,
    record_every,
    ring,
    out_t,
    out_R,
    out_Q,
    out_emp,
):  # pragma: no cover - jitted
    sqrtD = math.sqrt(D)
    window = ring.shape[0]
    X = np.empty((T, D))
    u_act = np.empty(T)
    ybuf = np.empty(T)
    cbuf = np.empty(T)
    rbuf = np.empty(T)
    coef = np.empty(T)
    n_rec = 0
    for ep in range(n_episodes):
        _draw_inputs(gen, X, wstar, T, D, sqrtD, input_mode)
        lam = np.dot(X, w) / sqrtD
        nu = np.dot(X, wstar) / sqrtD
        if policy == _POLICY_LOGISTIC:
            for t in range(T):
                u_act[t] = gen.random()
        ep_reward, any_update = _episode_returns(
            lam, nu, u_act, T, gamma, proto_id, pa, pb, pn, policy, ybuf, cbuf, rbuf, coef, sqrtD
        )
        if any_update:
            upd = np.dot(coef, X)
            w += upd
            if spherical:
                w *= sqrtD / math.sqrt(np.dot(w, w))
        ring[ep % window] = ep_reward
        if (ep + 1) % record_every == 0:
            Rm = np.dot(w, wstar) / D
            Qm = np.dot(w, w) / D
            if not (math.isfinite(Rm) and math.isfinite(Qm)):
                return -(ep + 1)
            m = window if ep + 1 >= window else ep + 1
            acc = 0.0
            for j in range(m):
                acc += ring[(ep - j) % window]
            out_t[n_rec] = ep + 1
            out_R[n_rec] = Rm
            out_Q[n_rec] = Qm
            out_emp[n_rec] = acc / m
            n_rec += 1
    return n_rec


# ---------------------------------------------------------------------------
# Teacher/student construction
# ---------------------------------------------------------------------------

def _make_teacher_student(config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Teacher uniform on the sqrt(D)-sphere; student built by Gram-Schmidt
    so the initial overlaps equal (rho0*sqrt(q0), q0) exactly."""
    D = config.D
    gen = _episode_stream(config.seed, _STREAM_INIT)
    sqrtD = math.sqrt(D)

    v = gen.standard_normal(D)
    teacher = v * (sqrtD / np.linalg.norm(v))
    unit_t = teacher / sqrtD

    v2 = gen.standard_normal(D)
    e_perp = v2 - np.dot(v2, unit_t) * unit_t
    norm = np.linalg.norm(e_perp)
    if norm < 1e-12:  # astronomically unlikely; redraw deterministically
        v2 = gen.standard_normal(D)
        e_perp = v2 - np.dot(v2, unit_t) * unit_t
        norm = np.linalg.norm(e_perp)
    e_perp /= norm

    c1 = config.init.rho0 * math.sqrt(config.init.q0)
    c2 = math.sqrt(max(config.init.q0 - c1 * c1, 0.0))
    student = sqrtD * (c1 * unit_t + c2 * e_perp)
    return student, teacher


# ---------------------------------------------------------------------------
# Reference single-episode rollout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeRecord:
    reward: float
    n_correct: int
    all_correct: bool


def run_episode(
    weights: np.ndarray,
    teacher: np.ndarray,
    spec: EpisodeSpec,
    protocol: RewardProtocol,
    rng: np.random.Generator,
    *,
    policy: str = "deterministic",
    input_mode: str = "gaussian",
    episode_index: Optional[int] = None,
) -> tuple[np.ndarray, EpisodeRecord]:
    """Roll out one episode and return the weight update without applying it.

    Pure NumPy twin of the compiled kernel: given the same generator state it
    consumes the identical variate sequence and reproduces its arithmetic.
    """
    D = weights.shape[0]
    T = spec.T
    check_protocol(protocol, spec)
    if not np.all(np.isfinite(weights)):
        where = f" at episode {episode_index}" if episode_index is not None else ""
        raise NumericsError(f"non-finite student weights{where}")
    sqrtD = math.sqrt(D)

    if input_mode == "gaussian":
        X = rng.standard_normal((T, D))
    elif input_mode == "half_gaussian":
        X = np.empty((T, D))
        for t in range(T):
            s = 1.0 if rng.random() < 0.5 else -1.0
            row = rng.standard_normal(D)
            proj = np.dot(row, teacher) / D
            if (proj > 0.0) != (s > 0.0):
                row = row - 2.0 * proj * teacher
            X[t] = row
    else:
        raise DomainError(f"unknown input_mode {input_mode!r}")

    lam = np.dot(X, weights) / sqrtD
    nu = np.dot(X, teacher) / sqrtD
    if policy == "deterministic":
        y = np.where(lam > 0.0, 1.0, -1.0)
    elif policy == "logistic":
        u = rng.random(T)
        y = np.where(u < 1.0 / (1.0 + np.exp(-lam)), 1.0, -1.0)
    else:
        raise DomainError(f"unknown policy {policy!r}")

    correct = (y * nu) > 0.0
    n_correct = int(correct.sum())
    all_correct = bool(correct.all())

    rewards = np.zeros(T)
    if isinstance(protocol, AllCorrect):
        rewards[T - 1] = protocol.eta1 if all_correct else -protocol.eta2
    elif isinstance(protocol, NOrMore):
        if n_correct >= protocol.n:
            rewards[T - 1] = protocol.eta1
    elif isinstance(protocol, Breadcrumb):
        rewards = protocol.beta * correct.astype(float)
        if all_correct:
            rewards[T - 1] += protocol.eta1
    elif isinstance(protocol, Subtask):
        if bool(correct[: protocol.T0].all()):
            rewards[protocol.T0 - 1] += protocol.r_sub
        if all_correct:
            rewards[T - 1] += protocol.eta1
    else:
        raise DomainError(f"unknown protocol {protocol!r}")

    G = np.empty(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        acc = rewards[t] + spec.gamma * acc
        G[t] = acc
    coef = y * G / (T * sqrtD)
    delta_w = np.dot(coef, X)
    return delta_w, EpisodeRecord(
        reward=float(rewards.sum()), n_correct=n_correct, all_correct=all_correct
    )


# ---------------------------------------------------------------------------
# Full simulation
# ---------------------------------------------------------------------------

def simulate(config: SimConfig) -> Trajectory:
    """Run the configured number of episodes and log order parameters.

    Logged R and Q are measured directly from the weight vectors.  The
    empirical reward column is a trailing mean over max(1000, D) episodes;
    per-episode rewards are too sparse to plot raw.
    """
    w, teacher = _make_teacher_student(config)
    proto_id, pa, pb, pn = _proto_codes(config.protocol)
    stride = config.stride
    n_rows = config.n_episodes // stride
    out_t = np.empty(n_rows)
    out_R = np.empty(n_rows)
    out_Q = np.empty(n_rows)
    out_emp = np.empty(n_rows)
    ring = np.zeros(max(1000, config.D))
    gen = _episode_stream(config.seed, _STREAM_EPISODES)

    n_rec = _sim_kernel(
        gen,
        w,
        teacher,
        config.spec.T,
        config.D,
        config.spec.gamma,
        proto_id,
        pa,
        pb,
        pn,
        config.spherical,
        _POLICY_DETERMINISTIC if config.policy == "deterministic" else _POLICY_LOGISTIC,
        _INPUT_GAUSSIAN if config.input_mode == "gaussian" else _INPUT_HALF_GAUSSIAN,
        config.n_episodes,
        stride,
        ring,
        out_t,
        out_R,
        out_Q,
        out_emp,
    )
    if n_rec < 0:
        raise NumericsError(f"non-finite student weights at episode {-n_rec}")

    # Initial row, then one row per record point.
    R0 = config.init.rho0 * math.sqrt(config.init.q0)
    t_col = np.concatenate(([0.0], out_t[:n_rec]))
    R_col = np.concatenate(([R0], out_R[:n_rec]))
    Q_col = np.concatenate(([config.init.q0], out_Q[:n_rec]))
    emp_col = np.concatenate(([np.nan], out_emp[:n_rec]))

    rho_col = np.clip(R_col / np.sqrt(Q_col), -1.0, 1.0)
    eps_col = np.arccos(rho_col) / np.pi
    reward_col = np.array(
        [expected_reward(config.protocol, config.spec, float(r)) for r in rho_col]
    )
    return Trajectory(
        alpha=t_col / config.D,
        t=t_col,
        R=R_col,
        Q=Q_col,
        rho=rho_col,
        eps_g=eps_col,
        expected_reward=reward_col,
        empirical_reward=emp_col,
        meta={
            "engine": "sim",
            "seed": config.seed,
            "D": config.D,
            "final_weights_checksum": float(np.sum(w)),
        },
    )


# ---------------------------------------------------------------------------
# Expected-update oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleEstimate:
    """Monte Carlo estimates of the expected one-episode update, scaled by D.

    dR/dQ/drho are the means of D*DeltaR, D*DeltaQ (including the quadratic
    term of the squared update) and D*Delta(rho); reward is the mean total
    episode return.  Each comes with its standard error.
    """

    dR: float
    dR_se: float
    dQ: float
    dQ_se: float
    drho: float
    drho_se: float
    reward: float
    reward_se: float
    n_samples: int


_ORACLE_BLOCK = 1024


@njit(cache=True)
def _fill_normal(gen, out):  # pragma: no cover - jitted
    flat = out.reshape(out.size)
    for i in range(out.size):
        flat[i] = gen.standard_normal()


def _block_rewards(
    correct: np.ndarray, protocol: RewardProtocol, T: int
) -> np.ndarray:
    B = correct.shape[0]
    rewards = np.zeros((B, T))
    if isinstance(protocol, AllCorrect):
        allc = correct.all(axis=1)
        rewards[:, T - 1] = np.where(allc, protocol.eta1, -protocol.eta2)
    elif isinstance(protocol, NOrMore):
        rewards[:, T - 1] = protocol.eta1 * (correct.sum(axis=1) >= protocol.n)
    elif isinstance(protocol, Breadcrumb):
        rewards = protocol.beta * correct.astype(float)
        rewards[:, T - 1] += protocol.eta1 * correct.all(axis=1)
    elif isinstance(protocol, Subtask):
        rewards[:, protocol.T0 - 1] = protocol.r_sub * correct[:, : protocol.T0].all(axis=1)
        rewards[:, T - 1] += protocol.eta1 * correct.all(axis=1)
    else:
        raise DomainError(f"unknown protocol {protocol!r}")
    return rewards


def expected_update_oracle(
    state: OrderState,
    spec: EpisodeSpec,
    protocol: RewardProtocol,
    D: int = 1000,
    n_samples: int = 1_000_000,
    seed: int = 0,
    *,
    input_mode: str = "gaussian",
) -> OracleEstimate:
    """Monte Carlo estimate of the expected order-parameter update.

    A fixed (teacher, student) pair with exactly the requested overlaps is
    probed with independent single episodes; no update is ever applied, so
    the estimate is an independent check of the closed-form flow at `state`.
    By input isotropy the pair can sit in a coordinate plane: teacher
    sqrt(D)*e0, student spanned by (e0, e1).
    """
    check_protocol(protocol, spec)
    if n_samples < 1000:
        raise DomainError(f"n_samples must be >= 1000, got {n_samples}")
    if input_mode not in ("gaussian", "half_gaussian"):
        raise DomainError(f"unknown input_mode {input_mode!r}")
    T = spec.T
    R, Q = state.R, state.Q
    sqrtD = math.sqrt(D)

    wstar = np.zeros(D)
    wstar[0] = sqrtD
    w = np.zeros(D)
    w[0] = R * sqrtD
    w[1] = math.sqrt(max(Q - R * R, 0.0)) * sqrtD
    pair = np.stack([w, wstar], axis=1)  # one GEMM gives both fields

    rho0 = state.rho
    sums = np.zeros(4)
    sq_sums = np.zeros(4)
    done = 0
    block_idx = 0
    X = np.empty((_ORACLE_BLOCK, T, D))
    while done < n_samples:
        B = min(_ORACLE_BLOCK, n_samples - done)
        gen = _block_stream(seed, block_idx)
        Xb = X[:B]
        _fill_normal(gen, Xb)
        if input_mode == "half_gaussian":
            # Teacher is sqrt(D)*e0: reflecting across its hyperplane just
            # flips the first coordinate.
            signs = np.where(gen.random((B, T)) < 0.5, 1.0, -1.0)
            x0 = Xb[:, :, 0]
            flip = (x0 > 0.0) != (signs > 0.0)
            x0[flip] = -x0[flip]

        fields = (Xb.reshape(B * T, D) @ pair).reshape(B, T, 2) / sqrtD
        lam = fields[:, :, 0]
        nu = fields[:, :, 1]
        y = np.where(lam > 0.0, 1.0, -1.0)
        correct = (y * nu) > 0.0
        rewards = _block_rewards(correct, protocol, T)

        G = np.empty((B, T))
        acc = np.zeros(B)
        for t in range(T - 1, -1, -1):
            acc = rewards[:, t] + spec.gamma * acc
            G[:, t] = acc
        coef = y * G / (T * sqrtD)

        s1 = (y * nu * G).sum(axis=1) / T          # D * DeltaR
        s2 = (y * lam * G).sum(axis=1) / T         # w . Delta w
        dq = 2.0 * s2
        mask = np.any(coef != 0.0, axis=1)
        if mask.any():
            V = (coef[mask][:, None, :] @ Xb[mask])[:, 0, :]
            dq[mask] += (V * V).sum(axis=1)

        rho1 = (R + s1 / D) / np.sqrt(Q + dq / D)
        drho = (rho1 - rho0) * D
        ep_reward = rewards.sum(axis=1)

        for k, col in enumerate((s1, dq, drho, ep_reward)):
            sums[k] += col.sum()
            sq_sums[k] += (col * col).sum()
        done += B
        block_idx += 1

    means = sums / done
    variances = np.maximum(sq_sums / done - means**2, 0.0) * done / (done - 1)
    ses = np.sqrt(variances / done)
    return OracleEstimate(
        dR=means[0],
        dR_se=ses[0],
        dQ=means[1],
        dQ_se=ses[1],
        drho=means[2],
        drho_se=ses[2],
        reward=means[3],
        reward_se=ses[3],
        n_samples=done,
    )


# ---------------------------------------------------------------------------
# Logistic-policy comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticCheckReport:
    """Alignment of the exact logistic-policy gradient with its small-field
    surrogates, as cosines of mean update vectors.

    cosine: exact gradient versus the unweighted y x G update evaluated on
    the same sampled actions (the surrogate whose proportionality the
    small-field expansion predicts: sigma(-y lam) -> 1/2).
    cosine_sign_policy: exact gradient versus the deterministic sign-policy
    update on the same inputs.  At rho = 0 the sign-policy mean picks up a
    self-alignment component along the student that a sampled policy cannot,
    so this cosine sits near 1/sqrt(2) rather than 1; reported, never
    thresholded.
    """

    cosine: float
    cosine_sign_policy: float
    naive_norm: float
    reinforce_norm: float
    sign_policy_norm: float
    n_samples: int


def logistic_policy_check(
    state: OrderState,
    D: int = 100,
    n_samples: int = 100_000,
    seed: int = 0,
    *,
    spec: EpisodeSpec = EpisodeSpec(T=2),
    protocol: RewardProtocol = AllCorrect(eta1=1.0, eta2=0.0),
) -> LogisticCheckReport:
    """Compare mean update directions under the sampled logistic policy.

    All estimators share the same input batches (paired comparison).  The
    small-field proportionality only holds for Q <~ 1, which is enforced;
    outside the tiny-Q regime the report is still produced, just with no
    guarantee of alignment.
    """
    if state.Q > 1.0 + 1e-12:
        raise DomainError(f"small-field regime requires Q <= 1, got Q = {state.Q}")
    check_protocol(protocol, spec)
    T = spec.T
    R, Q = state.R, state.Q
    sqrtD = math.sqrt(D)

    wstar = np.zeros(D)
    wstar[0] = sqrtD
    w = np.zeros(D)
    w[0] = R * sqrtD
    w[1] = math.sqrt(max(Q - R * R, 0.0)) * sqrtD
    pair = np.stack([w, wstar], axis=1)

    v_naive = np.zeros(D)
    v_rf = np.zeros(D)
    v_sign = np.zeros(D)
    done = 0
    block_idx = 0
    while done < n_samples:
        B = min(_ORACLE_BLOCK, n_samples - done)
        gen = _block_stream(seed, block_idx)
        Xb = np.empty((B, T, D))
        _fill_normal(gen, Xb)
        u = gen.random((B, T))

        fields = (Xb.reshape(B * T, D) @ pair).reshape(B, T, 2) / sqrtD
        lam = fields[:, :, 0]
        nu = fields[:, :, 1]

        def total_update(y: np.ndarray, grad_scale) -> np.ndarray:
            correct = (y * nu) > 0.0
            rewards = _block_rewards(correct, protocol, T)
            G = np.empty((B, T))
            acc = np.zeros(B)
            for t in range(T - 1, -1, -1):
                acc = rewards[:, t] + spec.gamma * acc
                G[:, t] = acc
            coef = y * grad_scale * G / (T * sqrtD)
            return coef.reshape(B * T) @ Xb.reshape(B * T, D)

        p_plus = 1.0 / (1.0 + np.exp(-lam))
        y_log = np.where(u < p_plus, 1.0, -1.0)
        # d/dw log pi(y|x) = y x sigma(-y lam) / sqrt(D)
        v_rf += total_update(y_log, 1.0 / (1.0 + np.exp(y_log * lam)))
        v_naive += total_update(y_log, 1.0)
        v_sign += total_update(np.where(lam > 0.0, 1.0, -1.0), 1.0)

        done += B
        block_idx += 1

    def cosine_of(a: np.ndarray, b: np.ndarray) -> float:
        na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
        return float(a @ b / (na * nb)) if na > 0.0 and nb > 0.0 else 0.0

    return LogisticCheckReport(
        cosine=cosine_of(v_rf, v_naive),
        cosine_sign_policy=cosine_of(v_rf, v_sign),
        naive_norm=float(np.linalg.norm(v_naive)) / done,
        reinforce_norm=float(np.linalg.norm(v_rf)) / done,
        sign_policy_norm=float(np.linalg.norm(v_sign)) / done,
        n_samples=done,
    )
