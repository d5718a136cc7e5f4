"""Decentralized dUCB4: agents, broadcast medium, negotiation and interrupt phases.

Time is divided into frames of ``L`` slots. A frame is a decision frame when
the shared epoch counter ``eta`` is a power of two, otherwise an exploitation
frame. In a decision frame every agent recomputes its own indices, the agents
run the auction over a broadcast control channel (negotiation phase, ``J``
subframes of ``M`` slots) and then signal changed allocations (interrupt phase,
``M`` slots). Any interrupt resets every agent's ``eta`` to 1. Players keep
playing their matched arms on the data channels in every slot, so rewards
accrue in decision frames too; each decision frame is charged ``C(eps)``.

Agents never read each other's statistics: a decision depends only on an
agent's own rewards and on the public packet transcript.
"""

from __future__ import annotations

import copy
import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .arms import MarkovArm, pair_stream
from .matching import AuctionState, Bid, apply_round, brute_force_matching, compute_bid
from .policy import CostModel, IndexSpec, PlayerStats, PreconditionError, Schedule, index_vector, schedule_value
from .trace import RegretTrace, SlotLog, geometric_grid

log = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    """Agents disagree on public state (cannot happen over a lossless medium)."""


# ---------------------------------------------------------------- medium


class SlotKind(enum.Enum):
    IDLE = "idle"
    SUCCESS = "success"
    COLLISION = "collision"


@dataclass(frozen=True)
class Observation:
    """What every listener hears on one channel in one slot."""

    kind: SlotKind
    payload: object = None
    sender: int | None = None


class BroadcastMedium:
    """Shared control channel; one transmission per slot is heard by everyone.

    Two or more simultaneous transmissions are heard as a collision. Set
    ``record=True`` to keep the slot-by-slot transcript (see :meth:`dump`).
    """

    def __init__(self, record: bool = False):
        self.record = record
        self.slots = 0
        self.transcript: list[dict] = []

    def slot(self, transmissions: Sequence[tuple[int, object]], phase: str = "") -> Observation:
        if not transmissions:
            obs = Observation(SlotKind.IDLE)
        elif len(transmissions) == 1:
            sender, payload = transmissions[0]
            obs = Observation(SlotKind.SUCCESS, payload, sender)
        else:
            obs = Observation(SlotKind.COLLISION)
        if self.record:
            self.transcript.append(
                {"slot": self.slots, "phase": phase, "kind": obs.kind.value, "sender": obs.sender,
                 "payload": _jsonable(obs.payload)}
            )
        self.slots += 1
        return obs

    def dump(self, path) -> None:
        """Write the recorded transcript as one JSON object per line."""
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.transcript:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


# ---------------------------------------------------------------- packets


class PacketCodec:
    """Negotiation packet formats.

    ``physical``
        An integer codeword: ``ceil(log2 N)`` bits of arm id followed by an
        unsigned fixed-point bid with ``int_bits`` integer bits and
        ``ceil(log2(1/eps1))`` fractional bits. Bids are floored to the
        fractional quantum, but never below one quantum so that every bid
        still raises a price. Bids beyond the representable range saturate.
    ``packetized``
        The exact ``(player, arm, bid)`` tuple.
    """

    def __init__(self, mode: str, N: int, eps1: float = 0.0, int_bits: int = 8):
        if mode not in ("physical", "packetized"):
            raise ValueError(f"unknown negotiation mode {mode!r}")
        self.mode = mode
        self.N = N
        self.arm_bits = math.ceil(math.log2(N)) if N > 1 else 0
        if mode == "physical":
            if not 0 < eps1 < 1:
                raise ValueError("physical mode needs a bid precision 0 < eps1 < 1")
            self.frac_bits = math.ceil(math.log2(1.0 / eps1))
            self.int_bits = int(int_bits)
            self.bid_bits = self.frac_bits + self.int_bits
            self.quantum = 2.0 ** -self.frac_bits
            self.max_code = (1 << self.bid_bits) - 1
        else:
            self.frac_bits = self.int_bits = self.bid_bits = 0
            self.quantum = 0.0
            self.max_code = 0
        self.saturated = 0

    @property
    def width(self) -> int:
        return self.arm_bits + self.bid_bits

    def quantize_bid(self, bid: float) -> float:
        if self.mode == "packetized":
            return float(bid)
        return self._code(bid) * self.quantum

    def _code(self, bid: float) -> int:
        k = max(1, math.floor(bid / self.quantum))
        if k > self.max_code:
            self.saturated += 1
            log.warning("bid %.6g exceeds the %d-bit field; saturating", bid, self.bid_bits)
            k = self.max_code
        return k

    def encode(self, player: int, arm: int, bid: float):
        if self.mode == "packetized":
            return (int(player), int(arm), float(bid))
        return (int(arm) << self.bid_bits) | self._code(bid)

    def decode(self, payload, sender: int) -> Bid:
        if self.mode == "packetized":
            player, arm, bid = payload
            return Bid(int(player), int(arm), float(bid))
        arm = payload >> self.bid_bits
        code = payload & ((1 << self.bid_bits) - 1)
        return Bid(int(sender), int(arm), code * self.quantum)


# ---------------------------------------------------------------- agents


class PlayerAgent:
    """One player: private arms, private statistics, local copy of public state."""

    def __init__(self, pid: int, arms: Sequence, spec: IndexSpec, seed: int):
        self.pid = pid
        self.arms = [copy.deepcopy(a) for a in arms]
        self.streams = [pair_stream(seed, pid, j) for j in range(len(self.arms))]
        self.stats = PlayerStats(len(self.arms))
        self.spec = spec
        self.match: int | None = None
        self.values: np.ndarray | None = None
        self.view: AuctionState | None = None
        self.eta = 1

    def refresh_values(self, t: float) -> np.ndarray:
        """Recompute own indices (own-play clock) and quantize them."""
        self.values = index_vector(self.stats, self.spec, t, quantized=True)
        self.stats.index = self.values
        return self.values

    def play(self, arm: int, n: int) -> np.ndarray:
        r = self.arms[arm].sample(self.streams[arm], n)
        self.stats.update(arm, r)
        return r


def initialization_rotation(M: int, N: int) -> list[tuple[int, ...]]:
    """``N`` matchings; matching ``r`` sends player ``i`` to arm ``(i + r) mod N``."""
    if M > N or M < 1:
        raise PreconditionError(f"need 1 <= M <= N, got M={M}, N={N}")
    return [tuple((i + r) % N for i in range(M)) for r in range(N)]


@dataclass
class NegotiationResult:
    matching: tuple[int, ...] | None  # None if the budget ran out
    rounds: int
    exhausted: bool
    transcript: list[list[Bid]] = field(default_factory=list)


def negotiate(agents: Sequence[PlayerAgent], medium: BroadcastMedium, eps: float, budget: int,
              codec: PacketCodec | None = None) -> NegotiationResult:
    """Run auction rounds over the medium, one subframe per round.

    In each subframe player ``i`` transmits in slot ``i`` if it is unassigned in
    the (common) public view. Every agent decodes the same packets and applies
    the round to its own view. ``agent.values`` must already be set.
    """
    if budget < 1:
        raise PreconditionError("negotiation budget must be >= 1 subframe")
    M = len(agents)
    N = len(agents[0].values)
    codec = codec or PacketCodec("packetized", N)
    for a in agents:
        a.view = AuctionState.fresh(M, N)
    rounds = 0
    while rounds < budget and not agents[0].view.done:
        heard: list[tuple[int, object]] = []
        for a in agents:
            tx = []
            if a.view.assignment[a.pid] < 0:
                j, b = compute_bid(a.values, a.view.prices, eps, M)
                tx.append((a.pid, codec.encode(a.pid, j, b)))
            obs = medium.slot(tx, phase="negotiation")
            if obs.kind is SlotKind.SUCCESS:
                heard.append((obs.sender, obs.payload))
            elif obs.kind is SlotKind.COLLISION:  # pragma: no cover - slots are owned by one player
                raise ProtocolError("collision on the control channel")
        bids = [codec.decode(p, s) for s, p in heard]
        for a in agents:
            apply_round(a.view, bids)
        rounds += 1
    _check_agreement(agents)
    view = agents[0].view
    if not view.done:
        log.info("negotiation budget of %d subframes exhausted; keeping previous matching", budget)
        return NegotiationResult(None, rounds, True, view.transcript)
    return NegotiationResult(tuple(int(x) for x in view.assignment), rounds, False, view.transcript)


def _check_agreement(agents: Sequence[PlayerAgent]) -> None:
    ref = agents[0].view
    for a in agents[1:]:
        v = a.view
        if not (np.array_equal(v.assignment, ref.assignment) and np.array_equal(v.prices, ref.prices)):
            raise ProtocolError(f"agent {a.pid} disagrees with agent 0 on the auction state")


def interrupt_phase(agents: Sequence[PlayerAgent], medium: BroadcastMedium, changed: Sequence[bool]) -> bool:
    """Player ``i`` sends a 1 in slot ``i`` if its own match changed; returns the OR."""
    flag = False
    for a in agents:
        tx = [(a.pid, 1)] if changed[a.pid] else []
        obs = medium.slot(tx, phase="interrupt")
        flag = flag or obs.kind is SlotKind.SUCCESS
    return flag


def resolve_plays(choices: Sequence[int]) -> np.ndarray:
    """Boolean mask of players whose arm nobody else picked in this slot."""
    c = np.asarray(choices)
    _, inv, cnt = np.unique(c, return_inverse=True, return_counts=True)
    return cnt[inv] == 1


# ---------------------------------------------------------------- engine


def frame_precision(L: int, M: int) -> float:
    """Default precision ``f(L) = 2^-max(1, floor((L - M) / M))``."""
    return 2.0 ** -max(1, (L - M) // M)


@dataclass
class DUCB4Params:
    """Knobs of a decentralized run.

    ``eps1`` is the bid precision (physical mode), ``eps2`` the index precision.
    Unset precisions default to ``f(L)``; the auction runs at ``min(eps1, eps2)``
    (``eps2`` in packetized mode where bids are exact). ``kappa`` selects the
    Markov index; otherwise the coefficient is ``M + 2``.
    """

    L: int | Schedule = 16
    mode: str = "physical"
    eps1: float | None = None
    eps2: float | None = None
    kappa: float | Schedule | None = None
    cost: CostModel = field(default_factory=CostModel)
    int_bits: int = 8
    record_transcript: bool = False


def _frame_length(L, f: int) -> int:
    return int(schedule_value(L, f))


class _Engine:
    def __init__(self, arm_matrix, params: DUCB4Params, T: int, seed: int):
        self.M = len(arm_matrix)
        self.N = len(arm_matrix[0])
        M, N = self.M, self.N
        if any(len(row) != N for row in arm_matrix):
            raise PreconditionError("arm matrix must be rectangular")
        if M > N:
            raise PreconditionError(f"need M <= N, got M={M}, N={N}")
        if T < N:
            raise PreconditionError(f"horizon {T} shorter than the {N}-slot initialization")
        self.p = params
        self.T = T
        if params.kappa is None:
            spec_kw = dict(kind="ucb4", coefficient_override=float(M + 2))
        else:
            spec_kw = dict(kind="kappa", kappa=params.kappa)
        self.spec_kw = spec_kw
        self.agents = [PlayerAgent(i, arm_matrix[i], IndexSpec(time_source="own", **spec_kw), seed)
                       for i in range(M)]
        self.means = np.array([[a.mean for a in row] for row in arm_matrix])
        self.opt, self.mu_star = brute_force_matching(self.means)
        self.log = SlotLog(T)
        self.frame_of_slot = np.zeros(T, dtype=np.int64)
        self.medium = BroadcastMedium(record=params.record_transcript)
        self.t = 0
        self.exploit_collisions = 0
        self.markov = any(isinstance(a, MarkovArm) for row in arm_matrix for a in row)

    def precisions(self, L: int) -> tuple[float, float, float]:
        f = frame_precision(L, self.M)
        if self.p.mode == "physical":
            e1 = self.p.eps1 if self.p.eps1 is not None else f
            e2 = self.p.eps2 if self.p.eps2 is not None else e1
            return e1, e2, min(e1, e2)
        e2 = self.p.eps2 if self.p.eps2 is not None else f
        return 0.0, e2, e2

    def play(self, matching: Sequence[int], n: int, eta: int, frame: int, exploit: bool) -> None:
        n = min(n, self.T - self.t)
        if n <= 0:
            return
        s = slice(self.t, self.t + n)
        ok = resolve_plays(matching)
        for a, arm, good in zip(self.agents, matching, ok):
            if good:
                self.log.reward[s] += a.play(arm, n)
                self.log.expected[s] += self.means[a.pid, arm]
        bad = int((~ok).sum())
        if bad:
            self.log.collisions[s] += bad
            if exploit:
                self.exploit_collisions += bad * n
        self.log.eta[s] = eta
        self.frame_of_slot[s] = frame
        self.t += n


def run_ducb4(arm_matrix, params: DUCB4Params | None = None, T: int = 1000, seed: int = 0,
              grid: np.ndarray | None = None) -> RegretTrace:
    """Simulate ``M`` dUCB4 agents on an ``M x N`` grid of arms for ``T`` slots.

    Initialization plays the ``N`` rotation matchings for one slot each, so
    every player samples every arm once. Regret is measured against the
    optimal matching of the arm means and includes ``C(eps)`` per decision
    frame. The trace's ``regret`` is realized-reward regret; the pseudo-regret
    is kept alongside.
    """
    params = params or DUCB4Params()
    eng = _Engine(arm_matrix, params, T, seed)
    M, N = eng.M, eng.N
    agents = eng.agents

    rotation = initialization_rotation(M, N)
    for k in rotation:
        eng.play(k, 1, 1, 0, exploit=False)
    current = rotation[-1]
    for a, arm in zip(agents, current):
        a.match = arm

    eta, frame = 1, 1
    decisions, choices, exhausted, rounds = [], [], 0, []
    m1 = m2 = 0
    opt = tuple(int(x) for x in eng.opt)
    while eng.t < T:
        L = _frame_length(params.L, frame)
        if L < M + 1:
            raise PreconditionError(f"frame length {L} must be at least M + 1 = {M + 1}")
        if eta & (eta - 1) == 0:
            e1, e2, eps = eng.precisions(L)
            codec = PacketCodec(params.mode, N, e1, params.int_bits)
            for a in agents:
                a.spec = IndexSpec(time_source="own", eps=e2, **eng.spec_kw)
                a.refresh_values(eng.t)
            budget = max(1, (L - M) // M)
            res = negotiate(agents, eng.medium, eps, budget, codec)
            rounds.append(res.rounds)
            new = current if res.matching is None else res.matching
            exhausted += res.exhausted
            # pad the negotiation phase to its full length, then interrupts
            for _ in range(max(0, L - M - res.rounds * M)):
                eng.medium.slot([], phase="negotiation")
            changed = [new[i] != current[i] for i in range(M)]
            if interrupt_phase(agents, eng.medium, changed):
                eta = 1
            current = new
            for a, arm in zip(agents, current):
                a.match = arm
            eng.log.charge(eng.t, params.cost(eps))
            decisions.append(eng.t + 1)
            choices.append(current)
            if current == opt:
                m1 += 1
            else:
                m2 += 1
            eng.play(current, L, eta, frame, exploit=False)
            eta += 1
            frame += 1
        else:
            nf = (1 << eta.bit_length()) - eta  # frames until eta is a power of two again
            if isinstance(params.L, Schedule):
                slots = sum(_frame_length(params.L, frame + k) for k in range(nf))
            else:
                slots = nf * L
            eng.play(current, slots, eta, frame, exploit=True)
            eta += nf
            frame += nf

    grid = geometric_grid(T) if grid is None else grid
    counts = np.array([a.stats.counts for a in agents])
    idx = np.asarray(grid, dtype=np.int64) - 1
    return eng.log.to_trace(
        grid,
        float(eng.mu_star),
        "realized",
        counts=counts,
        recompute_times=np.array(decisions, dtype=np.int64),
        choices=np.array(choices, dtype=np.int64).reshape(-1, M),
        info={
            "frame": eng.frame_of_slot[idx],
            "frames": frame - 1,
            "m1": m1,
            "m2": m2,
            "exploit_collisions": eng.exploit_collisions,
            "budget_exhausted": exhausted,
            "auction_rounds": np.array(rounds, dtype=np.int64),
            "optimal_matching": opt,
            "means": eng.means.tolist(),
            "markov": eng.markov,
            "control_slots": eng.medium.slots,
            "medium": eng.medium if params.record_transcript else None,
        },
    )
