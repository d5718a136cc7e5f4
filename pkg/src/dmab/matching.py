"""Epsilon-optimal bipartite matching by a synchronous (Jacobi) auction.

Players are rows, arms are columns, ``M <= N``. Each round every unassigned
player bids for its best arm at current prices; the highest bid on each arm
wins it (lowest player id on ties), the arm's price rises by the winning bid
and any previous holder becomes unassigned. A bid is the gap between the
player's best and second-best net values plus ``eps / M``, so the final
assignment is within ``eps`` of the optimal surplus.

``brute_force_matching`` enumerates all injective assignments and serves as the
oracle for small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

BRUTE_FORCE_MAX_N = 10


class MatchingError(RuntimeError):
    """Auction failed to terminate within its proven round cap (a bug)."""


class UnsupportedSize(ValueError):
    pass


@dataclass(frozen=True)
class Bid:
    player: int
    arm: int
    amount: float


@dataclass
class AuctionState:
    """Prices, the partial assignment, and the round-by-round transcript."""

    prices: np.ndarray
    assignment: np.ndarray  # player -> arm, -1 if unassigned
    owner: np.ndarray  # arm -> player, -1 if free
    rounds: int = 0
    transcript: list[list[Bid]] = field(default_factory=list)

    @classmethod
    def fresh(cls, M: int, N: int) -> "AuctionState":
        return cls(
            prices=np.zeros(N),
            assignment=np.full(M, -1, dtype=np.int64),
            owner=np.full(N, -1, dtype=np.int64),
        )

    @property
    def unassigned(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.assignment < 0)]

    @property
    def done(self) -> bool:
        return bool(np.all(self.assignment >= 0))

    def copy(self) -> "AuctionState":
        return AuctionState(
            self.prices.copy(), self.assignment.copy(), self.owner.copy(), self.rounds,
            [list(r) for r in self.transcript],
        )


def compute_bid(values, prices, eps: float, M: int) -> tuple[int, float]:
    """Preferred arm and bid increment for one player.

    With a single arm the second-best net value is taken equal to the best one,
    so the bid is just ``eps / M``.
    """
    if eps <= 0:
        raise ValueError("auction precision must be positive")
    net = np.asarray(values, dtype=float) - np.asarray(prices, dtype=float)
    if net.size == 0:
        raise ValueError("need at least one arm")
    j = int(np.argmax(net))
    best = net[j]
    if net.size == 1:
        second = best
    else:
        second = np.max(np.delete(net, j))
    return j, float(best - second + eps / M)


def apply_round(state: AuctionState, bids: list[Bid]) -> None:
    """Resolve one round of simultaneous bids in place."""
    winners: dict[int, Bid] = {}
    for b in bids:
        cur = winners.get(b.arm)
        if cur is None or b.amount > cur.amount or (b.amount == cur.amount and b.player < cur.player):
            winners[b.arm] = b
    for arm in sorted(winners):
        b = winners[arm]
        prev = state.owner[arm]
        if prev >= 0:
            state.assignment[prev] = -1
        state.owner[arm] = b.player
        state.assignment[b.player] = arm
        state.prices[arm] += b.amount
    state.rounds += 1
    state.transcript.append(list(bids))


def round_cap(values: np.ndarray, eps: float) -> int:
    """Upper bound on the number of rounds: ceil(M^2 * R / eps) + M.

    ``R`` is the largest value, or the value range when that is larger (only
    possible with negative entries).
    """
    M = values.shape[0]
    vmax = float(values.max())
    R = max(vmax, vmax - float(values.min()))
    return int(math.ceil(M * M * R / eps)) + M


def run_auction(values, eps: float) -> tuple[np.ndarray, AuctionState]:
    """Run the auction to completion and return ``(assignment, state)``."""
    V = np.asarray(values, dtype=float)
    if V.ndim != 2:
        raise ValueError("values must be an M x N matrix")
    M, N = V.shape
    if M > N:
        raise ValueError(f"need M <= N, got {M} players and {N} arms")
    if eps <= 0:
        raise ValueError("auction precision must be positive")
    if not np.all(np.isfinite(V)):
        raise ValueError("values must be finite")
    state = AuctionState.fresh(M, N)
    cap = round_cap(V, eps)
    while not state.done:
        if state.rounds >= cap:
            raise MatchingError(f"auction exceeded its round cap of {cap}")
        bids = []
        for i in state.unassigned:
            j, b = compute_bid(V[i], state.prices, eps, M)
            bids.append(Bid(i, j, b))
        apply_round(state, bids)
    return state.assignment.copy(), state


def surplus(values, assignment) -> float:
    V = np.asarray(values, dtype=float)
    return float(sum(V[i, a] for i, a in enumerate(assignment)))


def all_matchings(M: int, N: int):
    """Every injective assignment of ``M`` players to ``N`` arms, in lexicographic order."""
    return itertools.permutations(range(N), M)


def brute_force_matching(values) -> tuple[np.ndarray, float]:
    """Exact maximum-surplus matching by enumeration (first in lexicographic order on ties)."""
    V = np.asarray(values, dtype=float)
    M, N = V.shape
    if M > N:
        raise ValueError(f"need M <= N, got {M} players and {N} arms")
    if N > BRUTE_FORCE_MAX_N:
        raise UnsupportedSize(f"enumeration limited to N <= {BRUTE_FORCE_MAX_N}, got N = {N}")
    best, best_val = None, -math.inf
    rows = range(M)
    for k in all_matchings(M, N):
        s = sum(V[i, k[i]] for i in rows)
        if s > best_val:
            best, best_val = k, s
    return np.array(best, dtype=np.int64), float(best_val)


def is_injective(assignment) -> bool:
    a = list(assignment)
    return len(set(a)) == len(a) and all(x >= 0 for x in a)
