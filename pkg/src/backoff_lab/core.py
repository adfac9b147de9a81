"""Contention-window machinery: CW tables and the four backoff state machines.

State index i runs over [0, 6]; the window for state i is
floor(CW_min * r^i - 1) with CW_min = 16, so state 0 is always 15 slots.
A frame is discarded after its 7th failed attempt.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .rng import mask_for

CW_MIN = 16
NUM_STATES = 7
MAX_RETRY = 6  # retry counter range [0, 6]; 7 attempts total per frame


class PolicyKind(enum.Enum):
    STANDARD = "standard"
    PENALTY = "penalty"
    ROLLBACK = "rollback"
    FIXED_CW = "fixed"


class PenaltySemantics(enum.Enum):
    """How a penalized station that succeeds again on its first attempt behaves.

    FIRMWARE keeps it penalized (state 6); MARKOV returns it to state 0 after
    one frame, matching the two-state chain the analytic model assumes.
    """

    FIRMWARE = "firmware"
    MARKOV = "markov"


@dataclass(frozen=True)
class BackoffPolicy:
    kind: PolicyKind
    r: float = 2.0
    fixed_cw: int = 15
    penalty_semantics: PenaltySemantics = PenaltySemantics.FIRMWARE

    def __post_init__(self):
        if self.kind is not PolicyKind.FIXED_CW and not 1.0 <= self.r:
            raise ValueError(f"backoff factor r must be >= 1.0, got {self.r}")
        if self.kind is PolicyKind.FIXED_CW and self.fixed_cw < 1:
            raise ValueError(f"fixed_cw must be >= 1, got {self.fixed_cw}")


@dataclass(frozen=True)
class CwTable:
    windows: tuple[int, ...]
    masks: tuple[int, ...]


@dataclass
class StationState:
    state_index: int = 0
    retry: int = 0
    penalized: bool = False
    backoff_slots: int = 0


# windows computed in double precision; snap values within half an ULP of an
# integer before flooring so e.g. 16 * 2.0**i stays exact on the r=2 ladder
_SNAP_EPS = 1e-9


def _window(r: float, i: int) -> int:
    val = CW_MIN * r**i - 1.0
    nearest = round(val)
    if abs(val - nearest) <= _SNAP_EPS * max(1.0, abs(val)):
        val = nearest
    return int(math.floor(val))


def build_cw_table(policy: BackoffPolicy) -> CwTable:
    """Precompute per-state windows and their power-of-two-minus-one masks."""
    if policy.kind is PolicyKind.FIXED_CW:
        windows = (policy.fixed_cw,) * NUM_STATES
    else:
        windows = tuple(_window(policy.r, i) for i in range(NUM_STATES))
    masks = tuple(mask_for(w) for w in windows)
    return CwTable(windows=windows, masks=masks)


def initial_state(policy: BackoffPolicy) -> StationState:
    """State for a station's very first frame."""
    if policy.kind is PolicyKind.ROLLBACK:
        return StationState(state_index=MAX_RETRY)
    return StationState()


def on_success(st: StationState, policy: BackoffPolicy) -> StationState:
    """State transition after an acknowledged frame; retry resets for the next one."""
    kind = policy.kind
    if kind is PolicyKind.ROLLBACK:
        return StationState(state_index=MAX_RETRY)
    if kind is PolicyKind.PENALTY:
        if st.retry == 0:
            if (
                st.penalized
                and policy.penalty_semantics is PenaltySemantics.MARKOV
            ):
                return StationState(state_index=0, penalized=False)
            return StationState(state_index=MAX_RETRY, penalized=True)
        return StationState(state_index=0, penalized=False)
    return StationState(state_index=0)


def on_failure(
    st: StationState, policy: BackoffPolicy
) -> tuple[StationState, bool]:
    """State transition after a failed attempt.

    Returns (new_state, discarded).  The 7th consecutive failure discards the
    frame: standard/penalty retreat to state 0, rollback to state 6.
    """
    kind = policy.kind
    if st.retry >= MAX_RETRY:
        if kind is PolicyKind.ROLLBACK:
            return StationState(state_index=MAX_RETRY), True
        return StationState(state_index=0), True
    retry = st.retry + 1
    if kind is PolicyKind.ROLLBACK:
        return StationState(state_index=MAX_RETRY - retry, retry=retry), False
    return (
        StationState(state_index=min(retry, MAX_RETRY), retry=retry),
        False,
    )


def window_for_next_attempt(
    st: StationState, table: CwTable, policy: BackoffPolicy
) -> int:
    """CW for the station's next backoff draw."""
    if (
        policy.kind is PolicyKind.PENALTY
        and st.penalized
        and st.retry == 0
    ):
        return table.windows[MAX_RETRY]
    return table.windows[st.state_index]
