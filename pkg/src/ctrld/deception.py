"""Counterfactual deception signals for a single proposal.

For a proposal from power j to power i (i asked to play ``ask``, j promising ``offer``):

* bait   = u_i(ask, offer) - u_i(plan_i, offer)
* switch = u_i(ask, offer) - u_i(ask, betrayal)
* edge   = u_j(ask, betrayal) - u_j(plan_i, betrayal)

``plan_i`` is what the victim would play unprompted and ``betrayal`` is the
proposer's best alternative to its own promise given the victim complies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .board import GameState
from .extract import Extractor, Message, Proposal, TraceEntry
from .orders import Action, hold_action
from .value import Joint, NoUnitsError, PolicySampler, ValueFunction, argmax_action

BEST_RESPONSE = "best_response"
POLICY_EXCLUDING = "policy_excluding"
PLAN_BETRAYAL = "betrayal"
PLAN_POLICY = "policy"
BACKGROUND_HOLD = "hold"
BACKGROUND_POLICY = "policy"

NO_ALTERNATIVE = "no_alternative"
IMPLICIT_PROPOSER = "implicit_proposer"
PROPOSER_NO_UNITS = "proposer_no_units"


@dataclass(frozen=True)
class ScoringConfig:
    betrayal_mode: str = BEST_RESPONSE
    edge_plan: str = PLAN_BETRAYAL
    background_mode: str = BACKGROUND_HOLD
    enum_limit: int = 512

    def __post_init__(self):
        if self.betrayal_mode not in (BEST_RESPONSE, POLICY_EXCLUDING):
            raise ValueError(f"betrayal_mode must be {BEST_RESPONSE} or {POLICY_EXCLUDING}")
        if self.edge_plan not in (PLAN_BETRAYAL, PLAN_POLICY):
            raise ValueError(f"edge_plan must be {PLAN_BETRAYAL} or {PLAN_POLICY}")
        if self.background_mode not in (BACKGROUND_HOLD, BACKGROUND_POLICY):
            raise ValueError(f"background_mode must be {BACKGROUND_HOLD} or {BACKGROUND_POLICY}")
        if self.enum_limit < 1:
            raise ValueError("enum_limit must be >= 1")


@dataclass(frozen=True)
class DeceptionSignature:
    bait: float
    switch: float
    edge: float
    victim_plan: Action
    betrayal: Action
    background: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()
    msg_id: str | None = None
    trace: tuple[TraceEntry, ...] = ()

    def __post_init__(self):
        for name in ("bait", "switch", "edge"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")

    @property
    def values(self) -> tuple[float, float, float]:
        return (self.bait, self.switch, self.edge)

    def to_record(self) -> dict:
        return {
            "msg_id": self.msg_id,
            "U1": self.bait,
            "U2": self.switch,
            "U3": self.edge,
            "a_i": list(self.victim_plan.rendered()),
            "a_j_star": list(self.betrayal.rendered()),
            "flags": list(self.flags),
        }


class DeceptionScorer:
    """Scores proposals against one value function and policy sampler.

    Victim plans are cached per (state, power) so every proposal to the same
    power in the same position is compared against the same baseline.
    """

    def __init__(self, value: ValueFunction, sampler: PolicySampler, config: ScoringConfig = ScoringConfig()):
        self.value = value
        self.sampler = sampler
        self.config = config
        self._plans: dict[tuple[GameState, str], Action] = {}

    def victim_plan(self, state: GameState, power: str) -> Action:
        key = (state, power)
        plan = self._plans.get(key)
        if plan is None:
            plan = self.sampler.sample(state, power) if state.units_of(power) else hold_action(state, power)
            self._plans[key] = plan
        return plan

    def background(self, state: GameState, i: str, j: str) -> dict[str, Action]:
        if self.config.background_mode == BACKGROUND_HOLD:
            return {}
        return {
            p: self.victim_plan(state, p) for p in state.powers if p not in (i, j) and state.units_of(p)
        }

    def _u(self, state: GameState, bg: Joint, i: str, ask: Action, j: str, offer: Action, who: str) -> float:
        return self.value.evaluate(state, {**bg, i: ask, j: offer})[who]

    def select_betrayal(
        self, state: GameState, proposal: Proposal, background: Joint | None = None
    ) -> tuple[Action, bool]:
        """Proposer's alternative to its promise; second item is True when none exists."""
        i, j = proposal.recipient, proposal.proposer
        promised = proposal.proposer_action
        units = state.units_of(j)
        if not units:
            raise NoUnitsError(f"{j} has no units")
        bg = {p: a for p, a in (background or {}).items() if p not in (i, j)}
        context = {**bg, i: proposal.recipient_action}

        if self.config.betrayal_mode == POLICY_EXCLUDING:
            alt = self.sampler.sample(state, j, forbid=promised, context=bg)
            return (promised, True) if alt == promised else (alt, False)

        per_unit = [self.sampler.candidates(state, u) for u in units]
        if math.prod(len(c) for c in per_unit) <= self.config.enum_limit:
            pool = (Action.of(j, combo) for combo in itertools.product(*per_unit))
        else:
            pool = [
                self.sampler.sample(state, j, forbid=promised, context=context),
                self.sampler.sample(state, j, context=bg),
            ]
            for u, cands in zip(units, per_unit):
                if promised.order_for(u) is not None:
                    pool.extend(promised.replace(o) for o in cands)
        seen = set()
        scored = []
        for act in pool:
            if act == promised or act in seen:
                continue
            seen.add(act)
            scored.append((self.value.evaluate(state, {**context, j: act})[j], act))
        if not scored:
            return promised, True
        return argmax_action(scored)[1], False

    def compute_signature(
        self, state: GameState, proposal: Proposal, background: Joint | None = None, msg_id: str | None = None
    ) -> DeceptionSignature:
        i, j = proposal.recipient, proposal.proposer
        ask, offer = proposal.recipient_action, proposal.proposer_action
        bg = self.background(state, i, j) if background is None else dict(background)
        bg = {p: a for p, a in bg.items() if p not in (i, j)}
        flags = []
        if proposal.proposer_action_implicit:
            flags.append(IMPLICIT_PROPOSER)

        plan = self.victim_plan(state, i)
        if state.units_of(j):
            betrayal, none_left = self.select_betrayal(state, proposal, bg)
            if none_left:
                flags.append(NO_ALTERNATIVE)
        else:
            betrayal = offer
            flags += [NO_ALTERNATIVE, PROPOSER_NO_UNITS]
        if self.config.edge_plan == PLAN_BETRAYAL or not state.units_of(j):
            edge_plan = betrayal
        else:
            edge_plan = self.sampler.sample(state, j, context=bg)

        def u(ask_: Action, offer_: Action, who: str) -> float:
            return self._u(state, bg, i, ask_, j, offer_, who)

        kept = u(ask, offer, i)
        bait = kept - u(plan, offer, i)
        switch = kept - u(ask, betrayal, i)
        edge = u(ask, edge_plan, j) - u(plan, edge_plan, j)
        return DeceptionSignature(
            bait, switch, edge, plan, betrayal, bg, tuple(sorted(flags)), msg_id, proposal.trace
        )


def score_message(
    msg: Message, state: GameState, extractor: Extractor, scorer: DeceptionScorer
) -> DeceptionSignature | None:
    """Extract, complete and score one message; None when it carries no proposal."""
    proposal = extractor.extract(msg, state, scorer.sampler)
    if proposal is None:
        return None
    return scorer.compute_signature(state, proposal, msg_id=msg.msg_id)
