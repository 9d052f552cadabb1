"""Messages, proposals, and pattern-template proposal extraction.

A proposal from power j to power i pairs the orders j asks i to play with the
orders j promises to play itself. Annotated logical forms are grounded directly;
otherwise a fixed template list (``data/templates.json``) is matched over the
normalized text and every grounded order keeps the span it came from.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

from .board import ARMY, FLEET, GameState, MapDef, Unit, normalize_name, province_of, resolve_alias
from .orders import (
    Action,
    Convoy,
    Hold,
    Move,
    Order,
    OrderError,
    SupportHold,
    SupportMove,
    parse_order,
    render_order,
)

TRUTH = "truth"
LIE = "lie"
ANNOTATED = "annotated"
EXTRACTED = "extracted"


class GroundingError(ValueError):
    def __init__(self, detail: str, msg_id: str | None = None):
        self.detail = detail
        self.msg_id = msg_id
        super().__init__(f"{msg_id}: {detail}" if msg_id else detail)


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    game_id: str
    idx: int
    phase: str
    sender: str
    recipient: str
    text: str
    annotation: str | None = None
    logical_form: Mapping[str, tuple[str, ...]] | None = None

    def __post_init__(self):
        if self.sender == self.recipient:
            raise ValueError(f"message {self.msg_id}: sender and recipient are both {self.sender}")
        if self.annotation not in (None, TRUTH, LIE):
            raise ValueError(f"message {self.msg_id}: annotation must be truth or lie, got {self.annotation!r}")

    @property
    def msg_id(self) -> str:
        return f"{self.game_id}:{self.idx}"

    @property
    def is_lie(self) -> bool:
        return self.annotation == LIE


@dataclass(frozen=True)
class TraceEntry:
    side: str
    order: str
    template: str
    span: str


@dataclass(frozen=True)
class Fragment:
    """Grounded but possibly partial proposal."""

    proposer: str
    recipient: str
    recipient_orders: tuple[Order, ...]
    proposer_orders: tuple[Order, ...]
    source: str = EXTRACTED
    trace: tuple[TraceEntry, ...] = ()


@dataclass(frozen=True)
class Proposal:
    proposer: str
    recipient: str
    recipient_action: Action
    proposer_action: Action
    proposer_action_implicit: bool = False
    source: str = EXTRACTED
    trace: tuple[TraceEntry, ...] = ()

    def __post_init__(self):
        if self.recipient_action.power != self.recipient or self.proposer_action.power != self.proposer:
            raise ValueError("proposal actions do not belong to proposer/recipient")


def complete(fragment: Fragment | Proposal, state: GameState, sampler) -> Proposal:
    """Hold-fill the recipient side; sample the proposer side when nothing was promised."""
    if isinstance(fragment, Proposal):
        return Proposal(
            fragment.proposer,
            fragment.recipient,
            Action.of(fragment.recipient, fragment.recipient_action.orders, state),
            Action.of(fragment.proposer, fragment.proposer_action.orders, state),
            fragment.proposer_action_implicit,
            fragment.source,
            fragment.trace,
        )
    if not fragment.recipient_orders:
        raise PreconditionError("proposal fragment has no order for the recipient")
    rec = Action.of(fragment.recipient, fragment.recipient_orders, state)
    implicit = not fragment.proposer_orders
    if not implicit:
        prop = Action.of(fragment.proposer, fragment.proposer_orders, state)
    elif state.units_of(fragment.proposer):
        prop = sampler.sample(state, fragment.proposer)
    else:
        prop = Action(fragment.proposer, ())
    return Proposal(fragment.proposer, fragment.recipient, rec, prop, implicit, fragment.source, fragment.trace)


def ingest_annotated(form: Mapping[str, Sequence[str]], msg: Message, state: GameState, sampler) -> Proposal:
    if not form or not any(form.values()):
        raise PreconditionError(f"{msg.msg_id}: empty logical form")
    sides: dict[str, list[Order]] = {msg.sender: [], msg.recipient: []}
    trace = []
    for power, texts in form.items():
        if power not in sides:
            raise GroundingError(f"logical form names {power}, neither sender nor recipient", msg.msg_id)
        for text in texts:
            try:
                order = parse_order(text, state)
            except OrderError as exc:
                raise GroundingError(f"{text!r}: {exc}", msg.msg_id) from exc
            if order.unit.power != power:
                raise GroundingError(f"{text!r}: unit belongs to {order.unit.power}, not {power}", msg.msg_id)
            sides[power].append(order)
            side = "recipient" if power == msg.recipient else "proposer"
            trace.append(TraceEntry(side, render_order(order), ANNOTATED, text))
    frag = Fragment(
        msg.sender, msg.recipient, tuple(sides[msg.recipient]), tuple(sides[msg.sender]), ANNOTATED, tuple(trace)
    )
    try:
        return complete(frag, state, sampler)
    except PreconditionError as exc:
        raise PreconditionError(f"{msg.msg_id}: {exc}") from exc
    except OrderError as exc:
        raise GroundingError(str(exc), msg.msg_id) from exc


# -- template matching --------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    name: str
    side: str
    kind: str
    pattern: str


def load_templates(path=None) -> tuple[dict, list[Template]]:
    if path is None:
        raw = (resources.files("ctrld") / "data" / "templates.json").read_text()
    else:
        with open(path) as fh:
            raw = fh.read()
    doc = json.loads(raw)
    return doc["macros"], [Template(**t) for t in doc["templates"]]


def _place_regex(mapdef: MapDef) -> str:
    names = sorted(mapdef.alias_table, key=lambda n: (-len(n), n))
    return r"(?<![a-z])(?:" + "|".join(re.escape(n) for n in names) + r")(?![a-z])"


def _normalize_text(text: str) -> str:
    return normalize_name(text.replace("“", '"').replace("”", '"'))


@dataclass
class _Hit:
    template: Template
    match: re.Match
    side: str


class Extractor:
    """Compiled template set for one map."""

    def __init__(self, mapdef: MapDef, templates_path=None):
        self.map = mapdef
        macros, self.templates = load_templates(templates_path)
        place = _place_regex(mapdef)
        self.place_re = re.compile(place)
        slots = {
            "{s}": f"(?P<s>{place})",
            "{t}": f"(?P<t>{place})",
            "{sup}": f"(?P<sup>{place})",
            "{d}": f"(?P<d>{place}|there)",
        }
        self.compiled = []
        for t in self.templates:
            pat = t.pattern
            for key, val in macros.items():
                pat = pat.replace("{" + key + "}", val)
            for key, val in slots.items():
                pat = pat.replace(key, val)
            self.compiled.append((t, re.compile(pat)))

    def _hits(self, text: str) -> list[_Hit]:
        taken: list[tuple[int, int]] = []
        hits = []
        for t, rx in self.compiled:
            for m in rx.finditer(text):
                a, b = m.span()
                if any(a < y and x < b for x, y in taken):
                    continue
                taken.append((a, b))
                hits.append(_Hit(t, m, t.side))
        return sorted(hits, key=lambda h: h.match.start())

    def extract(self, msg: Message, state: GameState, sampler=None) -> Proposal | None:
        """Ground the message into a Proposal, or None when nothing order-bearing matches.

        ``sampler`` fills in the proposer side when the message promises nothing.
        """
        if msg.logical_form:
            return ingest_annotated(msg.logical_form, msg, state, sampler)
        frag = self.fragment(msg, state)
        if frag is None:
            return None
        return complete(frag, state, sampler)

    def fragment(self, msg: Message, state: GameState) -> Fragment | None:
        text = _normalize_text(msg.text)
        hits = self._hits(text)
        if not hits:
            return None
        g = _Grounder(self, msg, state, text)
        for h in hits:
            if h.template.kind in ("move", "hold"):
                g.ground(h)
        for h in hits:
            if h.template.kind not in ("move", "hold"):
                g.ground(h)
        if not g.orders["recipient"]:
            return None
        return Fragment(
            msg.sender,
            msg.recipient,
            tuple(g.orders["recipient"].values()),
            tuple(g.orders["proposer"].values()),
            EXTRACTED,
            tuple(sorted(g.trace, key=lambda e: (e.side, e.order))),
        )


@dataclass
class _Grounder:
    ex: Extractor
    msg: Message
    state: GameState
    text: str
    orders: dict = field(default_factory=lambda: {"recipient": {}, "proposer": {}})
    trace: list = field(default_factory=list)
    moves_at: list = field(default_factory=list)  # (text offset, side, Move)

    def fail(self, detail: str):
        raise GroundingError(detail, self.msg.msg_id)

    def power(self, side: str) -> str:
        return self.msg.recipient if side == "recipient" else self.msg.sender

    def place(self, m: re.Match, group: str) -> str | None:
        word = m.group(group) if group in m.re.groupindex else None
        if word is None:
            return None
        if word == "there":
            before = [p for p in self.ex.place_re.finditer(self.text) if p.end() <= m.start(group)]
            if not before:
                self.fail("'there' has no earlier place mention")
            word = before[-1].group(0)
        try:
            return resolve_alias(self.state.map, word)
        except LookupError as exc:
            self.fail(str(exc))

    def unit_of(self, side: str, prov: str) -> Unit:
        u = self.state.unit_at(prov)
        power = self.power(side)
        if u is None or u.power != power:
            self.fail(f"{power} has no unit in {prov}")
        return u

    def unit_at(self, prov: str) -> Unit:
        u = self.state.unit_at(prov)
        if u is None:
            self.fail(f"no unit in {prov}")
        return u

    def unique(self, side: str, ok, what: str) -> Unit:
        power = self.power(side)
        found = [u for u in self.state.units_of(power) if ok(u)]
        if len(found) != 1:
            self.fail(f"{len(found)} {power} units could {what}")
        return found[0]

    def add(self, side: str, order: Order, hit: _Hit, pos: int):
        book = self.orders[side]
        prev = book.get(order.unit)
        if prev is not None and prev != order:
            self.fail(f"conflicting orders for {order.unit}: {render_order(prev)} / {render_order(order)}")
        book[order.unit] = order
        self.trace.append(TraceEntry(side, render_order(order), hit.template.name, hit.match.group(0)))
        if isinstance(order, Move):
            self.moves_at.append((pos, side, order))

    def make_move(self, u: Unit, dest: str) -> Move:
        m = self.state.map
        if not m.can_reach(u.kind, u.loc, dest):
            self.fail(f"{u} cannot reach {dest}")
        if u.kind == FLEET:
            loc = m.fleet_dest(u.loc, dest)
            if loc is None:
                self.fail(f"{u} -> {dest}: coast is ambiguous")
            return Move(u, loc)
        return Move(u, dest)

    def mover_into(self, side: str, dest: str, pos: int, hit: _Hit) -> Unit:
        for _, s, mv in self.moves_at:
            if s == side and province_of(mv.dest) == dest:
                return mv.unit
        m = self.state.map
        u = self.unique(side, lambda u: m.can_reach(u.kind, u.loc, dest), f"move into {dest}")
        self.add(side, self.make_move(u, dest), hit, pos)
        return u

    def ground(self, hit: _Hit):
        t, m, side = hit.template, hit.match, hit.side
        other = "proposer" if side == "recipient" else "recipient"
        mp = self.state.map
        pos = m.start()
        if t.kind == "move":
            dest = self.place(m, "d")
            src = self.place(m, "s")
            if src is not None:
                u = self.unit_of(side, src)
            else:
                u = self.unique(side, lambda u: mp.can_reach(u.kind, u.loc, dest), f"move into {dest}")
            self.add(side, self.make_move(u, dest), hit, pos)
        elif t.kind == "hold":
            self.add(side, Hold(self.unit_of(side, self.place(m, "s"))), hit, pos)
        elif t.kind in ("support", "support_last"):
            if t.kind == "support_last":
                prior = [mv for p, s, mv in self.moves_at if s == side and p < pos]
                if not prior:
                    self.fail("support refers to no earlier move")
                target, dest = prior[-1].unit, province_of(prior[-1].dest)
            else:
                dest = self.place(m, "d")
                groups = m.re.groupindex
                if "me" in groups and m.group("me"):
                    target = self.mover_into(other, dest, pos, hit)
                elif "you" in groups and m.group("you"):
                    target = self.mover_into(other, dest, pos, hit)
                else:
                    target = self.unit_at(self.place(m, "t"))
            sup = self.place(m, "sup")
            if dest is None:
                ok = lambda u: u != target and mp.can_reach(u.kind, u.loc, target.province)  # noqa: E731
            else:
                ok = lambda u: (  # noqa: E731
                    u != target and u.province != dest and mp.can_reach(u.kind, u.loc, dest)
                )
            if sup is not None:
                supporter = self.unit_of(side, sup)
                if not ok(supporter):
                    self.fail(f"{supporter} cannot give that support")
            else:
                supporter = self.unique(side, ok, "give that support")
            if dest is None:
                self.add(side, SupportHold(supporter, target), hit, pos)
            else:
                self.add(side, SupportMove(supporter, target, dest), hit, pos)
                if target.power == self.power(side) and target not in self.orders[side]:
                    self.add(side, self.make_move(target, dest), hit, pos)
        elif t.kind == "convoy":
            dest = self.place(m, "d")
            groups = m.re.groupindex
            if ("me" in groups and m.group("me")) or ("you" in groups and m.group("you")):
                owner = other
                army = self.unique(
                    owner, lambda u: u.kind == ARMY and mp.is_coastal(u.province) and u.province != dest, "be convoyed"
                )
            else:
                army = self.unit_at(self.place(m, "t"))
                if army.kind != ARMY:
                    self.fail(f"{army} is not an army")
            fleet = self.unique(
                side,
                lambda u: u.kind == FLEET
                and mp.is_sea(u.province)
                and army.province in mp.reachable_provinces(FLEET, u.loc)
                and dest in mp.reachable_provinces(FLEET, u.loc),
                f"convoy {army} to {dest}",
            )
            self.add(side, Convoy(fleet, army, dest), hit, pos)
            owner_side = "recipient" if army.power == self.msg.recipient else "proposer"
            if army.power in (self.msg.recipient, self.msg.sender) and army not in self.orders[owner_side]:
                self.add(owner_side, Move(army, dest, via_convoy=True), hit, pos)
        else:
            raise ValueError(f"unknown template kind {t.kind!r}")
