"""Order shorthand: parser, printer, actions and legal-order enumeration.

Grammar (case-insensitive, whitespace-normalized)::

    <K> <LOC> H
    <K> <LOC> - <LOC> [VIA]
    <K> <LOC> S <K> <LOC> [H]
    <K> <LOC> S <K> <LOC> - <LOC>
    F <LOC> C A <LOC> - <LOC>

with K in {A, F} and LOC a three-letter province id, optionally ``/NC`` style.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .board import ARMY, FLEET, COAST_TAGS, GameState, Unit, coast_of, province_of


class OrderError(ValueError):
    pass


class OrderSyntaxError(OrderError):
    def __init__(self, text: str, offset: int, msg: str):
        self.text = text
        self.offset = offset
        super().__init__(f"{msg} at offset {offset} in {text!r}")


class UnknownUnitError(OrderError):
    pass


class KindMismatchError(OrderError):
    pass


class WrongPowerError(OrderError):
    pass


class DuplicateActorError(OrderError):
    pass


class UnitNotInStateError(OrderError):
    pass


@dataclass(frozen=True)
class Hold:
    unit: Unit


@dataclass(frozen=True)
class Move:
    unit: Unit
    dest: str
    via_convoy: bool = False


@dataclass(frozen=True)
class SupportHold:
    unit: Unit
    target: Unit


@dataclass(frozen=True)
class SupportMove:
    unit: Unit
    target: Unit
    dest: str


@dataclass(frozen=True)
class Convoy:
    unit: Unit
    army: Unit
    dest: str


Order = Union[Hold, Move, SupportHold, SupportMove, Convoy]

_RANK = {Hold: 0, Move: 1, SupportHold: 2, SupportMove: 3, Convoy: 4}


def render_order(order: Order) -> str:
    u = order.unit
    head = f"{u.kind} {u.loc}"
    if isinstance(order, Hold):
        return f"{head} H"
    if isinstance(order, Move):
        return f"{head} - {order.dest}" + (" VIA" if order.via_convoy else "")
    if isinstance(order, SupportHold):
        return f"{head} S {order.target.kind} {order.target.loc}"
    if isinstance(order, SupportMove):
        return f"{head} S {order.target.kind} {order.target.loc} - {order.dest}"
    if isinstance(order, Convoy):
        return f"{head} C A {order.army.loc} - {order.dest}"
    raise TypeError(f"not an order: {order!r}")


def order_key(order: Order) -> tuple[int, str]:
    """Canonical sort key: hold, moves, support-holds, support-moves, convoys."""
    return (_RANK[type(order)], render_order(order))


_TOKEN = re.compile(r"-|[^\s-]+")
_LOC = re.compile(r"^([A-Z]{3})(?:/([A-Z]{2}))?$")


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items = [(m.group(0).upper(), m.start()) for m in _TOKEN.finditer(text)]
        self.i = 0

    def offset(self, pos: int | None = None) -> int:
        idx = self.i if pos is None else pos
        char = self.items[idx][1] if idx < len(self.items) else len(self.text)
        return len(self.text[:char].encode())

    def error(self, msg: str, pos: int | None = None):
        raise OrderSyntaxError(self.text, self.offset(pos), msg)

    def peek(self) -> str | None:
        return self.items[self.i][0] if self.i < len(self.items) else None

    def take(self, *expected: str) -> str:
        tok = self.peek()
        if tok is None:
            self.error(f"unexpected end, expected {' or '.join(expected) or 'more input'}")
        if expected and tok not in expected:
            self.error(f"unexpected {tok!r}, expected {' or '.join(expected)}")
        self.i += 1
        return tok

    def kind(self) -> str:
        return self.take(ARMY, FLEET)

    def loc(self, state: GameState) -> tuple[str, int]:
        pos = self.i
        tok = self.take()
        m = _LOC.match(tok)
        if not m:
            self.error(f"bad location {tok!r}", pos)
        if m.group(1) not in state.map.provinces:
            self.error(f"unknown province {m.group(1)!r}", pos)
        if m.group(2) and m.group(2) not in COAST_TAGS:
            self.error(f"bad coast {m.group(2)!r}", pos)
        return tok, pos

    def end(self):
        if self.peek() is not None:
            self.error(f"unexpected {self.peek()!r}, expected end of order")


def _lookup(state: GameState, kind: str, loc: str, text: str) -> Unit:
    unit = state.unit_at(loc)
    if unit is None:
        raise UnknownUnitError(f"no unit at {province_of(loc)} in {text!r}")
    if unit.kind != kind:
        raise KindMismatchError(f"{kind} {loc} declared but {unit} is on the board, in {text!r}")
    if coast_of(loc) is not None and unit.loc != loc:
        raise UnknownUnitError(f"no unit at {loc} (found {unit}) in {text!r}")
    return unit


def parse_order(text: str, state: GameState) -> Order:
    toks = _Tokens(text)
    kind = toks.kind()
    loc, _ = toks.loc(state)
    verb = toks.take("H", "-", "S", "C")
    if verb == "H":
        toks.end()
        return Hold(_lookup(state, kind, loc, text))
    if verb == "-":
        dest, dpos = toks.loc(state)
        via = False
        if toks.peek() == "VIA":
            toks.take()
            via = True
        toks.end()
        unit = _lookup(state, kind, loc, text)
        if province_of(dest) == unit.province:
            toks.error("move to own province", dpos)
        if unit.kind == FLEET and coast_of(dest) is None:
            dest = state.map.fleet_dest(unit.loc, dest) or dest
        return Move(unit, dest, via)
    if verb == "S":
        tkind = toks.kind()
        tloc, _ = toks.loc(state)
        nxt = toks.peek()
        if nxt == "-":
            toks.take()
            dest, _ = toks.loc(state)
            toks.end()
            unit = _lookup(state, kind, loc, text)
            target = _lookup(state, tkind, tloc, text)
            return SupportMove(unit, target, province_of(dest))
        if nxt == "H":
            toks.take()
        toks.end()
        unit = _lookup(state, kind, loc, text)
        return SupportHold(unit, _lookup(state, tkind, tloc, text))
    # convoy
    if kind != FLEET:
        toks.error("only fleets convoy", 0)
    toks.take(ARMY)
    aloc, _ = toks.loc(state)
    toks.take("-")
    dest, _ = toks.loc(state)
    toks.end()
    unit = _lookup(state, kind, loc, text)
    army = _lookup(state, ARMY, aloc, text)
    return Convoy(unit, army, province_of(dest))


@dataclass(frozen=True)
class Action:
    """One order per unit of a single power, sorted by unit location."""

    power: str
    orders: tuple[Order, ...]

    @classmethod
    def of(cls, power: str, orders: Iterable[Order], state: GameState | None = None) -> "Action":
        """Bind orders to ``power``; with ``state`` given, unlisted units hold."""
        by_loc: dict[str, Order] = {}
        for o in orders:
            if o.unit.power != power:
                raise WrongPowerError(f"{render_order(o)}: unit belongs to {o.unit.power}, not {power}")
            if o.unit.province in by_loc:
                raise DuplicateActorError(f"two orders for {o.unit}")
            by_loc[o.unit.province] = o
        if state is not None:
            for u in state.units_of(power):
                by_loc.setdefault(u.province, Hold(u))
        return cls(power, tuple(sorted(by_loc.values(), key=lambda o: o.unit.loc)))

    def order_for(self, unit: Unit) -> Order | None:
        for o in self.orders:
            if o.unit == unit:
                return o
        return None

    def replace(self, order: Order) -> "Action":
        return Action(self.power, tuple(order if o.unit == order.unit else o for o in self.orders))

    def rendered(self) -> tuple[str, ...]:
        return tuple(render_order(o) for o in self.orders)

    def __str__(self) -> str:
        return f"{self.power}: {list(self.rendered())}"


def action_key(action: Action) -> tuple:
    return tuple(order_key(o) for o in action.orders)


def hold_action(state: GameState, power: str) -> Action:
    return Action.of(power, (), state)


def parse_action(texts: Sequence[str], power: str, state: GameState) -> Action:
    return Action.of(power, [parse_order(t, state) for t in texts], state)


def _adjacent_provinces(state: GameState, prov: str) -> set[str]:
    m = state.map
    out = set(m.army_adj.get(prov, ()))
    for loc in m.fleet_locations(prov) if m.provinces[prov].kind != "land" else ():
        out |= {province_of(t) for t in m.fleet_adj.get(loc, ())}
    return out


def _convoy_orders(state: GameState, fleet: Unit, max_len: int = 6) -> list[Order]:
    m = state.map
    fleet_seas = {u.province for u in state.units if u.kind == FLEET and m.is_sea(u.province)}

    def sea_next(s):
        return sorted(p for p in m.reachable_provinces(FLEET, s) if p in fleet_seas)

    found: set[tuple[Unit, str]] = set()
    for army in state.units:
        if army.kind != ARMY or not m.is_coastal(army.province):
            continue
        starts = sorted(s for s in fleet_seas if army.province in m.reachable_provinces(FLEET, s))
        stack = [(s, (s,)) for s in starts]
        while stack:
            node, path = stack.pop()
            if fleet.province in path:
                for d in m.reachable_provinces(FLEET, node):
                    if d != army.province and m.is_coastal(d):
                        found.add((army, d))
            if len(path) < max_len:
                stack.extend((n, path + (n,)) for n in sea_next(node) if n not in path)
    return [Convoy(fleet, army, d) for army, d in found]


def legal_orders(state: GameState, unit: Unit) -> list[Order]:
    """Hold, direct moves, supports for neighbouring units and convoys, canonically sorted."""
    if state.unit_at(unit.province) != unit:
        raise UnitNotInStateError(f"{unit} ({unit.power}) is not on the board")
    m = state.map
    out: set[Order] = {Hold(unit)}
    out.update(Move(unit, t) for t in m.move_targets(unit.kind, unit.loc))
    reach = m.reachable_provinces(unit.kind, unit.loc)
    for prov in _adjacent_provinces(state, unit.province):
        other = state.unit_at(prov)
        if other is None:
            continue
        if other.province in reach:
            out.add(SupportHold(unit, other))
        for dest in m.reachable_provinces(other.kind, other.loc):
            if dest in reach and dest != unit.province:
                out.add(SupportMove(unit, other, dest))
    if unit.kind == FLEET and m.is_sea(unit.province):
        out.update(_convoy_orders(state, unit))
    return sorted(out, key=order_key)
