"""Simultaneous movement resolution for one phase.

Uses the guess-and-check scheme: each order owns one boolean decision (move
succeeds / support is given / convoying fleet survives). Decisions are resolved
recursively; when a dependency cycle shows up both guesses are tried, and if
they disagree a backup rule settles it: cycles that involve a convoy fail the
convoyed moves, plain cycles are circular movement and all succeed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .board import ARMY, FLEET, GameState, Unit, coast_of, province_of
from .orders import (
    Action,
    Convoy,
    Hold,
    Move,
    Order,
    SupportHold,
    SupportMove,
    render_order,
)

SUCCEEDS = "succeeds"
FAILS = "fails"
CUT = "cut"

_UNRESOLVED, _GUESSING, _RESOLVED = 0, 1, 2


class IncompleteJointError(ValueError):
    pass


@dataclass(frozen=True)
class Resolution:
    outcomes: tuple[tuple[Order, str], ...]
    dislodged: tuple[Unit, ...]
    next_state: GameState
    invalid: tuple[Order, ...] = ()

    def outcome(self, order: Order) -> str:
        for o, res in self.outcomes:
            if o == order:
                return res
        raise KeyError(render_order(order))

    def to_doc(self) -> dict:
        return {
            "outcomes": [[render_order(o), res] for o, res in self.outcomes],
            "dislodged": [f"{u.power} {u}" for u in self.dislodged],
            "invalid": [render_order(o) for o in self.invalid],
            "next_state": self.next_state.to_doc(),
        }


def complete_joint(state: GameState, joint: Mapping[str, Action]) -> dict[str, Order]:
    """Check listed Actions and return one order per occupied province (missing powers hold)."""
    by_prov: dict[str, Order] = {}
    for power, action in joint.items():
        if action.power != power:
            raise IncompleteJointError(f"action for {action.power} filed under {power}")
        for o in action.orders:
            u = o.unit
            if u.power != power:
                raise IncompleteJointError(f"{render_order(o)}: unit of {u.power} in {power}'s action")
            if state.unit_at(u.province) != u:
                raise IncompleteJointError(f"{render_order(o)}: {power} has no such unit")
            if u.province in by_prov:
                raise IncompleteJointError(f"two orders for {u}")
            by_prov[u.province] = o
        missing = [str(u) for u in state.units_of(power) if u.province not in by_prov]
        if missing:
            raise IncompleteJointError(f"{power}'s action has no order for {', '.join(missing)}")
    for u in state.units:
        by_prov.setdefault(u.province, Hold(u))
    return by_prov


class _Resolver:
    def __init__(self, state: GameState, orders: dict[str, Order]):
        self.state = state
        self.m = state.map
        self.submitted = orders
        self.orders: dict[str, Order] = {}
        self.invalid: set[str] = set()
        self.dest: dict[str, str] = {}  # move source -> destination location
        self.convoyed: set[str] = set()
        for prov, o in orders.items():
            eff = self._validate(o)
            if eff is None:
                self.invalid.add(prov)
                eff = Hold(o.unit)
            self.orders[prov] = eff

        self.moves_to: dict[str, list[str]] = {}
        for prov in sorted(self.dest):
            self.moves_to.setdefault(province_of(self.dest[prov]), []).append(prov)

        self.move_supports: dict[tuple[str, str], list[str]] = {}
        self.hold_supports: dict[str, list[str]] = {}
        self.convoy_fleets: dict[tuple[str, str], set[str]] = {}
        self.matched: set[str] = set()
        for prov in sorted(self.orders):
            o = self.orders[prov]
            if isinstance(o, SupportMove):
                t = o.target.province
                if t in self.dest and province_of(self.dest[t]) == o.dest:
                    self.move_supports.setdefault((t, o.dest), []).append(prov)
                    self.matched.add(prov)
            elif isinstance(o, SupportHold):
                t = o.target.province
                if t not in self.dest:
                    self.hold_supports.setdefault(t, []).append(prov)
                    self.matched.add(prov)
            elif isinstance(o, Convoy):
                a = o.army.province
                if a in self.convoyed and province_of(self.dest[a]) == o.dest:
                    self.convoy_fleets.setdefault((a, o.dest), set()).add(prov)
                    self.matched.add(prov)

        self.result: dict[str, bool] = {}
        self.status: dict[str, int] = {}
        self.deps: list[str] = []
        self.paradox_failed: set[str] = set()

    # -- validation -------------------------------------------------------

    def _validate(self, o: Order) -> Order | None:
        m, u = self.m, o.unit
        if isinstance(o, Hold):
            return o
        if isinstance(o, Move):
            dest = o.dest
            if province_of(dest) not in m.provinces or province_of(dest) == u.province:
                return None
            if u.kind == FLEET:
                if o.via_convoy:
                    return None
                loc = m.fleet_dest(u.loc, dest)
                if loc is None:
                    return None
                self.dest[u.province] = loc
                return Move(u, loc)
            direct = province_of(dest) in m.army_adj.get(u.province, ())
            if coast_of(dest) is not None:
                return None
            if direct and not o.via_convoy:
                self.dest[u.province] = dest
                return o
            if m.is_coastal(u.province) and m.is_coastal(dest):
                self.dest[u.province] = dest
                self.convoyed.add(u.province)
                return o
            return None
        if isinstance(o, SupportHold):
            t = o.target
            if self.state.unit_at(t.province) != t or not m.can_reach(u.kind, u.loc, t.province):
                return None
            return o
        if isinstance(o, SupportMove):
            t = o.target
            if self.state.unit_at(t.province) != t or t.province == o.dest:
                return None
            if o.dest == u.province or not m.can_reach(u.kind, u.loc, o.dest):
                return None
            return o
        if isinstance(o, Convoy):
            a = o.army
            if u.kind != FLEET or not m.is_sea(u.province):
                return None
            if self.state.unit_at(a.province) != a or a.kind != ARMY:
                return None
            return o
        return None

    # -- decision machinery -------------------------------------------------

    def resolve(self, prov: str) -> bool:
        st = self.status.get(prov, _UNRESOLVED)
        if st == _RESOLVED:
            return self.result[prov]
        if st == _GUESSING:
            if prov not in self.deps:
                self.deps.append(prov)
            return self.result[prov]
        old = len(self.deps)
        self.result[prov] = False
        self.status[prov] = _GUESSING
        first = self._adjudicate(prov)
        if len(self.deps) == old:
            if self.status[prov] != _RESOLVED:
                self.result[prov] = first
                self.status[prov] = _RESOLVED
            return first
        if self.deps[old] != prov:
            self.deps.append(prov)
            self.result[prov] = first
            return first
        self._reset_deps(old)
        self.result[prov] = True
        self.status[prov] = _GUESSING
        second = self._adjudicate(prov)
        if first == second:
            self._reset_deps(old)
            self.result[prov] = first
            self.status[prov] = _RESOLVED
            return first
        self._backup_rule(old)
        return self.resolve(prov)

    def _reset_deps(self, old: int):
        while len(self.deps) > old:
            self.status[self.deps.pop()] = _UNRESOLVED

    def _backup_rule(self, old: int):
        cycle = self.deps[old:]
        del self.deps[old:]
        convoys = [p for p in cycle if isinstance(self.orders[p], Convoy)]
        if convoys:
            convoy_moves = {p for p in cycle if p in self.convoyed}
            convoy_moves |= {self.orders[p].army.province for p in convoys} & self.convoyed
            for p in cycle:
                self.status[p] = _UNRESOLVED
            for p in convoy_moves:
                self.paradox_failed.add(p)
                self.result[p] = False
                self.status[p] = _RESOLVED
        else:
            for p in cycle:
                if p in self.dest:
                    self.result[p] = True
                    self.status[p] = _RESOLVED
                else:
                    self.status[p] = _UNRESOLVED

    def _adjudicate(self, prov: str) -> bool:
        o = self.orders[prov]
        if prov in self.dest:
            return self._move_succeeds(prov)
        if isinstance(o, (SupportHold, SupportMove)):
            return prov in self.matched and not self._support_cut(prov) and not self._attacked_out(prov)
        return not self._attacked_out(prov)

    # -- strengths ------------------------------------------------------------

    def _power(self, prov: str) -> str:
        return self.orders[prov].unit.power

    def _head_to_head(self, src: str) -> str | None:
        if src in self.convoyed:
            return None
        d = province_of(self.dest[src])
        if d in self.dest and d not in self.convoyed and province_of(self.dest[d]) == src:
            return d
        return None

    def _has_path(self, src: str) -> bool:
        if src not in self.convoyed:
            return True
        if src in self.paradox_failed:
            return False
        d = province_of(self.dest[src])
        fleets = self.convoy_fleets.get((src, d), set())
        frontier = sorted(f for f in fleets if src in self.m.reachable_provinces(FLEET, f))
        seen: set[str] = set()
        while frontier:
            f = frontier.pop(0)
            if f in seen:
                continue
            seen.add(f)
            if not self.resolve(f):
                continue
            reach = self.m.reachable_provinces(FLEET, f)
            if d in reach:
                return True
            frontier.extend(sorted(g for g in fleets if g in reach and g not in seen))
        return False

    def _supports(self, src: str, exclude_power: str | None = None) -> int:
        d = province_of(self.dest[src])
        return sum(
            1
            for s in self.move_supports.get((src, d), ())
            if self._power(s) != exclude_power and self.resolve(s)
        )

    def _attack(self, src: str) -> int:
        if not self._has_path(src):
            return 0
        d = province_of(self.dest[src])
        occ = self.state.unit_at(d)
        if occ is not None:
            leaving = d in self.dest and self._head_to_head(src) is None and self.resolve(d)
            if not leaving:
                if occ.power == self._power(src):
                    return 0
                return 1 + self._supports(src, exclude_power=occ.power)
        return 1 + self._supports(src)

    def _hold_strength(self, prov: str) -> int:
        if self.state.unit_at(prov) is None:
            return 0
        if prov in self.dest:
            return 0 if self.resolve(prov) else 1
        return 1 + sum(1 for s in self.hold_supports.get(prov, ()) if self.resolve(s))

    def _prevent(self, src: str) -> int:
        if not self._has_path(src):
            return 0
        opp = self._head_to_head(src)
        if opp is not None and self.resolve(opp):
            return 0
        return 1 + self._supports(src)

    def _move_succeeds(self, src: str) -> bool:
        d = province_of(self.dest[src])
        atk = self._attack(src)
        if atk == 0:
            return False
        opp = self._head_to_head(src)
        if opp is not None:
            if atk <= 1 + self._supports(opp):
                return False
        elif atk <= self._hold_strength(d):
            return False
        return all(atk > self._prevent(o) for o in self.moves_to.get(d, ()) if o != src)

    def _support_cut(self, prov: str) -> bool:
        o = self.orders[prov]
        spared = o.dest if isinstance(o, SupportMove) else None
        for src in self.moves_to.get(prov, ()):
            if src == spared or self._power(src) == o.unit.power:
                continue
            if self._has_path(src):
                return True
        return False

    def _attacked_out(self, prov: str) -> bool:
        return any(self.resolve(src) for src in self.moves_to.get(prov, ()))

    # -- assembly -------------------------------------------------------------

    def run(self, submitted_order: list[Order]) -> Resolution:
        for prov in sorted(self.orders):
            if prov in self.dest or not isinstance(self.orders[prov], Hold):
                self.resolve(prov)
        moved = {p for p in self.dest if self.resolve(p)}
        dislodged = []
        survivors = []
        arrivals = []
        for u in self.state.units:
            p = u.province
            if p in moved:
                arrivals.append(Unit(u.power, u.kind, self.dest[p]))
            elif any(self.resolve(s) for s in self.moves_to.get(p, ())):
                dislodged.append(u)
            else:
                survivors.append(u)
        centers = {p: set(self.state.centers_of(p)) for p in self.state.powers}
        for u in arrivals:
            if self.m.provinces[u.province].is_supply_center:
                for owned in centers.values():
                    owned.discard(u.province)
                centers[u.power].add(u.province)
        survivors += arrivals
        next_state = GameState.build(self.m, self.state.phase, survivors, centers)

        dis = {u.province for u in dislodged}
        outcomes = []
        for o in submitted_order:
            p = o.unit.province
            eff = self.orders[p]
            if p in self.invalid:
                res = FAILS
            elif p in self.dest:
                res = SUCCEEDS if p in moved else FAILS
            elif isinstance(eff, (SupportHold, SupportMove)):
                if p not in self.matched:
                    res = FAILS
                else:
                    res = SUCCEEDS if self.resolve(p) else CUT
            elif isinstance(eff, Convoy):
                res = SUCCEEDS if p in self.matched and p not in dis else FAILS
            else:
                res = FAILS if p in dis else SUCCEEDS
            outcomes.append((o, res))
        return Resolution(
            tuple(outcomes),
            tuple(sorted(dislodged, key=lambda u: u.loc)),
            next_state,
            tuple(self.submitted[p] for p in sorted(self.invalid)),
        )


def resolve(state: GameState, joint: Mapping[str, Action]) -> Resolution:
    """Resolve one movement phase. Powers missing from ``joint`` hold."""
    orders = complete_joint(state, joint)
    listed = sorted(orders.values(), key=lambda o: o.unit.loc)
    return _Resolver(state, orders).run(listed)
