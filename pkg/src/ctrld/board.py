"""Static map data (provinces, adjacency, aliases) and board positions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

ARMY = "A"
FLEET = "F"
UNIT_KINDS = (ARMY, FLEET)
PROVINCE_KINDS = ("land", "sea", "coastal")
COAST_TAGS = ("NC", "SC", "EC", "WC")


class MapError(ValueError):
    """Malformed map file or violated map invariant."""


class StateError(ValueError):
    """Malformed game-state file or violated board invariant."""


class UnknownNameError(LookupError):
    pass


class AmbiguousNameError(LookupError):
    def __init__(self, name: str, candidates: Iterable[str]):
        self.candidates = sorted(candidates)
        super().__init__(f"ambiguous province name {name!r}: {', '.join(self.candidates)}")


def province_of(loc: str) -> str:
    return loc.split("/", 1)[0]


def coast_of(loc: str) -> str | None:
    parts = loc.split("/", 1)
    return parts[1] if len(parts) == 2 else None


def normalize_name(name: str) -> str:
    return " ".join(name.replace("’", "'").lower().split())


@dataclass(frozen=True)
class Province:
    id: str
    kind: str
    is_supply_center: bool = False
    coasts: tuple[str, ...] = ()
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class MapDef:
    """Immutable map. Compared and hashed by identity."""

    name: str
    provinces: Mapping[str, Province]
    army_adj: Mapping[str, frozenset[str]]
    fleet_adj: Mapping[str, frozenset[str]]
    home_centers: Mapping[str, frozenset[str]]
    alias_table: Mapping[str, tuple[str, ...]]
    _reach: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def powers(self) -> tuple[str, ...]:
        return tuple(sorted(self.home_centers))

    @property
    def supply_centers(self) -> frozenset[str]:
        return frozenset(p.id for p in self.provinces.values() if p.is_supply_center)

    def fleet_locations(self, prov: str) -> tuple[str, ...]:
        p = self.provinces[prov]
        if p.coasts:
            return tuple(f"{prov}/{c}" for c in p.coasts)
        return (prov,)

    def move_targets(self, kind: str, loc: str) -> tuple[str, ...]:
        """Locations a unit of ``kind`` at ``loc`` can move to directly, sorted."""
        if kind == ARMY:
            return tuple(sorted(self.army_adj.get(province_of(loc), ())))
        return tuple(sorted(self.fleet_adj.get(loc, ())))

    def reachable_provinces(self, kind: str, loc: str) -> frozenset[str]:
        key = (kind, loc)
        hit = self._reach.get(key)
        if hit is None:
            hit = self._reach[key] = frozenset(province_of(t) for t in self.move_targets(kind, loc))
        return hit

    def can_reach(self, kind: str, loc: str, prov: str) -> bool:
        return province_of(prov) in self.reachable_provinces(kind, loc)

    def fleet_dest(self, loc: str, dest: str) -> str | None:
        """Coast-qualified fleet destination, inferring the coast when it is unique."""
        targets = self.fleet_adj.get(loc, frozenset())
        if dest in targets:
            return dest
        if coast_of(dest) is None:
            options = [t for t in targets if province_of(t) == dest]
            if len(options) == 1:
                return options[0]
        return None

    def is_sea(self, prov: str) -> bool:
        return self.provinces[province_of(prov)].kind == "sea"

    def is_coastal(self, prov: str) -> bool:
        return self.provinces[province_of(prov)].kind == "coastal"


def _edge_name(e: Mapping) -> str:
    a = e.get("a", "?") + (f"/{e['a_coast']}" if e.get("a_coast") else "")
    b = e.get("b", "?") + (f"/{e['b_coast']}" if e.get("b_coast") else "")
    return f"{a}->{b}"


def build_map(doc: Mapping, source: str = "<map>", validate: bool = True) -> MapDef:
    """Build a MapDef from a decoded map document."""

    def fail(where: str, msg: str):
        raise MapError(f"{source}: {where}: {msg}")

    if not isinstance(doc, Mapping):
        fail("root", "expected an object")
    for key in ("provinces", "edges", "home_centers"):
        if key not in doc:
            fail(key, "missing field")

    provinces: dict[str, Province] = {}
    for i, raw in enumerate(doc["provinces"]):
        where = f"provinces[{i}]"
        try:
            pid = raw["id"]
            kind = raw["kind"]
        except (KeyError, TypeError):
            fail(where, "needs 'id' and 'kind'")
        if not (isinstance(pid, str) and len(pid) == 3 and pid.isalpha() and pid.isupper()):
            fail(f"{where}.id", f"bad province id {pid!r}")
        if pid in provinces:
            fail(f"{where}.id", f"duplicate province {pid}")
        if kind not in PROVINCE_KINDS:
            fail(f"{where}.kind", f"unknown kind {kind!r}")
        sc = bool(raw.get("sc", False))
        coasts = tuple(raw.get("coasts", ()))
        if validate:
            if sc and kind == "sea":
                fail(f"{where}.sc", f"sea province {pid} cannot be a supply center")
            if coasts and kind != "coastal":
                fail(f"{where}.coasts", f"coast tags on non-coastal province {pid}")
            for c in coasts:
                if c not in COAST_TAGS:
                    fail(f"{where}.coasts", f"unknown coast tag {c!r} on {pid}")
        aliases = tuple(normalize_name(a) for a in raw.get("aliases", ()))
        provinces[pid] = Province(pid, kind, sc, coasts, aliases)

    army: dict[str, set[str]] = {}
    fleet: dict[str, set[str]] = {}
    directed: set[tuple[str, str, str]] = set()
    for i, e in enumerate(doc["edges"]):
        where = f"edges[{i}] ({_edge_name(e)})"
        a, b = e.get("a"), e.get("b")
        for end in (a, b):
            if end not in provinces:
                fail(where, f"unknown province {end!r}")
        kinds = e.get("kinds") or []
        for kind in kinds:
            if kind not in ("army", "fleet"):
                fail(where, f"unknown unit kind {kind!r}")
        a_loc = a + (f"/{e['a_coast']}" if e.get("a_coast") else "")
        b_loc = b + (f"/{e['b_coast']}" if e.get("b_coast") else "")
        if validate:
            for loc in (a_loc, b_loc):
                p = provinces[province_of(loc)]
                c = coast_of(loc)
                if c is not None and c not in p.coasts:
                    fail(where, f"{p.id} has no coast {c}")
            if "army" in kinds and (provinces[a].kind == "sea" or provinces[b].kind == "sea"):
                fail(where, "army edge touches a sea province")
            if "fleet" in kinds:
                for loc in (a_loc, b_loc):
                    p = provinces[province_of(loc)]
                    if p.kind == "land":
                        fail(where, f"fleet edge touches landlocked {p.id}")
                    if p.coasts and coast_of(loc) is None:
                        fail(where, f"fleet edge into split-coast {p.id} needs a coast")
        if "army" in kinds:
            army.setdefault(a, set()).add(b)
            directed.add(("army", a, b))
        if "fleet" in kinds:
            fleet.setdefault(a_loc, set()).add(b_loc)
            directed.add(("fleet", a_loc, b_loc))

    if validate:
        for kind, x, y in sorted(directed):
            if (kind, y, x) not in directed:
                raise MapError(f"{source}: asymmetric {kind} edge {x}->{y} (no {y}->{x})")

    home: dict[str, frozenset[str]] = {}
    for power, ids in doc["home_centers"].items():
        for pid in ids:
            if pid not in provinces:
                fail(f"home_centers.{power}", f"unknown province {pid!r}")
            if validate and not provinces[pid].is_supply_center:
                fail(f"home_centers.{power}", f"home center {pid} is not a supply center")
        home[power] = frozenset(ids)

    table: dict[str, list[str]] = {}
    for p in provinces.values():
        for name in (p.id.lower(), *p.aliases):
            owners = table.setdefault(name, [])
            if p.id not in owners:
                owners.append(p.id)
    if validate:
        for name, owners in sorted(table.items()):
            if len(owners) > 1:
                fail("aliases", f"name {name!r} maps to several provinces: {', '.join(sorted(owners))}")

    return MapDef(
        name=doc.get("name", Path(source).stem),
        provinces=provinces,
        army_adj={k: frozenset(v) for k, v in army.items()},
        fleet_adj={k: frozenset(v) for k, v in fleet.items()},
        home_centers=home,
        alias_table={k: tuple(sorted(v)) for k, v in table.items()},
    )


def load_map(path: str | Path) -> MapDef:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MapError(f"{path}: cannot read: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return build_map(doc, source=str(path))


_BUILTIN: dict[str, MapDef] = {}


def builtin_map(name: str = "standard") -> MapDef:
    """Maps shipped with the package: ``standard`` and ``mini``."""
    if name not in _BUILTIN:
        ref = resources.files("ctrld") / "data" / f"{name}.json"
        if not ref.is_file():
            raise MapError(f"no built-in map named {name!r}")
        _BUILTIN[name] = build_map(json.loads(ref.read_text()), source=f"builtin:{name}")
    return _BUILTIN[name]


def get_map(spec: str | Path) -> MapDef:
    """Accept either a built-in map name or a path to a map file."""
    if isinstance(spec, str) and not spec.endswith(".json") and "/" not in spec:
        return builtin_map(spec)
    return load_map(spec)


def resolve_alias(mapdef: MapDef, name: str) -> str:
    key = normalize_name(name)
    owners = mapdef.alias_table.get(key)
    if not owners:
        raise UnknownNameError(f"unknown province name {name!r}")
    if len(owners) > 1:
        raise AmbiguousNameError(name, owners)
    return owners[0]


@dataclass(frozen=True, order=True)
class Unit:
    power: str
    kind: str
    loc: str

    @cached_property
    def province(self) -> str:
        return province_of(self.loc)

    def __str__(self) -> str:
        return f"{self.kind} {self.loc}"


def check_unit(mapdef: MapDef, unit: Unit) -> None:
    prov = unit.province
    if prov not in mapdef.provinces:
        raise StateError(f"{unit}: unknown province {prov}")
    p = mapdef.provinces[prov]
    if unit.kind not in UNIT_KINDS:
        raise StateError(f"{unit}: unknown unit kind {unit.kind!r}")
    if unit.kind == ARMY:
        if p.kind == "sea":
            raise StateError(f"{unit}: army on sea province")
        if coast_of(unit.loc) is not None:
            raise StateError(f"{unit}: armies do not take coasts")
    else:
        if p.kind == "land":
            raise StateError(f"{unit}: fleet on landlocked province")
        if p.coasts and coast_of(unit.loc) not in p.coasts:
            raise StateError(f"{unit}: fleet on {prov} needs one of coasts {'/'.join(p.coasts)}")
        if not p.coasts and coast_of(unit.loc) is not None:
            raise StateError(f"{unit}: {prov} has no coasts")


def parse_unit_token(text: str, power: str) -> Unit:
    parts = text.upper().split()
    if len(parts) != 2 or parts[0] not in UNIT_KINDS:
        raise StateError(f"bad unit token {text!r} (expected e.g. 'A PAR' or 'F STP/SC')")
    return Unit(power, parts[0], parts[1])


@dataclass(frozen=True)
class GameState:
    """Board position. A value type: counterfactual branches build new instances."""

    map: MapDef
    phase: str
    units: tuple[Unit, ...]
    centers: tuple[tuple[str, tuple[str, ...]], ...]
    _by_prov: dict = field(init=False, repr=False, compare=False, hash=False)
    _by_power: dict = field(init=False, repr=False, compare=False, hash=False)
    _centers: dict = field(init=False, repr=False, compare=False, hash=False)
    _hash: int = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        by_power: dict[str, list[Unit]] = {}
        for u in self.units:
            by_power.setdefault(u.power, []).append(u)
        object.__setattr__(self, "_by_prov", {u.province: u for u in self.units})
        object.__setattr__(self, "_by_power", {p: tuple(us) for p, us in by_power.items()})
        object.__setattr__(self, "_centers", {p: frozenset(c) for p, c in self.centers})
        object.__setattr__(self, "_hash", hash((id(self.map), self.phase, self.units, self.centers)))

    def __hash__(self) -> int:
        return self._hash

    @classmethod
    def build(
        cls,
        mapdef: MapDef,
        phase: str,
        units: Mapping[str, Iterable[Unit | str]] | Iterable[Unit],
        centers: Mapping[str, Iterable[str]] | None = None,
    ) -> "GameState":
        flat: list[Unit] = []
        if isinstance(units, Mapping):
            for power, items in units.items():
                for item in items:
                    flat.append(item if isinstance(item, Unit) else parse_unit_token(item, power))
        else:
            flat = list(units)
        seen: dict[str, Unit] = {}
        for u in flat:
            if u.power not in mapdef.home_centers:
                raise StateError(f"{u}: unknown power {u.power!r}")
            check_unit(mapdef, u)
            if u.province in seen:
                raise StateError(f"two units in {u.province}: {seen[u.province]} and {u}")
            seen[u.province] = u
        owned: dict[str, set[str]] = {p: set() for p in mapdef.powers}
        owner_of: dict[str, str] = {}
        for power, ids in (centers or {}).items():
            if power not in owned:
                raise StateError(f"centers: unknown power {power!r}")
            for pid in ids:
                if pid not in mapdef.provinces or not mapdef.provinces[pid].is_supply_center:
                    raise StateError(f"centers.{power}: {pid} is not a supply center")
                if pid in owner_of and owner_of[pid] != power:
                    raise StateError(f"center {pid} owned by both {owner_of[pid]} and {power}")
                owner_of[pid] = power
                owned[power].add(pid)
        return cls(
            mapdef,
            phase,
            tuple(sorted(flat, key=lambda u: (u.loc, u.power))),
            tuple((p, tuple(sorted(c))) for p, c in sorted(owned.items())),
        )

    @classmethod
    def initial(cls, mapdef: MapDef, phase: str, units: Mapping[str, Iterable[str]]) -> "GameState":
        """Position where every power owns exactly its home centers."""
        return cls.build(mapdef, phase, units, {p: sorted(h) for p, h in mapdef.home_centers.items()})

    @property
    def powers(self) -> tuple[str, ...]:
        return self.map.powers

    def units_of(self, power: str) -> tuple[Unit, ...]:
        return self._by_power.get(power, ())

    def unit_at(self, prov: str) -> Unit | None:
        return self._by_prov.get(province_of(prov))

    def centers_of(self, power: str) -> frozenset[str]:
        return self._centers.get(power, frozenset())

    def owner(self, prov: str) -> str | None:
        for power, owned in self._centers.items():
            if prov in owned:
                return power
        return None

    def to_doc(self) -> dict:
        units: dict[str, list[str]] = {}
        for u in self.units:
            units.setdefault(u.power, []).append(str(u))
        return {
            "phase": self.phase,
            "units": {p: units[p] for p in sorted(units)},
            "centers": {p: list(c) for p, c in self.centers if c},
        }


def state_from_doc(doc: Mapping, mapdef: MapDef, source: str = "<state>") -> GameState:
    try:
        return GameState.build(mapdef, doc["phase"], doc.get("units", {}), doc.get("centers", {}))
    except KeyError as exc:
        raise StateError(f"{source}: missing field {exc}") from exc
    except StateError as exc:
        raise StateError(f"{source}: {exc}") from exc


def load_state(path: str | Path, mapdef: MapDef) -> GameState:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise StateError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return state_from_doc(doc, mapdef, str(path))


def dump_state(state: GameState) -> str:
    return json.dumps(state.to_doc(), indent=1, sort_keys=True) + "\n"
