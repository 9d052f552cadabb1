"""Game logs on disk, lie categories, train/eval sampling and detection metrics.

A dataset is a directory with one subdirectory per game::

    <game>/game.json            optional, {"map": "<builtin name or path>"}
    <game>/state_<phase>.txt    position before the phase is played
    <game>/messages.txt         one JSON record per line
    <game>/orders_<phase>.txt   lines of ``POWER: <order>``
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .board import GameState, MapDef, dump_state, get_map, load_state
from .extract import LIE, TRUTH, Message
from .orders import Action, OrderError, parse_order

log = logging.getLogger(__name__)

MESSAGES_FILE = "messages.txt"
META_FILE = "game.json"
_STATE_RE = re.compile(r"^state_(.+)\.txt$")
_ORDERS_RE = re.compile(r"^orders_(.+)\.txt$")


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    pass


class CrossReferenceError(DatasetError):
    pass


class IdMismatchError(DatasetError):
    pass


@dataclass
class GameLog:
    game_id: str
    map_name: str
    states: dict[str, GameState]
    messages: list[Message]
    final_orders: dict[str, dict[str, Action]] = field(default_factory=dict)
    tags: dict[str, str] = field(default_factory=dict)  # msg_id -> scenario or other slice label

    @property
    def map(self) -> MapDef:
        return next(iter(self.states.values())).map

    def state_for(self, msg: Message) -> GameState:
        return self.states[msg.phase]


# -- reading and writing -----------------------------------------------------------------


def _message_from_record(rec: Mapping, game_id: str, where: str) -> tuple[Message, str | None]:
    if not isinstance(rec, Mapping):
        raise SchemaError(f"{where}: record is not an object")
    for key in ("idx", "phase", "sender", "recipient", "text"):
        if key not in rec:
            raise SchemaError(f"{where}: missing field {key!r}")
    if not isinstance(rec["idx"], int) or not isinstance(rec["text"], str):
        raise SchemaError(f"{where}: idx must be an integer and text a string")
    form = rec.get("logical_form")
    if form is not None:
        if not isinstance(form, Mapping) or not all(
            isinstance(v, list) and all(isinstance(s, str) for s in v) for v in form.values()
        ):
            raise SchemaError(f"{where}: logical_form must map powers to lists of order strings")
        form = {k: tuple(v) for k, v in form.items()}
    try:
        msg = Message(
            game_id, rec["idx"], rec["phase"], rec["sender"], rec["recipient"], rec["text"],
            rec.get("annotation"), form,
        )
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None
    return msg, rec.get("tag")


def read_orders(path: Path, state: GameState) -> dict[str, Action]:
    by_power: dict[str, list] = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        power, sep, text = line.partition(":")
        power = power.strip()
        if not sep or not power:
            raise SchemaError(f"{path}:{n}: expected 'POWER: order'")
        try:
            order = parse_order(text.strip(), state)
        except OrderError as exc:
            raise OrderError(f"{path}:{n}: {exc}") from exc
        if order.unit.power != power:
            raise SchemaError(f"{path}:{n}: {order.unit} does not belong to {power}")
        by_power.setdefault(power, []).append(order)
    try:
        return {p: Action.of(p, orders, state) for p, orders in sorted(by_power.items())}
    except OrderError as exc:
        raise OrderError(f"{path}: {exc}") from exc


def load_game(path: str | Path, mapdef: MapDef | None = None) -> GameLog:
    path = Path(path)
    meta = {}
    if (path / META_FILE).is_file():
        meta = json.loads((path / META_FILE).read_text())
    map_name = meta.get("map", "standard")
    if mapdef is None:
        mapdef = get_map(map_name)
    states = {}
    orders_files = {}
    for f in sorted(path.iterdir()):
        if m := _STATE_RE.match(f.name):
            state = load_state(f, mapdef)
            if state.phase != m.group(1):
                raise SchemaError(f"{f}: file is for phase {m.group(1)} but holds {state.phase}")
            states[state.phase] = state
        elif m := _ORDERS_RE.match(f.name):
            orders_files[m.group(1)] = f
    if not states:
        raise SchemaError(f"{path}: no state_<phase>.txt files")

    msg_path = path / MESSAGES_FILE
    messages: list[Message] = []
    tags = {}
    if msg_path.is_file():
        for n, line in enumerate(msg_path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            where = f"{msg_path}: record {n}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: {exc.msg}") from None
            msg, tag = _message_from_record(rec, path.name, where)
            if msg.phase not in states:
                raise CrossReferenceError(f"{where}: phase {msg.phase} has no state snapshot")
            if msg.idx in {m.idx for m in messages}:
                raise SchemaError(f"{where}: duplicate idx {msg.idx}")
            messages.append(msg)
            if tag is not None:
                tags[msg.msg_id] = tag

    final = {}
    for phase, f in sorted(orders_files.items()):
        if phase not in states:
            raise CrossReferenceError(f"{f}: phase {phase} has no state snapshot")
        final[phase] = read_orders(f, states[phase])
    return GameLog(path.name, map_name, states, messages, final, tags)


def load_dataset(path: str | Path, mapdef: MapDef | None = None) -> list[GameLog]:
    """Load a directory of games, or a single game directory."""
    path = Path(path)
    if not path.is_dir():
        raise DatasetError(f"{path}: not a directory")
    if (path / MESSAGES_FILE).is_file() or any(_STATE_RE.match(f.name) for f in path.iterdir()):
        return [load_game(path, mapdef)]
    games = [load_game(d, mapdef) for d in sorted(path.iterdir()) if d.is_dir()]
    if not games:
        raise DatasetError(f"{path}: no game directories")
    return games


def message_record(msg: Message, tag: str | None = None) -> dict:
    rec = {"idx": msg.idx, "phase": msg.phase, "sender": msg.sender, "recipient": msg.recipient, "text": msg.text}
    if msg.annotation is not None:
        rec["annotation"] = msg.annotation
    if msg.logical_form is not None:
        rec["logical_form"] = {k: list(v) for k, v in msg.logical_form.items()}
    if tag is not None:
        rec["tag"] = tag
    return rec


def write_game(log_: GameLog, root: str | Path) -> Path:
    out = Path(root) / log_.game_id
    out.mkdir(parents=True, exist_ok=True)
    (out / META_FILE).write_text(json.dumps({"map": log_.map_name}, sort_keys=True) + "\n")
    for phase, state in sorted(log_.states.items()):
        (out / f"state_{phase}.txt").write_text(dump_state(state))
    lines = [json.dumps(message_record(m, log_.tags.get(m.msg_id)), sort_keys=True) for m in log_.messages]
    (out / MESSAGES_FILE).write_text("".join(line + "\n" for line in lines))
    for phase, acts in sorted(log_.final_orders.items()):
        body = "".join(f"{p}: {o}\n" for p in sorted(acts) for o in acts[p].rendered())
        (out / f"orders_{phase}.txt").write_text(body)
    return out


# -- lie categories -----------------------------------------------------------------------

DECEPTIVE_MOVES = "Deceptive Moves"
FEIGNING_TRUST = "Feigning Trust/Loyalty"
WITHHOLDING = "Withholding Information"
FALSE_EXCUSE = "False Excuse"
OTHER = "Other"

CATEGORY_KEYWORDS: tuple[tuple[str, tuple[str, ...]], ...] = (
    (DECEPTIVE_MOVES, ("support", "move", "attack", "retreat", "convoy", "hold", "bounce")),
    (FEIGNING_TRUST, ("trust", "friend")),
    (WITHHOLDING, ("no idea", "not sure")),
    (FALSE_EXCUSE, ("sorry", "busy")),
)
CATEGORIES = tuple(c for c, _ in CATEGORY_KEYWORDS) + (OTHER,)


def _keyword_re(word: str) -> re.Pattern:
    if " " in word:
        return re.compile(re.escape(word))
    return re.compile(rf"\b{re.escape(word)}\b")


_CATEGORY_RES = tuple((c, tuple(_keyword_re(w) for w in words)) for c, words in CATEGORY_KEYWORDS)


def categorize_lie(text: str) -> str:
    """First category whose keyword occurs; single words match whole words only."""
    low = text.lower()
    for category, patterns in _CATEGORY_RES:
        if any(p.search(low) for p in patterns):
            return category
    return OTHER


# -- sampling ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Split:
    train: tuple[Message, ...]
    eval: tuple[Message, ...]
    annotated: int
    extra: int
    warnings: tuple[str, ...] = ()

    def counts(self) -> dict:
        return {"train": len(self.train), "eval": len(self.eval), "annotated": self.annotated, "extra": self.extra}


def _order(msgs: Iterable[Message]) -> list[Message]:
    return sorted(msgs, key=lambda m: (m.game_id, m.idx))


def split_sample(logs: Sequence[GameLog], seed: int, n_extra: int = 1500, n_eval: int = 1000) -> Split:
    """Annotated messages plus a seeded sample for training; a disjoint seeded sample for evaluation."""
    if not logs:
        raise DatasetError("no games to split")
    msgs = _order(m for g in logs for m in g.messages)
    annotated = [m for m in msgs if m.logical_form]
    plain = [m for m in msgs if not m.logical_form]
    warns = []
    if not annotated:
        warns.append("no messages carry logical-form annotations; training set is sampled only")
    rng = random.Random(seed)
    k_extra = min(n_extra, len(plain))
    if k_extra < n_extra:
        warns.append(f"only {len(plain)} unannotated messages; extra training sample capped at {k_extra}")
    extra = rng.sample(plain, k_extra)
    taken = {m.msg_id for m in extra}
    rest = [m for m in plain if m.msg_id not in taken]
    k_eval = min(n_eval, len(rest))
    if k_eval < n_eval:
        warns.append(f"only {len(rest)} messages left for evaluation; eval sample capped at {k_eval}")
    held = rng.sample(rest, k_eval)
    for w in warns:
        log.warning(w)
    return Split(tuple(_order(annotated + extra)), tuple(_order(held)), len(annotated), k_extra, tuple(warns))


# -- metrics ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    detector: str
    tp: int
    fp: int
    fn: int
    tn: int
    abstain: int = 0
    per_category: tuple[tuple[str, int, int], ...] = ()  # (category, lies, lies detected)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None:
            return None
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def deceptive_prediction_rate(self) -> float | None:
        return (self.tp + self.fp) / self.total if self.total else None

    def to_record(self) -> dict:
        return {
            "detector": self.detector,
            "TP": self.tp,
            "FP": self.fp,
            "FN": self.fn,
            "TN": self.tn,
            "abstain": self.abstain,
            "precision": self.precision,
            "recall": self.recall,
            "F1": self.f1,
            "deceptive_prediction_rate": self.deceptive_prediction_rate,
            "per_category": {c: {"lies": n, "detected": d} for c, n, d in self.per_category},
        }


def compute_metrics(
    predictions: Mapping[str, bool | None],
    labels: Mapping[str, bool],
    detector: str = "",
    categories: Mapping[str, str] | None = None,
) -> EvalReport:
    """Confusion counts keyed by message id. ``None`` predictions are abstentions and count as negative."""
    if set(predictions) != set(labels):
        missing = sorted(set(labels) - set(predictions))[:3]
        extra = sorted(set(predictions) - set(labels))[:3]
        raise IdMismatchError(f"prediction/label ids differ (missing {missing}, unexpected {extra})")
    tp = fp = fn = tn = abstain = 0
    per: dict[str, list[int]] = {}
    for key in sorted(labels):
        pred = predictions[key]
        if pred is None:
            abstain += 1
        flagged = bool(pred)
        truth = bool(labels[key])
        if truth and flagged:
            tp += 1
        elif flagged:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
        if truth and categories is not None and key in categories:
            row = per.setdefault(categories[key], [0, 0])
            row[0] += 1
            row[1] += flagged
    return EvalReport(detector, tp, fp, fn, tn, abstain, tuple((c, n, d) for c, (n, d) in sorted(per.items())))


REPORT_COLUMNS = ("detector", "TP", "FP", "FN", "TN", "abstain", "precision", "recall", "F1", "deceptive_prediction_rate")


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return "NA" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def report_table(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        rec = r.to_record()
        w.writerow([_cell(rec[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def write_reports(reports: Sequence[EvalReport], out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "report.tsv"
    table.write_text(report_table(reports))
    records = out / "report.jsonl"
    records.write_text("".join(json.dumps(r.to_record(), sort_keys=True) + "\n" for r in reports))
    return table, records


def labels_of(msgs: Iterable[Message]) -> dict[str, bool]:
    """Ground truth for annotated messages; unannotated messages are skipped."""
    return {m.msg_id: m.annotation == LIE for m in msgs if m.annotation in (TRUTH, LIE)}
