"""Per-message analysis shared by the command line and the acceptance tests.

Workers return plain records (rendered orders, floats) rather than board
objects, so results can cross process boundaries and still compare equal.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .board import GameState, MapDef, get_map, state_from_doc
from .classifier import HashingEncoder, MlpModel, alignment_baseline, featurize, train
from .config import RunConfig
from .dataset import GameLog
from .deception import DeceptionScorer
from .extract import LIE, Extractor, GroundingError, Message, PreconditionError
from .orders import OrderError
from .value import GreedyPolicy, HeuristicValue


@dataclass(frozen=True)
class Analysis:
    msg_id: str
    values: tuple[float, float, float] | None = None
    signature: dict | None = None
    proposal: dict | None = None
    predicted: tuple[str, ...] | None = None
    alignment: dict | None = None
    error: str | None = None


class Components:
    def __init__(self, cfg: RunConfig, mapdef: MapDef):
        self.map = mapdef
        self.value = HeuristicValue(cfg.value)
        self.policy = GreedyPolicy(self.value, cfg.policy)
        self.scorer = DeceptionScorer(self.value, self.policy, cfg.scoring)
        self.extractor = Extractor(mapdef)


def proposal_record(p) -> dict:
    return {
        "proposer": p.proposer,
        "recipient": p.recipient,
        "recipient_orders": list(p.recipient_action.rendered()),
        "proposer_orders": list(p.proposer_action.rendered()),
        "implicit": p.proposer_action_implicit,
        "source": p.source,
        "trace": [[e.side, e.order, e.template, e.span] for e in p.trace],
    }


def analyze(msg: Message, state: GameState, comps: Components) -> Analysis:
    try:
        proposal = comps.extractor.extract(msg, state, comps.policy)
        if proposal is None:
            return Analysis(msg.msg_id)
        sig = comps.scorer.compute_signature(state, proposal, msg_id=msg.msg_id)
        predicted = (
            comps.policy.sample(state, proposal.proposer)
            if state.units_of(proposal.proposer)
            else proposal.proposer_action
        )
    except (GroundingError, PreconditionError, OrderError) as exc:
        detail = str(exc) if msg.msg_id in str(exc) else f"{msg.msg_id}: {exc}"
        return Analysis(msg.msg_id, error=detail)
    align = alignment_baseline(proposal, predicted)
    return Analysis(
        msg.msg_id,
        sig.values,
        sig.to_record(),
        proposal_record(proposal),
        predicted.rendered(),
        {
            "label": align.label,
            "misaligned": align.misaligned_count,
            "aligned": align.aligned_count,
            "misaligned_orders": [list(pair) for pair in align.misaligned],
        },
    )


_WORKER: dict = {}


def _init_worker(cfg: RunConfig, map_spec: str):
    _WORKER["cfg"] = cfg
    _WORKER["comps"] = Components(cfg, get_map(map_spec))


def _work(item: tuple[Message, dict]) -> Analysis:
    msg, state_doc = item
    comps = _WORKER["comps"]
    return analyze(msg, state_from_doc(state_doc, comps.map), comps)


def analyze_all(logs: Sequence[GameLog], cfg: RunConfig, jobs: int = 1, only: Iterable[str] | None = None) -> dict[str, Analysis]:
    """Analyses keyed by message id, in dataset order. Results do not depend on ``jobs``."""
    wanted = None if only is None else set(only)
    items = [
        (m, g)
        for g in logs
        for m in g.messages
        if wanted is None or m.msg_id in wanted
    ]
    out: dict[str, Analysis] = {}
    if jobs <= 1 or len(items) < 2:
        comps: dict[int, Components] = {}
        for m, g in items:
            c = comps.setdefault(id(g.map), Components(cfg, g.map))
            out[m.msg_id] = analyze(m, g.state_for(m), c)
        return out
    by_map: dict[str, list] = {}
    for m, g in items:
        by_map.setdefault(g.map_name, []).append((m, g.state_for(m).to_doc()))
    for map_spec, batch in by_map.items():
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(cfg, map_spec)) as pool:
            for res in pool.map(_work, batch, chunksize=max(1, len(batch) // (4 * jobs))):
                out[res.msg_id] = res
    return {m.msg_id: out[m.msg_id] for m, _ in items}


def featurize_all(msgs: Sequence[Message], analyses: dict[str, Analysis], encoder):
    return [featurize(m, analyses[m.msg_id] if analyses[m.msg_id].values else None, encoder) for m in msgs]


def train_detector(train_msgs: Sequence[Message], analyses: dict[str, Analysis], cfg: RunConfig) -> MlpModel:
    """Fit the classifier on the labelled messages among ``train_msgs``."""
    enc = HashingEncoder(cfg.text_dim)
    labelled = [m for m in train_msgs if m.annotation is not None]
    feats = featurize_all(labelled, analyses, enc)
    return train(zip(feats, [m.annotation == LIE for m in labelled]), cfg.classifier, encoder=enc.describe())
