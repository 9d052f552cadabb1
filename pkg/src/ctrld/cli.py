"""Command-line entry point: ``ctrld <command> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on bad input data.
Commands that write into ``--out`` also write ``manifest.json``; ``ctrld replay``
re-runs a manifest and reproduces the same files.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import sklearn

from . import __version__
from .adjudicator import IncompleteJointError, resolve
from .board import MapError, StateError, UnknownNameError, get_map, load_state
from .classifier import (
    HashingEncoder,
    MlpModel,
    linear_baseline,
    predict,
    rule_baseline,
)
from .config import ConfigError, RunConfig, load_config
from .dataset import (
    DatasetError,
    compute_metrics,
    categorize_lie,
    labels_of,
    load_dataset,
    split_sample,
    write_game,
    write_reports,
)
from .extract import LIE, Proposal
from .llm import (
    ALIGNMENT,
    DIRECT,
    AbstainError,
    EndpointConfig,
    HttpBackend,
    LLMError,
    StubBackend,
    build_prompt,
    query,
)
from .orders import Action, OrderError, parse_action, parse_order
from .pipeline import analyze_all, featurize_all, train_detector
from .synthetic import DEFAULT_MIX, SynthSpec, UnknownScenarioError, generate_synthetic

DETECTORS = ("ctrld", "rule", "linear", "alignment", "llm-direct", "llm-alignment")
DATA_ERRORS = (
    DatasetError,
    MapError,
    StateError,
    UnknownNameError,
    OrderError,
    ConfigError,
    IncompleteJointError,
    UnknownScenarioError,
    FileNotFoundError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _jobs_default() -> int:
    return os.cpu_count() or 1


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_jsonl(path: Path, records) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def _config_from(args) -> RunConfig:
    overrides: dict[str, dict[str, str]] = {}
    if getattr(args, "map", None):
        overrides.setdefault("run", {})["map"] = args.map
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("split", {})["seed"] = str(args.seed)
        overrides.setdefault("classifier", {})["seed"] = str(args.seed)
    for key in ("t1", "t2", "t3", "w1", "w2", "w3", "t"):
        val = getattr(args, key, None)
        if val is not None:
            overrides.setdefault("baseline", {})[key] = str(val)
    for key in ("epochs",):
        val = getattr(args, key, None)
        if val is not None:
            overrides.setdefault("classifier", {})[key] = str(val)
    for key in ("n_extra", "n_eval"):
        val = getattr(args, key, None)
        if val is not None:
            overrides.setdefault("split", {})[key] = str(val)
    return load_config(getattr(args, "config", None), overrides)


def _manifest(command: str, args, cfg: RunConfig | None) -> dict:
    params = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func", "out", "config", "jobs", "command") and not callable(v)
    }
    return {
        "command": command,
        "params": params,
        "config": cfg.to_dict() if cfg is not None else None,
        "versions": {
            "ctrld": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scikit-learn": sklearn.__version__,
        },
    }


def _finish(out: Path, command: str, args, cfg: RunConfig | None) -> None:
    _write_json(out / "manifest.json", _manifest(command, args, cfg))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ------------------------------------------------------------------------------


def cmd_map_validate(args) -> int:
    m = get_map(args.map_file)
    n_sc = len(m.supply_centers)
    print(f"{m.name}: {len(m.provinces)} provinces, {n_sc} supply centers, powers {', '.join(m.powers)}")
    return 0


def cmd_adjudicate(args) -> int:
    mapdef = get_map(args.map or "standard")
    state = load_state(args.state, mapdef)
    by_power: dict[str, list] = {}
    for text in args.orders:
        o = parse_order(text, state)
        by_power.setdefault(o.unit.power, []).append(o)
    joint = {p: Action.of(p, orders, state) for p, orders in by_power.items()}
    res = resolve(state, joint)
    doc = res.to_doc()
    if args.json:
        print(json.dumps(doc, indent=1, sort_keys=True))
    else:
        for order, outcome in doc["outcomes"]:
            print(f"{order}: {outcome}")
        for u in doc["dislodged"]:
            print(f"dislodged: {u}")
    return 0


def _load(args, cfg: RunConfig):
    mapdef = get_map(args.map) if getattr(args, "map", None) else None
    return load_dataset(args.dataset, mapdef)


def cmd_extract(args) -> int:
    cfg = _config_from(args)
    logs = _load(args, cfg)
    res = analyze_all(logs, cfg, args.jobs)
    records = []
    for a in res.values():
        rec = {"msg_id": a.msg_id, "proposal": a.proposal}
        if a.error:
            rec["error"] = a.error
        records.append(rec)
    out = _out_dir(args)
    _write_jsonl(out / "proposals.jsonl", records)
    _finish(out, "extract", args, cfg)
    n = sum(r["proposal"] is not None for r in records)
    print(f"{n} of {len(records)} messages carry a proposal; wrote {out / 'proposals.jsonl'}")
    return 0


def cmd_score(args) -> int:
    cfg = _config_from(args)
    logs = _load(args, cfg)
    res = analyze_all(logs, cfg, args.jobs)
    records = [a.signature for a in res.values() if a.signature is not None]
    errors = [{"msg_id": a.msg_id, "error": a.error} for a in res.values() if a.error]
    out = _out_dir(args)
    _write_jsonl(out / "signatures.jsonl", records)
    _write_jsonl(out / "errors.jsonl", errors)
    _finish(out, "score", args, cfg)
    print(f"scored {len(records)} proposals ({len(errors)} grounding errors); wrote {out / 'signatures.jsonl'}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from(args)
    logs = _load(args, cfg)
    split = split_sample(logs, cfg.split.seed, cfg.split.n_extra, cfg.split.n_eval)
    analyses = analyze_all(logs, cfg, args.jobs, only=[m.msg_id for m in split.train])
    model = train_detector(split.train, analyses, cfg)
    out = _out_dir(args)
    model.save(out / "model.json")
    _finish(out, "train", args, cfg)
    print(f"trained on {len(split.train)} messages, final loss {model.final_loss:.6f}; wrote {out / 'model.json'}")
    return 0


def cmd_predict(args) -> int:
    cfg = _config_from(args)
    logs = _load(args, cfg)
    model = MlpModel.load(args.model)
    dim = model.encoder.get("dim", cfg.text_dim)
    enc = HashingEncoder(dim)
    analyses = analyze_all(logs, cfg, args.jobs)
    msgs = [m for g in logs for m in g.messages]
    records = []
    for m, fv in zip(msgs, featurize_all(msgs, analyses, enc)):
        p = predict(model, fv)
        records.append({"msg_id": m.msg_id, "score": p.score, "deceptive": p.label})
    out = _out_dir(args)
    _write_jsonl(out / "predictions.jsonl", records)
    _finish(out, "predict", args, cfg)
    print(f"{sum(r['deceptive'] for r in records)} of {len(records)} messages flagged; wrote {out / 'predictions.jsonl'}")
    return 0


def _llm_backend(cfg: RunConfig):
    if cfg.llm.stub:
        return StubBackend(json.loads(Path(cfg.llm.stub).read_text()))
    if not cfg.llm.url:
        raise UsageError("llm detectors need [llm] url or stub in the config")
    c = cfg.llm
    return HttpBackend(EndpointConfig(c.url, c.model, c.auth_env_var, c.timeout_s, c.max_concurrency, c.retries))


def _llm_predictions(mode, logs, msgs, analyses, cfg) -> dict[str, bool | None]:
    backend = _llm_backend(cfg)
    by_id = {m.msg_id: (m, g) for g in logs for m in g.messages}
    out: dict[str, bool | None] = {}
    for m in msgs:
        a = analyses[m.msg_id]
        _, g = by_id[m.msg_id]
        state = g.state_for(m)
        history = [
            h for h in g.messages
            if h.idx <= m.idx and {h.sender, h.recipient} == {m.sender, m.recipient}
        ]
        if a.proposal is not None:
            p = a.proposal
            proposal = Proposal(
                p["proposer"], p["recipient"],
                parse_action(p["recipient_orders"], p["recipient"], state),
                parse_action(p["proposer_orders"], p["proposer"], state),
                p["implicit"], p["source"],
            )
            predicted = parse_action(list(a.predicted), p["proposer"], state)
        else:
            proposal = None
            predicted = parse_action([], m.sender, state)
        prompt = build_prompt(state, history, proposal, predicted, mode, observer=m.recipient)
        try:
            out[m.msg_id] = query(backend, prompt).deceptive
        except AbstainError:
            out[m.msg_id] = None
    return out


def cmd_eval(args) -> int:
    cfg = _config_from(args)
    logs = _load(args, cfg)
    split = split_sample(logs, cfg.split.seed, cfg.split.n_extra, cfg.split.n_eval)
    analyses = analyze_all(logs, cfg, args.jobs)
    msgs = [m for m in split.eval if m.annotation is not None]
    labels = labels_of(msgs)
    categories = {m.msg_id: categorize_lie(m.text) for m in msgs if m.annotation == LIE}
    reports = []
    for det in args.detector:
        if det == "ctrld":
            model = Path(args.model) if args.model else None
            mlp = MlpModel.load(model) if model else train_detector(split.train, analyses, cfg)
            enc = HashingEncoder(mlp.encoder.get("dim", cfg.text_dim))
            preds = {m.msg_id: predict(mlp, fv).label for m, fv in zip(msgs, featurize_all(msgs, analyses, enc))}
        elif det in ("rule", "linear"):
            fn = rule_baseline if det == "rule" else linear_baseline
            preds = {
                m.msg_id: fn(analyses[m.msg_id] if analyses[m.msg_id].values else None, cfg.baseline).label
                for m in msgs
            }
        elif det == "alignment":
            preds = {m.msg_id: bool(analyses[m.msg_id].alignment and analyses[m.msg_id].alignment["label"]) for m in msgs}
        else:
            preds = _llm_predictions(DIRECT if det == "llm-direct" else ALIGNMENT, logs, msgs, analyses, cfg)
        reports.append(compute_metrics(preds, labels, det, categories))
    out = _out_dir(args)
    table, records = write_reports(reports, out)
    _write_json(out / "split.json", split.counts() | {"warnings": list(split.warnings)})
    _finish(out, "eval", args, cfg)
    print(table.read_text(), end="")
    return 0


def cmd_categorize(args) -> int:
    logs = load_dataset(args.dataset)
    counts: dict[str, int] = {}
    for g in logs:
        for m in g.messages:
            if m.annotation == LIE:
                c = categorize_lie(m.text)
                counts[c] = counts.get(c, 0) + 1
                if args.verbose:
                    print(f"{m.msg_id}\t{c}")
    for c in sorted(counts):
        print(f"{c}\t{counts[c]}")
    return 0


def cmd_synth(args) -> int:
    mix: dict[str, int] = {}
    for item in args.scenario:
        if item == "default":
            for k, v in DEFAULT_MIX.items():
                mix[k] = mix.get(k, 0) + v
            continue
        name, _, count = item.partition("=")
        try:
            mix[name] = mix.get(name, 0) + (int(count) if count else 1)
        except ValueError:
            raise UsageError(f"bad scenario count in {item!r}") from None
    log_ = generate_synthetic(SynthSpec(mix, args.map or "standard", args.game_id), args.seed)
    out = _out_dir(args)
    path = write_game(log_, out)
    _finish(out, "synth", args, None)
    print(f"wrote {len(log_.messages)} messages to {path}")
    return 0


def cmd_replay(args) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    argv = [doc["command"]]
    params = doc["params"]
    positional = {"dataset", "scenario"}
    for key in ("dataset",):
        if params.get(key) is not None:
            argv.append(str(params[key]))
    argv.extend(params.get("scenario") or [])
    for key, val in params.items():
        if key in positional or val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        elif isinstance(val, list):
            argv.append(flag)
            argv.extend(str(v) for v in val)
        else:
            argv += [flag, str(val)]
    cfg_path = None
    if doc.get("config") is not None:
        cfg_path = Path(args.out) / "replay.ini"
        Path(args.out).mkdir(parents=True, exist_ok=True)
        cfg_path.write_text(_config_ini(doc["config"]))
        argv += ["--config", str(cfg_path)]
    argv += ["--out", args.out, "--jobs", str(args.jobs)]
    try:
        return main(argv)
    finally:
        if cfg_path is not None and cfg_path.exists():
            cfg_path.unlink()


def _config_ini(cfg: dict) -> str:
    def fmt(v) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (list, tuple)):
            return " ".join(str(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = ["[run]"]
    for key, val in cfg.items():
        if not isinstance(val, dict):
            lines.append(f"{key} = {fmt(val)}")
    renames = {"value": {"sc": "w_sc", "unit": "w_unit", "threat": "w_threat", "dislodge": "w_dislodge"}}
    for section, body in cfg.items():
        if isinstance(body, dict):
            lines.append(f"[{section}]")
            for key, val in body.items():
                lines.append(f"{renames.get(section, {}).get(key, key)} = {fmt(val)}")
    return "\n".join(lines) + "\n"


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctrld", description="Counterfactual deception detection for Diplomacy press.")
    p.add_argument("--version", action="version", version=f"ctrld {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(sp, out=True, dataset=True):
        if dataset:
            sp.add_argument("dataset", help="dataset directory (one subdirectory per game)")
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--map", help="map name or file (default: per game, else standard)")
        sp.add_argument("--seed", type=int, help="seed for sampling and training")
        sp.add_argument("--jobs", type=int, default=_jobs_default(), help="worker processes (default: cores)")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    mp = sub.add_parser("map", help="map utilities")
    msub = mp.add_subparsers(dest="map_command", parser_class=_Parser, required=True)
    mv = msub.add_parser("validate", help="load and check a map")
    mv.add_argument("map_file", nargs="?", default="standard")
    mv.set_defaults(func=cmd_map_validate)

    ad = sub.add_parser("adjudicate", help="resolve one set of orders")
    ad.add_argument("state")
    ad.add_argument("orders", nargs="+")
    ad.add_argument("--map")
    ad.add_argument("--json", action="store_true", help="print the full resolution as JSON")
    ad.set_defaults(func=cmd_adjudicate)

    for name, fn, hlp in (
        ("extract", cmd_extract, "ground messages into proposals"),
        ("score", cmd_score, "compute bait/switch/edge for every proposal"),
        ("train", cmd_train, "train the classifier on the training split"),
    ):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--n-extra", type=int)
        sp.add_argument("--n-eval", type=int)
        sp.add_argument("--epochs", type=int)
        sp.set_defaults(func=fn)

    pr = sub.add_parser("predict", help="apply a trained model to every message")
    common(pr)
    pr.add_argument("--model", required=True)
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("eval", help="evaluate detectors on the evaluation split")
    common(ev)
    ev.add_argument("--detector", nargs="+", choices=DETECTORS, default=["ctrld", "rule"])
    ev.add_argument("--model", help="trained model for the ctrld detector (default: train one)")
    ev.add_argument("--n-extra", type=int)
    ev.add_argument("--n-eval", type=int)
    ev.add_argument("--epochs", type=int)
    for key in ("t1", "t2", "t3", "w1", "w2", "w3", "t"):
        ev.add_argument(f"--{key}", type=float, help="baseline threshold or weight")
    ev.set_defaults(func=cmd_eval)

    ca = sub.add_parser("categorize", help="count lie-annotated messages per category")
    ca.add_argument("dataset")
    ca.add_argument("-v", "--verbose", action="store_true", help="also list each message")
    ca.set_defaults(func=cmd_categorize)

    sy = sub.add_parser("synth", help="write a synthetic game")
    sy.add_argument("scenario", nargs="+", help="scenario name, name=count, or 'default'")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--map")
    sy.add_argument("--game-id", default="synth")
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)

    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", required=True)
    rp.add_argument("--jobs", type=int, default=_jobs_default())
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ctrld: {exc}", file=sys.stderr)
        return 1
    except LLMError as exc:
        print(f"ctrld: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"ctrld: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
