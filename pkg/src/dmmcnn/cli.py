"""Command-line entry point.

Every command writes only below its ``--out`` directory (default: the
``DMM_OUT`` environment variable) and leaves a ``manifest.json`` there.
``replay`` re-runs a manifest into a fresh directory and checks that every
recorded artifact comes out byte-identical.

Config files use a flat ``key = value`` grammar, one entry per line; ``#``
starts a comment, tuples are comma separated, booleans are ``true``/``false``
and ``none`` clears an optional value.  ``--set key=value`` overrides a file
entry.

Errors are printed as one line, ``dmmcnn: error[<kind>]: <message>``.  Usage
and config problems exit with status 2, failures while running exit with 1.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path


from . import __version__
from .curves import plot_curves
from .data import ParseError, SynthConfig, generate_synthetic, read_dataset, read_split, write_split
from .evaluation import (compare_schemes, evaluate, write_comparison_csv, write_report_csv,
                         write_summary_csv)
from .network import load_checkpoint, save_checkpoint
from .scheduler import read_trace, write_trace
from .trainer import (VARIANTS, TrainConfig, make_network, run_ablation_suite, train,
                      write_ablation_csv, write_rows)

log = logging.getLogger("dmmcnn")

CKPT_NAME = "ckpt"
PRESETS = {
    "weighting": {"uniform": {"use_dynamic_weights": False}, "dynamic": {}},
    "threshold": {"fixed_tau": {"use_adaptive_threshold": False}, "adaptive_tau": {}},
    "landmarks": {"no_fld": {"use_fld": False}, "fld": {}},
}


class UsageError(Exception):
    pass


# -- config grammar ----------------------------------------------------------

def _convert(raw: str, type_name: str, key: str):
    text = raw.strip()
    if "None" in type_name and text.lower() == "none":
        return None
    base = type_name.replace(" | None", "").strip()
    try:
        if base.startswith("tuple["):
            inner = base[len("tuple["):].split(",")[0].strip()
            items = [t.strip() for t in text.split(",") if t.strip()]
            return tuple(_convert(t, inner, key) for t in items)
        if base == "bool":
            if text.lower() not in ("true", "false"):
                raise ValueError
            return text.lower() == "true"
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base == "str":
            return text
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot read {raw!r} as {type_name}") from None
    raise UsageError(f"config key {key!r} has unsupported type {type_name}")


def parse_config_text(text: str, cls, source: str = "<config>") -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise UsageError(f"{source}:{lineno}: unknown config key {key!r}")
        out[key] = _convert(value, str(types[key]), key)
    return out


def format_config(obj) -> str:
    lines = []
    for key, value in asdict(obj).items():
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = str(value).lower()
        elif isinstance(value, (tuple, list)):
            text = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def load_config(cls, path, overrides, base=None):
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file {path} not found")
        values.update(parse_config_text(p.read_text(), cls, str(p)))
    for item in overrides or []:
        values.update(parse_config_text(item, cls, "--set"))
    try:
        return replace(base, **values) if base is not None else cls(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


# -- helpers -------------------------------------------------------------------

def _out_dir(args) -> Path:
    out = args.out or os.environ.get("DMM_OUT")
    if not out:
        raise UsageError("no output directory: pass --out or set DMM_OUT")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {path} not found")
    return p


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds expects comma separated integers, got {text!r}") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, argv: list[str], config_text: str | None) -> Path:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "tool": "dmmcnn", "version": __version__, "command": command, "argv": argv,
        "config": config_text,
        "artifacts": {p.relative_to(out).as_posix(): _sha256(p) for p in files},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _strip_out(argv: list[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


# -- commands ------------------------------------------------------------------

def cmd_gen_data(args, out: Path) -> str:
    cfg = load_config(SynthConfig, args.config, args.set)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    write_split(generate_synthetic(cfg), out)
    text = format_config(cfg)
    (out / "config.resolved").write_text(text)
    return text


def _train_config(args) -> TrainConfig:
    cfg = load_config(TrainConfig, args.config, args.set)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _read_split(path):
    return read_split(_existing(path, "data directory"))


def cmd_train(args, out: Path) -> str:
    cfg = _train_config(args)
    data = _read_split(args.data)
    net, tlog = train(make_network(cfg, data), data, cfg)
    save_checkpoint(net, out / CKPT_NAME, tlog.thresholds)
    write_trace(tlog.trace, out / "trace.csv")
    write_rows(tlog.loss_curve, out / "loss_curve.csv",
               ("iteration", "epoch", "lr", "joint", "fac_mean", "fld"))
    write_rows(tlog.lr_events, out / "lr_events.csv", ("iteration", "old_lr", "new_lr"))
    text = format_config(cfg)
    (out / "config.resolved").write_text(text)
    print(f"checkpoint {out / CKPT_NAME}: {tlog.updates} scheduler updates, "
          f"final lr {tlog.loss_curve[-1]['lr']:.3g}")
    return text


def cmd_eval(args, out: Path) -> None:
    ckpt = _existing(args.checkpoint, "checkpoint")
    if ckpt.is_dir():
        ckpt = _existing(ckpt / CKPT_NAME, "checkpoint")
    net, tau = load_checkpoint(ckpt)
    if args.fixed_threshold:
        tau = None
    samples = read_dataset(_existing(args.data, "data directory"), net.spec)
    report = evaluate(net, samples, tau)
    write_report_csv(report, out / "report.csv")
    print(f"mean accuracy {report.mean_accuracy:.4f} over {report.n} samples")


def cmd_ablate(args, out: Path) -> str:
    cfg = _train_config(args)
    data = _read_split(args.data)
    names = args.variants.split(",") if args.variants else list(VARIANTS)
    unknown = [n for n in names if n not in VARIANTS]
    if unknown:
        raise UsageError(f"unknown variant(s) {', '.join(unknown)}; choose from {', '.join(VARIANTS)}")
    rows = run_ablation_suite(data, cfg, names)
    write_ablation_csv(rows, data.spec.names, out / "ablation.csv")
    for r in rows:
        print(f"{r['variant']:<11} mean accuracy {r['mean_accuracy']:.4f}")
    text = format_config(cfg)
    (out / "config.resolved").write_text(text)
    return text


def cmd_compare(args, out: Path) -> str:
    base = _train_config(args)
    data = _read_split(args.data)
    configs = {}
    for name, delta in PRESETS[args.preset].items():
        configs[name] = replace(base, **delta)
    for item in args.scheme or []:
        if "=" not in item:
            raise UsageError(f"--scheme expects NAME=CONFIG_FILE, got {item!r}")
        name, path = item.split("=", 1)
        configs[name] = load_config(TrainConfig, path, [], base)
    rows, summary = compare_schemes(data, configs, _seeds(args.seeds))
    write_comparison_csv(rows, out / "comparison.csv")
    write_summary_csv(summary, data.spec.names, out / "summary.csv")
    for name, s in summary.items():
        print(f"{name:<14} mean accuracy {s['mean_accuracy']:.4f} "
              f"(std {s['std']:.4f}), final val FAC loss {s['final_val_fac_loss']:.4f}")
    text = "".join(f"[{name}]\n{format_config(c)}" for name, c in configs.items())
    (out / "config.resolved").write_text(text)
    return text


def cmd_plot(args, out: Path) -> None:
    rows = read_trace(_existing(args.trace, "trace"))
    if not rows:
        raise UsageError(f"trace {args.trace} is empty")
    for p in plot_curves(rows, out):
        print(p)


def cmd_replay(args, out: Path) -> None:
    manifest = json.loads(_existing(args.manifest, "manifest").read_text())
    argv = [*manifest["argv"], "--out", str(out)]
    code = main(argv)
    if code != 0:
        raise RuntimeError(f"replayed command exited with {code}")
    fresh = json.loads((out / "manifest.json").read_text())["artifacts"]
    diff = sorted(k for k in set(manifest["artifacts"]) | set(fresh)
                  if manifest["artifacts"].get(k) != fresh.get(k))
    if diff:
        raise RuntimeError(f"{len(diff)} artifact(s) differ, first: {diff[0]}")
    print(f"replay reproduced {len(fresh)} artifacts bit-exactly")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "compare-schemes": cmd_compare, "plot-curves": cmd_plot,
            "replay": cmd_replay}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dmmcnn", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"dmmcnn {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, config=True):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--out", help="output directory (default: $DMM_OUT)")
        if config:
            sp.add_argument("--config", help="key = value config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override one config entry (repeatable)")
        return sp

    sp = add("gen-data", "write a synthetic train/val/test split")
    sp.add_argument("--seed", type=int)
    sp = add("train", "train one network and write checkpoint, trace and loss curves")
    sp.add_argument("--data", required=True, help="split directory from gen-data")
    sp.add_argument("--seed", type=int)
    sp = add("eval", "evaluate a checkpoint on one split directory", config=False)
    sp.add_argument("--checkpoint", required=True, help="checkpoint file or train output dir")
    sp.add_argument("--data", required=True, help="directory holding list_attr.txt")
    sp.add_argument("--fixed-threshold", action="store_true",
                    help="ignore stored thresholds and use 0 for every attribute")
    sp = add("ablate", "train the seven ablation variants")
    sp.add_argument("--data", required=True)
    sp.add_argument("--variants", help="comma separated subset of variant names")
    sp.add_argument("--seed", type=int)
    sp = add("compare-schemes", "compare training schemes over several seeds")
    sp.add_argument("--data", required=True)
    sp.add_argument("--preset", choices=sorted(PRESETS), default="weighting")
    sp.add_argument("--scheme", action="append", metavar="NAME=CONFIG_FILE",
                    help="extra scheme layered on the base config (repeatable)")
    sp.add_argument("--seeds", default="0,1,2,3,4")
    sp = add("plot-curves", "turn a trace CSV into CSV and SVG curve files", config=False)
    sp.add_argument("--trace", required=True)
    sp = add("replay", "re-run a manifest and verify identical artifacts", config=False)
    sp.add_argument("--manifest", required=True)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = _out_dir(args)
        config_text = COMMANDS[args.command](args, out)
        if args.command != "replay":
            write_manifest(out, args.command, _strip_out(argv), config_text)
        return 0
    except UsageError as exc:
        print(f"dmmcnn: error[usage]: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"dmmcnn: error[usage]: {exc.filename or exc} not found", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"dmmcnn: error[input]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI reports every failure on one line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"dmmcnn: error[runtime]: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
