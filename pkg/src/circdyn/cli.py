"""Command-line experiment runner.

    circdyn <group> <command> [--seed N] [--out PATH] [--format csv|json]
            [--config FILE] [command flags]

Exit status: 0 when the command's contract holds, 2 on a contract
violation, 1 on a usage error (nothing is written in that case).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import inspect
import io
import json
import math
import sys

from . import __version__, experiments

# (group, command) -> (function, default output format)
COMMANDS = {
    ("psl2z", "greedy-vs-brute"): (experiments.greedy_vs_brute, "csv"),
    ("psl2z", "lyapunov-decay"): (experiments.lyapunov_decay, "csv"),
    ("psl2z", "occupation"): (experiments.psl_occupation, "csv"),
    ("psl2z", "conformal-defect"): (experiments.psl_conformal_defect, "json"),
    ("thompson", "ne-probe"): (experiments.thompson_ne_probe, "csv"),
    ("thompson", "occupation"): (experiments.thompson_occupation, "csv"),
    ("gs", "conformal-defect"): (experiments.gs_conformal_defect, "json"),
    ("walk", "stationary"): (experiments.walk_stationary, "csv"),
    ("walk", "lyapunov"): (experiments.walk_lyapunov, "csv"),
    ("walk", "escape"): (experiments.walk_escape, "csv"),
    ("walk", "bound-check"): (experiments.walk_bound_check, "json"),
    ("expand", "scan"): (experiments.expand_scan, "csv"),
    ("distortion", "suite"): (experiments.distortion_suite, "csv"),
}

COMMON = ("seed", "out", "format")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _number(text: str):
    """int when the literal is integral (accepts 1e6), float otherwise."""
    try:
        return int(text)
    except ValueError:
        pass
    val = float(text)
    if val.is_integer() and ("e" in text.lower()) and abs(val) < 2 ** 63:
        return int(val)
    return val


def _converter(default):
    if isinstance(default, bool):
        return lambda t: t.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return lambda t: int(_number(t))
    if isinstance(default, float):
        return float
    return str


def _params(func):
    """Command parameters (name -> default) without the common ones."""
    return {name: p.default for name, p in inspect.signature(func).parameters.items()
            if name not in ("seed",)}


def _takes_seed(func) -> bool:
    return "seed" in inspect.signature(func).parameters


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="circdyn", description="Circle dynamics experiments.")
    parser.add_argument("--version", action="version", version=f"circdyn {__version__}")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    subs = {}
    for (group, command), (func, fmt) in COMMANDS.items():
        if group not in subs:
            g = groups.add_parser(group)
            subs[group] = g.add_subparsers(dest="command", required=True, parser_class=_Parser)
        p = subs[group].add_parser(command, help=(func.__doc__ or "").strip().splitlines()[0]
                                   if func.__doc__ else None)
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--out", default=argparse.SUPPRESS)
        p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
        p.add_argument("--config", default=None)
        for name, default in _params(func).items():
            p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=_converter(default),
                           default=argparse.SUPPRESS)
    return parser


def read_config(path: str, allowed: dict) -> dict:
    """key = value lines; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in allowed:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = allowed[key](value)
    return out


def resolve(args: argparse.Namespace) -> tuple:
    func, fmt = COMMANDS[(args.group, args.command)]
    defaults = dict(_params(func))
    defaults.update(seed=0, out=None, format=fmt)
    allowed = {name: _converter(d) for name, d in _params(func).items()}
    allowed.update(seed=int, out=str, format=str)
    config = dict(defaults)
    if args.config:
        config.update(read_config(args.config, allowed))
    flags = {k: v for k, v in vars(args).items() if k not in ("group", "command", "config")}
    config.update(flags)
    if config["format"] not in ("csv", "json"):
        raise UsageError("format must be csv or json")
    return func, config


def _clean(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(_clean(value))


def render(command: str, config: dict, result, fmt: str) -> str:
    header = {"version": __version__, "command": command, "config": _clean(config),
              "generated": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    if fmt == "json":
        doc = dict(header, summary=_clean(result.summary), passed=result.passed,
                   rows=_clean(result.rows))
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# circdyn {__version__}\n# command: {command}\n")
    buf.write(f"# config: {json.dumps(_clean(config), sort_keys=True)}\n")
    buf.write(f"# generated: {header['generated']}\n")
    buf.write(f"# summary: {json.dumps(_clean(result.summary), sort_keys=True)}\n")
    buf.write(f"# passed: {'true' if result.passed else 'false'}\n")
    if result.rows:
        cols = list(result.rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in result.rows:
            w.writerow([_cell(row.get(c)) for c in cols])
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        func, config = resolve(args)
        kwargs = {k: config[k] for k in _params(func)}
        if _takes_seed(func):
            kwargs["seed"] = config["seed"]
        try:
            result = func(**kwargs)
        except ValueError as err:
            raise UsageError(str(err)) from None
    except UsageError as err:
        print(err, file=sys.stderr)
        return 1
    command = f"{args.group} {args.command}"
    text = render(command, config, result, config["format"])
    if config["out"]:
        with open(config["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if result.passed else 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
