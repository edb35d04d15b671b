"""Command line: run, audit, fractional, sweep, gen.

Exit codes: 0 pass, 2 invariant or certificate violation, 3 budget
exhaustion or protocol failure, 1 usage error.
"""
from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

from . import TOOL, __version__
from .audit import FAULTS, audit, inject_fault
from .experiment import CSV_HEADER, Artifact, Scenario, parse_config, run_scenario
from .fractional import (
    PhaseStall,
    acte_to_fractional,
    delta_of,
    fractional_costs,
    grid_minimum,
    run_z,
    synthetic_trace,
    verify_certificates,
    z_objective,
)
from .generators import generate, random_instance
from .lgt import elementary_instance, parse_instance
from .trees import format_mass, format_node, format_tree, leaf_masses

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_FAILURE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _settings(config: str | None, overrides: list) -> dict:
    d = parse_config(Path(config).read_text()) if config else {}
    d.update(parse_config("\n".join(overrides)))
    return d


def _split_args(items):
    """Separate an optional config file from key=value overrides."""
    config, pairs = None, []
    for it in items:
        if "=" in it:
            pairs.append(it)
        elif config is None:
            config = it
        else:
            raise ValueError(f"unexpected argument {it!r}")
    return config, pairs


def cmd_run(args) -> int:
    config, pairs = _split_args(args.settings)
    sc = Scenario.from_dict(_settings(config, pairs))
    art = run_scenario(sc)
    if args.out:
        art.write(Path(args.out))
    print(art.summary())
    if art.error or not art.completed:
        return EXIT_FAILURE
    if art.bound is not None and art.moves_used > art.bound:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_audit(args) -> int:
    art = Artifact.read(Path(args.artifact))
    if args.fault:
        art = inject_fault(art, args.fault)
    rep = audit(art)
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def _trace_rows(configs):
    for t, c in enumerate(configs):
        for u, m in sorted(leaf_masses(c).items()):
            yield f"{t},{format_node(u)},{format_mass(m)}"


def cmd_fractional(args) -> int:
    config, pairs = _split_args(args.settings)
    d = _settings(config, pairs)
    seed = int(d.get("seed", 0))
    width = int(d.get("width", 4))
    cap = int(d.get("width_cap", 5))
    if args.instance:
        inst = parse_instance(Path(args.instance).read_text())
    else:
        inst = random_instance(seed, max_width=width, max_depth=int(d.get("depth", 8)))
    if inst.width > cap:
        print(f"instance width {inst.width} exceeds the cap {cap}", file=sys.stderr)
        return EXIT_USAGE
    if inst.updates is None:
        inst, _ = elementary_instance(inst)
    source = d.get("source", "dacte")
    if source == "dacte":
        sc = Scenario.from_dict({"family": "path", **d, "agent": "dacte"})
        try:
            xs = acte_to_fractional(sc.build_agent(), inst, sc.k).trace.configs
        except PhaseStall as exc:
            print(f"reduction stalled: {exc}", file=sys.stderr)
            return EXIT_FAILURE
    elif source == "synthetic":
        xs = synthetic_trace(inst, seed).configs
    else:
        print(f"unknown x source {source!r}", file=sys.stderr)
        return EXIT_USAGE
    deltas = [delta_of(inst, t) for t in range(len(xs))]
    zs = run_z(inst, xs, deltas)
    rep = verify_certificates(inst, xs, zs, deltas)
    for line in rep.lines():
        print(line)
    cz = fractional_costs(zs)
    print(f"cost_x={format_mass(rep.cost_x)} cost_z={format_mass(cz['cost'])} "
          f"cost_z_up={format_mass(cz['up'])} cost_z_down={format_mass(cz['down'])} "
          f"margin_9x={format_mass(9 * rep.cost_x - cz['cost'])}")
    ratio = rep.forked_mass_ratio
    print(f"forked_mass={format_mass(rep.forked_mass)} ratio_to_cost_x={'-' if ratio is None else format_mass(ratio)}")
    mismatch = 0
    if args.oracle:
        if inst.width > 3:
            print("oracle comparison needs width <= 3", file=sys.stderr)
            return EXIT_USAGE
        for t in range(1, len(xs)):
            best = grid_minimum(zs[t - 1], xs[t], deltas[t], inst.layers[t], args.grain)
            val, _ = z_objective(zs[t - 1], xs[t], deltas[t], zs[t])
            if val > best[0]:
                mismatch += 1
                print(f"oracle: step {t} optimiser value {format_mass(val)} above grid {format_mass(best[0])}")
        print(f"oracle: {len(xs) - 1 - mismatch}/{len(xs) - 1} steps at or below the grid optimum")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, configs in (("x", xs), ("z", zs), ("delta", deltas)):
            rows = [CSV_HEADER, "step,node,mass", *_trace_rows(configs)]
            (out / f"{name}.csv").write_text("\n".join(rows) + "\n")
    checks = rep.violations
    if args.provable:
        checks = [v for v in checks if v.check != "potential-step"]
    return EXIT_VIOLATION if checks or mismatch else EXIT_OK


SWEEP_COLUMNS = ["n", "D", "k", "moves", "bound", "makespan", "completed"]


def cmd_sweep(args) -> int:
    config, pairs = _split_args(args.settings)
    base = _settings(config, pairs)
    axes = []
    for spec in args.axis:
        key, _, vals = spec.partition("=")
        axes.append((key.strip(), [v.strip() for v in vals.split(",") if v.strip()]))
    keys = [k for k, _ in axes]
    lines = [CSV_HEADER, ",".join([f"axis_{k}" for k in keys] + SWEEP_COLUMNS)]
    status = EXIT_OK
    combos = itertools.product(*(vals for _, vals in axes)) if axes and all(v for _, v in axes) else []
    for combo in combos:
        sc = Scenario.from_dict({**base, **dict(zip(keys, combo))})
        art = run_scenario(sc)
        failed = art.error is not None or not art.completed
        over = art.bound is not None and art.moves_used > art.bound
        makespan = "" if art.makespan is None else art.makespan
        row = [*combo, art.tree.n, art.tree.depth, sc.k, art.moves_used,
               "" if art.bound is None else art.bound, makespan, str(art.completed).lower()]
        lines.append(",".join(str(v) for v in row))
        if failed or over:
            status = max(status, EXIT_FAILURE if failed else EXIT_VIOLATION)
            if not args.keep_going:
                print(f"run {dict(zip(keys, combo))} failed: {art.summary()}", file=sys.stderr)
                break
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return status


def cmd_gen(args) -> int:
    config, pairs = _split_args(args.settings)
    tree = generate(_settings(config, pairs))
    text = format_tree(tree)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=TOOL, description="Asynchronous collective tree exploration toolkit.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one scenario and write its artifact")
    r.add_argument("settings", nargs="*", help="optional config file, then key=value overrides")
    r.add_argument("--out", help="artifact directory")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="replay an artifact and check every invariant")
    a.add_argument("artifact")
    a.add_argument("--fault", choices=sorted(FAULTS), help="corrupt the artifact first")
    a.set_defaults(func=cmd_audit)

    f = sub.add_parser("fractional", help="fractional conversion with exact certificates")
    f.add_argument("settings", nargs="*")
    f.add_argument("--instance", help="instance file (fork/delete lines)")
    f.add_argument("--out", help="directory for x, z and delta CSV traces")
    f.add_argument("--oracle", action="store_true", help="compare each step with a grid search")
    f.add_argument("--grain", type=int, default=12)
    f.add_argument("--provable", action="store_true",
                   help="judge the per-step inequality in its doubled-transport form only")
    f.set_defaults(func=cmd_fractional)

    s = sub.add_parser("sweep", help="cross product of scenario parameters to CSV")
    s.add_argument("settings", nargs="*")
    s.add_argument("--axis", action="append", default=[], help="key=v1,v2,... (repeatable)")
    s.add_argument("--out")
    s.add_argument("--keep-going", action="store_true")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gen", help="emit a tree file")
    g.add_argument("settings", nargs="*")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"{TOOL}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
