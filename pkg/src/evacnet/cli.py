"""Command-line entry point: ``evacnet {train,evaluate,map,compare,sweep,replay}``.

Every command first writes ``manifest.json`` into its output directory,
holding the full argument vector so that ``evacnet replay manifest.json``
reruns it. The output directory is ``--out`` if given, else ``$EVACNET_OUT``,
else ``./evacnet_out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dynaq import TrainConfig, train, transfer_train, write_train_log
from .evaluation import (
    LearnedGreedy,
    SocialForceBaseline,
    evacuate,
    force_field_map,
    read_runs_csv,
    run_ensemble,
    speed_sweep,
    write_field_map_csv,
    write_runs_csv,
    write_sweep_csv,
)
from .geometry import ScenarioError, PlacementError, load_scenario
from .physics import IntegrationError, PhysicsParams, write_trajectory_csv
from .qnet import PRESETS, NetConfig, WeightFileError, load_params, save_params
from .stats import mann_whitney_u, wilcoxon_signed_rank

log = logging.getLogger("evacnet")

DEFAULT_OUT = "evacnet_out"


class UsageError(Exception):
    """Bad flag values or inputs; reported as a one-line diagnostic, exit 2."""


@dataclass
class RunManifest:
    command: str
    scenario: str | None
    overrides: dict
    seed: int | None
    output_dir: str
    version: str
    timestamp: str
    argv: list

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


# -- flag helpers ------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("need one or more non-negative integers")
    return vals


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _add_common(p: argparse.ArgumentParser, seed_required: bool) -> None:
    p.add_argument("--out", help="output directory (default: $EVACNET_OUT or ./evacnet_out)")
    p.add_argument("--seed", type=int, required=seed_required, help="master random seed")
    p.add_argument("--config", help="JSON file with 'physics' and/or 'training' sections")
    p.add_argument("--desired-speed", type=_positive_float, help="desired speed in m/s")
    p.add_argument("--max-steps", type=_nonneg_int, help="step cap per episode/run")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_net(p: argparse.ArgumentParser) -> None:
    p.add_argument("--net", choices=sorted(PRESETS), default=None, help="hidden-layer preset (default small)")
    p.add_argument("--hidden", type=_int_list, help="explicit hidden sizes, e.g. 64,128,64")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evacnet", description="Crowd evacuation with social forces and Dyna-Q.")
    parser.add_argument("--version", action="version", version=f"evacnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a Q-network for one agent")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file or bundled name")
    src.add_argument("--transfer", nargs=2, metavar=("WIDE", "NARROW"), help="two-stage transfer training")
    t.add_argument("--episodes", default="1000", help="episode count, or 'a,b' for --transfer")
    _add_net(t)
    t.add_argument("--learning-rate", type=_positive_float)
    t.add_argument("--gamma", type=float)
    t.add_argument("--mu", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--planning-updates", type=_nonneg_int, help="mini-batch steps per planning pass")
    t.add_argument("--planning-interval", type=_nonneg_int, help="steps between planning passes (0: episode end only)")
    t.add_argument("--memory", type=int, help="replay memory capacity")
    t.add_argument("--replay-gate", type=int)
    t.add_argument("--checkpoint-every", type=_nonneg_int, default=0)
    t.add_argument("--init-weights", help="start from this weight file")
    _add_common(t, seed_required=True)

    e = sub.add_parser("evaluate", help="run evacuation ensembles")
    e.add_argument("--scenario", required=True)
    pol = e.add_mutually_exclusive_group(required=True)
    pol.add_argument("--weights", help="learned network weight file")
    pol.add_argument("--baseline", action="store_true", help="social-force baseline policy")
    _add_net(e)
    e.add_argument("--agents", type=_nonneg_int, default=80)
    e.add_argument("--runs", type=_nonneg_int, default=100)
    e.add_argument("--parallel", type=int, default=1)
    e.add_argument("--trajectories", action="store_true", help="write one trajectory CSV per run")
    _add_common(e, seed_required=True)

    m = sub.add_parser("map", help="export the greedy force-field map of a network")
    m.add_argument("--scenario", required=True)
    m.add_argument("--weights", required=True)
    _add_net(m)
    m.add_argument("--spacing", type=_positive_float, default=0.5)
    _add_common(m, seed_required=False)

    c = sub.add_parser("compare", help="test two runs CSVs for a difference in total steps")
    c.add_argument("first")
    c.add_argument("second")
    c.add_argument("--paired", action="store_true", help="Wilcoxon signed-rank instead of Mann-Whitney U")
    c.add_argument("--out")
    c.add_argument("--seed", type=int)
    c.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("sweep", help="median evacuation steps versus desired speed")
    s.add_argument("--scenario", required=True)
    s.add_argument("--speeds", type=_float_list, required=True)
    pol = s.add_mutually_exclusive_group()
    pol.add_argument("--weights")
    pol.add_argument("--baseline", action="store_true", help="(default)")
    _add_net(s)
    s.add_argument("--agents", type=_nonneg_int, default=80)
    s.add_argument("--runs", type=_nonneg_int, default=20)
    s.add_argument("--parallel", type=int, default=1)
    _add_common(s, seed_required=False)

    r = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    r.add_argument("manifest")
    return parser


# -- shared plumbing -----------------------------------------------------------

def _out_dir(args) -> Path:
    out = args.out or os.environ.get("EVACNET_OUT") or DEFAULT_OUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise UsageError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from None
    if not isinstance(data, dict) or not set(data) <= {"physics", "training", "network"}:
        raise UsageError(f"{path}: expected an object with 'physics', 'training' or 'network' sections")
    return data


def _dataclass_from(cls, section: dict, where: str, **extra):
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise UsageError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**{**section, **{k: v for k, v in extra.items() if v is not None}})
    except (TypeError, ValueError) as err:
        raise UsageError(f"{where}: {err}") from None


def _physics(args, cfg: dict) -> PhysicsParams:
    return _dataclass_from(PhysicsParams, cfg.get("physics", {}), "physics",
                           desired_speed=getattr(args, "desired_speed", None),
                           max_steps=getattr(args, "max_steps", None))


def _net_config(args, cfg: dict) -> NetConfig:
    if getattr(args, "hidden", None):
        return NetConfig(tuple(args.hidden))
    if getattr(args, "net", None):
        return NetConfig(PRESETS[args.net])
    section = cfg.get("network", {})
    if "preset" in section:
        if section["preset"] not in PRESETS:
            raise UsageError(f"network: unknown preset {section['preset']!r}")
        return NetConfig(PRESETS[section["preset"]])
    return _dataclass_from(NetConfig, section, "network")


def _scenario(path: str):
    try:
        return load_scenario(path)
    except FileNotFoundError as err:
        raise UsageError(str(err)) from None


def _load_weights(args, cfg: dict):
    explicit = getattr(args, "hidden", None) or getattr(args, "net", None)
    expect = _net_config(args, cfg) if explicit else None
    if not Path(args.weights).is_file():
        raise UsageError(f"weights file not found: {args.weights}")
    return load_params(args.weights, expect=expect)


def _manifest(args, argv, out: Path, scenario: str | None) -> RunManifest:
    skip = {"command", "out", "verbose"}
    overrides = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    m = RunManifest(
        command=args.command,
        scenario=scenario,
        overrides=overrides,
        seed=getattr(args, "seed", None),
        output_dir=str(out),
        version=__version__,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        argv=list(argv),
    )
    m.write(out)
    return m


# -- commands --------------------------------------------------------------------

def cmd_train(args, argv) -> int:
    cfg = _load_config(args)
    phys = _physics(args, cfg)
    net = _net_config(args, cfg)
    tr = {
        "learning_rate": args.learning_rate, "gamma": args.gamma, "mu": args.mu,
        "batch_size": args.batch_size, "planning_updates": args.planning_updates,
        "planning_interval": args.planning_interval,
        "memory_capacity": args.memory, "replay_gate": args.replay_gate, "seed": args.seed,
    }
    if args.max_steps is not None:
        tr["max_steps"] = args.max_steps
    episodes = _int_list(args.episodes) if isinstance(args.episodes, str) else args.episodes
    stages = 2 if args.transfer else 1
    if len(episodes) != stages:
        raise UsageError(f"--episodes needs {stages} value(s), got {args.episodes!r}")

    scen_names = args.transfer if args.transfer else [args.scenario]
    scenarios = [_scenario(s) for s in scen_names]
    init = load_params(args.init_weights, expect=net) if args.init_weights else None
    out = _out_dir(args)
    _manifest(args, argv, out, ",".join(scen_names))
    ckpt = out / "checkpoints"
    if args.checkpoint_every:
        ckpt.mkdir(exist_ok=True)

    def progress(entry):
        if entry.episode % 50 == 0:
            log.info("episode %d steps %d eps %.3f loss %.3g", entry.episode, entry.steps, entry.epsilon, entry.mean_loss)

    kw = dict(checkpoint_every=args.checkpoint_every, checkpoint_dir=ckpt, on_episode=progress)
    configs = [_dataclass_from(TrainConfig, cfg.get("training", {}), "training", episodes=n, **tr) for n in episodes]
    if args.transfer:
        try:
            first, second = transfer_train(scenarios[0], scenarios[1], phys, net, configs[0], configs[1], **kw)
        except ValueError as err:
            raise UsageError(str(err)) from None
        write_train_log(out / "train_log_stage1.csv", first.log)
        save_params(first.params, out / "weights_stage1.bin")
        result = second
        write_train_log(out / "train_log_stage2.csv", second.log)
    else:
        result = train(scenarios[0], phys, net, configs[0], init_params=init, **kw)
        write_train_log(out / "train_log.csv", result.log)
    save_params(result.params, out / "weights.bin")
    if result.log:
        print(f"trained {len(result.log)} episodes; mean steps over last 100: {result.final_mean_steps():.1f}")
    print(f"weights written to {out / 'weights.bin'}")
    return 0


def _policy(args, cfg):
    if getattr(args, "weights", None):
        return LearnedGreedy(_load_weights(args, cfg))
    return SocialForceBaseline()


def cmd_evaluate(args, argv) -> int:
    cfg = _load_config(args)
    phys = _physics(args, cfg)
    scenario = _scenario(args.scenario)
    policy = _policy(args, cfg)
    out = _out_dir(args)
    _manifest(args, argv, out, args.scenario)
    seeds = [args.seed + i for i in range(args.runs)]
    if args.trajectories:
        runs = []
        for s in seeds:
            run = evacuate(scenario, policy, args.agents, phys, s, record_trajectories=True)
            write_trajectory_csv(out / f"trajectory_seed{s}.csv", run.trajectories)
            run.trajectories = None
            runs.append(run)
    else:
        runs = run_ensemble(scenario, policy, args.agents, phys, seeds, workers=args.parallel)
    write_runs_csv(out / "runs.csv", runs)
    if runs:
        steps = [r.total_steps for r in runs]
        print(f"{len(runs)} runs; median total steps {np.median(steps):g}; "
              f"incomplete runs {sum(r.evacuated_count < r.n_agents for r in runs)}")
    print(f"runs written to {out / 'runs.csv'}")
    return 0


def cmd_map(args, argv) -> int:
    cfg = _load_config(args)
    phys = _physics(args, cfg)
    scenario = _scenario(args.scenario)
    params = _load_weights(args, cfg)
    out = _out_dir(args)
    _manifest(args, argv, out, args.scenario)
    fmap = force_field_map(params, scenario, args.spacing, phys.desired_speed)
    write_field_map_csv(out / "field_map.csv", fmap)
    print(f"{len(fmap.xy)} cells written to {out / 'field_map.csv'}")
    return 0


def _steps_column(path: str) -> list[float]:
    if not Path(path).is_file():
        raise UsageError(f"runs file not found: {path}")
    try:
        return [float(r["total_steps"]) for r in read_runs_csv(path)]
    except (KeyError, ValueError) as err:
        raise UsageError(f"{path}: {err}") from None


def cmd_compare(args, argv) -> int:
    xs, ys = _steps_column(args.first), _steps_column(args.second)
    if not xs or not ys:
        raise UsageError("both runs files need at least one row")
    if args.paired and len(xs) != len(ys):
        raise UsageError(f"--paired needs equal sample sizes, got {len(xs)} and {len(ys)}")
    out = _out_dir(args)
    _manifest(args, argv, out, None)
    if args.paired:
        res, name, stat = wilcoxon_signed_rank(xs, ys), "Wilcoxon signed-rank", "W"
    else:
        res, name, stat = mann_whitney_u(xs, ys), "Mann-Whitney U", "U"
    lines = [
        f"test: {name} ({'exact' if res.exact else 'normal approximation'})",
        f"{stat} = {res.statistic:g}",
        f"p = {res.p_value:.6g}",
        f"median first = {np.median(xs):g}, median second = {np.median(ys):g}",
        f"significant at 0.05: {'yes' if res.significant else 'no'}",
    ]
    print("\n".join(lines))
    (out / "compare.txt").write_text("\n".join(lines) + "\n")
    return 0


def cmd_sweep(args, argv) -> int:
    cfg = _load_config(args)
    phys = _physics(args, cfg)
    scenario = _scenario(args.scenario)
    policy = _policy(args, cfg)
    seed = args.seed if args.seed is not None else 0
    out = _out_dir(args)
    _manifest(args, argv, out, args.scenario)
    table = speed_sweep(scenario, policy, args.speeds, args.agents,
                        [seed + i for i in range(args.runs)], phys, workers=args.parallel)
    write_sweep_csv(out / "sweep.csv", table)
    for v, med in table:
        print(f"speed {v:g} m/s: median steps {med:g}")
    return 0


def cmd_replay(args, argv) -> int:
    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"manifest not found: {path}")
    data = json.loads(path.read_text())
    if "argv" not in data:
        raise UsageError(f"{path}: no argv recorded")
    rerun = list(data["argv"])
    if "--out" not in rerun:
        rerun += ["--out", data["output_dir"]]
    return main(rerun)


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "map": cmd_map,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "parallel", 1) < 1:
        parser.error("--parallel must be >= 1")
    try:
        return COMMANDS[args.command](args, argv)
    except (UsageError, ScenarioError, PlacementError, WeightFileError, IntegrationError, OSError) as err:
        print(f"evacnet {args.command}: error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"evacnet {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
