"""Command-line entry point: ``heatplan {simulate,plan,train,sweep,plot}``.

Every command accepts ``--config FILE``, a flat TOML document whose keys are
the long option names with dashes replaced by underscores. Precedence is
flag > config file > built-in default; for ``seed`` the environment
variable ``HEATPLAN_SEED`` sits between the file and the default. The fully
resolved configuration is echoed to stderr in the same format, so saving
that echo and passing it back with ``--config`` reproduces the run.

Exit status: 0 on success, 1 on a runtime fault, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .controllers import bang_bang_action, brute_force_schedule, just_in_time_schedule, run_controller, schedule_controller
from .env import EpisodeSpec, SpecError
from .mcts import MctsConfig, run_mcts_episode, search
from .ppo import PolicyFormatError, PpoConfig, TrainingDivergedError, load_policy, save_policy, train, write_curve_csv
from .sweep import AXES, CONTROLLERS, SweepConfigError, SweepSpec, run_sweep, summarize, write_results_csv, write_summary_csv
from .thermal import TankParams

log = logging.getLogger("heatplan")


class ConfigError(ValueError):
    pass


TANK_KEYS = {
    "mass_kg": "mass_kg", "cp": "cp", "h": "h", "area_m2": "area_m2", "eta": "eta",
    "p_on_w": "p_on_w", "dt_s": "dt_s", "ambient": "t_ambient_c",
}
_TANK_DEFAULTS = {k: getattr(TankParams(), v) for k, v in TANK_KEYS.items()}
_EPISODE_DEFAULTS = {"t0": 20.0, "target": 60.0, "deadline": 60, "band": 1.0, **_TANK_DEFAULTS}
_MCTS_DEFAULTS = {"sims": 25_000, "c_ucb": math.sqrt(2.0)}

DEFAULTS = {
    "simulate": {
        **_EPISODE_DEFAULTS, **_MCTS_DEFAULTS, "controller": "bangbang", "policy": None, "seed": 0,
        "out": "trajectory.csv", "trace": None,
    },
    "plan": {**_EPISODE_DEFAULTS, **_MCTS_DEFAULTS, "method": "oracle", "temp": None, "time_index": 0, "seed": 0},
    "train": {
        "steps": 500_000, "seed": 0, "out": "policy.json", "curve": None,
        "steps_per_batch": 2048, "minibatch": 64, "epochs": 10, "learning_rate": 3e-4, "clip_ratio": 0.2,
        "gamma": 0.99, "gae_lambda": 0.95, "value_coef": 0.5, "entropy_coef": 0.0, "grad_clip_norm": 0.5,
    },
    "sweep": {
        **_EPISODE_DEFAULTS, **_MCTS_DEFAULTS, "vary": "deadline", "values": None,
        "controllers": ["bangbang", "mcts", "oracle"], "seeds": [0, 1, 2, 3, 4], "policy": None,
        "ppo_sample": False, "jobs": 1, "out": "results.csv", "summary": None,
    },
    "plot": {"inputs": None, "kind": "scatter_by_axis", "out": "figure.svg", "axis": None, "target": None},
}


# ---------------------------------------------------------------------------
# config resolution


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return json.dumps(v)


def render_config(command: str, cfg: dict) -> str:
    lines = [f"# heatplan {__version__} resolved config for '{command}'"]
    for key, value in cfg.items():
        lines.append(f"# {key} unset" if value is None else f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def _split_list(value, cast):
    if value is None:
        return None
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return [cast(v.strip() if isinstance(v, str) else v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad list value {value!r}: {exc}") from exc


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    from_file = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "rb") as fh:
                from_file = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        unknown = sorted(set(from_file) - set(cfg))
        if unknown:
            raise ConfigError(f"{args.config}: unknown key(s) {unknown} for '{command}'")
        cfg.update(from_file)
    if "seed" in cfg and "seed" not in from_file and os.environ.get("HEATPLAN_SEED"):
        try:
            cfg["seed"] = int(os.environ["HEATPLAN_SEED"])
        except ValueError as exc:
            raise ConfigError(f"HEATPLAN_SEED must be an integer: {exc}") from exc
    for key in cfg:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if command == "sweep":
        cfg["controllers"] = _split_list(cfg["controllers"], str)
        cfg["seeds"] = _split_list(cfg["seeds"], int)
        cast = int if cfg["vary"] == "deadline" else float
        cfg["values"] = _split_list(cfg["values"], cast)
    return cfg


def _tank(cfg: dict) -> TankParams:
    try:
        return TankParams(**{field: float(cfg[key]) for key, field in TANK_KEYS.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid tank parameters: {exc}") from exc


def _episode(cfg: dict) -> EpisodeSpec:
    return EpisodeSpec(float(cfg["t0"]), float(cfg["target"]), int(cfg["deadline"]),
                       band_c=float(cfg["band"]), params=_tank(cfg))


def _mcts(cfg: dict) -> MctsConfig:
    try:
        return MctsConfig(n_simulations=int(cfg["sims"]), c_ucb=float(cfg["c_ucb"]), rng_seed=int(cfg.get("seed", 0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_policy(path):
    if not path:
        raise ConfigError("controller 'ppo' needs --policy")
    if not Path(path).is_file():
        raise ConfigError(f"policy file not found: {path}")
    return load_policy(path)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict) -> int:
    spec = _episode(cfg)
    controller = cfg["controller"]
    if controller not in CONTROLLERS:
        raise ConfigError(f"unknown controller {controller!r}")
    if controller == "bangbang":
        result = run_controller(spec, bang_bang_action)
    elif controller == "oracle":
        result = run_controller(spec, schedule_controller(just_in_time_schedule(spec).schedule))
    elif controller == "ppo":
        result = run_controller(spec, _load_policy(cfg["policy"]).controller())
    else:
        mcts_cfg = _mcts(cfg)
        if cfg["trace"]:
            with open(cfg["trace"], "w") as trace:
                result = run_mcts_episode(spec, mcts_cfg, trace=trace)
        else:
            result = run_mcts_episode(spec, mcts_cfg)
    result.write_csv(cfg["out"])
    print(f"energy_wh={result.energy_wh:.1f} terminal_c={result.terminal_temp_c:.3f} "
          f"success={str(result.success).lower()}")
    return 0


def cmd_plan(cfg: dict) -> int:
    spec = _episode(cfg)
    method = cfg["method"]
    if method in ("oracle", "bruteforce"):
        res = just_in_time_schedule(spec) if method == "oracle" else brute_force_schedule(spec)
        print(f"schedule={''.join(map(str, res.schedule))}")
        print(f"on_count={res.on_count} energy_wh={res.energy_wh:.1f} "
              f"terminal_c={res.predicted_terminal_c:.3f} feasible={str(res.feasible).lower()}")
    elif method == "mcts":
        temp = spec.t0_c if cfg["temp"] is None else float(cfg["temp"])
        stats = search(temp, int(cfg["time_index"]), spec, _mcts(cfg))
        print(json.dumps({"root_visits": list(stats.visits), "q": list(stats.q), "chosen": stats.chosen}))
    else:
        raise ConfigError(f"unknown plan method {method!r}")
    return 0


def cmd_train(cfg: dict) -> int:
    try:
        ppo_cfg = PpoConfig(
            total_steps=int(cfg["steps"]), steps_per_batch=int(cfg["steps_per_batch"]),
            minibatch=int(cfg["minibatch"]), epochs_per_batch=int(cfg["epochs"]),
            learning_rate=float(cfg["learning_rate"]), clip_ratio=float(cfg["clip_ratio"]),
            gamma=float(cfg["gamma"]), gae_lambda=float(cfg["gae_lambda"]), value_coef=float(cfg["value_coef"]),
            entropy_coef=float(cfg["entropy_coef"]), grad_clip_norm=float(cfg["grad_clip_norm"]),
            rng_seed=int(cfg["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(cfg["out"])
    curve_path = Path(cfg["curve"]) if cfg["curve"] else out.with_name(out.stem + ".curve.csv")

    def progress(point, info):
        log.info("steps=%d mean_return=%.4f mean_energy_wh=%.0f", point.env_steps, point.mean_return,
                 point.mean_energy_wh)

    net, curve = train(ppo_cfg, progress=progress)
    save_policy(net, out)
    write_curve_csv(curve, curve_path)
    last = curve[-1]
    print(f"policy={out} curve={curve_path} batches={len(curve)} final_mean_return={last.mean_return:.4f}")
    return 0


def cmd_sweep(cfg: dict) -> int:
    if cfg["vary"] not in AXES:
        raise ConfigError(f"unknown axis {cfg['vary']!r}; choose from {sorted(AXES)}")
    base = _episode(cfg)
    spec = SweepSpec(
        axis=cfg["vary"],
        values=tuple(cfg["values"]) if cfg["values"] else None,
        fixed={"t0_c": base.t0_c, "t_target_c": base.t_target_c, "deadline_steps": base.deadline_steps},
        controllers=tuple(cfg["controllers"]),
        seeds=tuple(cfg["seeds"]),
        policy_path=cfg["policy"],
        mcts=_mcts(cfg),
        params=base.params,
        band_c=base.band_c,
        ppo_sample=bool(cfg["ppo_sample"]),
        jobs=int(cfg["jobs"]),
    )
    rows = run_sweep(spec)
    write_results_csv(rows, cfg["out"])
    if rows:
        table = summarize(rows, spec.axis)
        if cfg["summary"]:
            write_summary_csv(table, cfg["summary"])
        for s in table:
            sv = "NA" if s.savings_vs_bangbang is None else f"{s.savings_vs_bangbang:.3f}"
            print(f"{s.controller:9s} {spec.axis}={s.grid_value:g} mean_wh={s.mean_energy_wh:.1f} savings={sv}")
    print(f"rows={len(rows)} out={cfg['out']}")
    return 0


def cmd_plot(cfg: dict) -> int:
    from .env import read_trajectory_csv
    from .plot import emit_plot
    from .sweep import read_results_csv

    inputs = cfg["inputs"]
    if not inputs:
        raise ConfigError("plot needs at least one --in file")
    if isinstance(inputs, str):
        inputs = [inputs]
    for p in inputs:
        if not Path(p).is_file():
            raise ConfigError(f"input not found: {p}")
    if cfg["kind"] == "scatter_by_axis":
        rows = [r for p in inputs for r in read_results_csv(p)]
        emit_plot(rows, "scatter_by_axis", cfg["out"], axis=cfg["axis"])
    elif cfg["kind"] == "trajectory":
        series = {Path(p).stem: read_trajectory_csv(p)["temp_c"] for p in inputs}
        # trajectory CSVs start at step 1; plot them on that index
        series = {k: [math.nan, *v] for k, v in series.items()}
        emit_plot(series, "trajectory", cfg["out"], target_c=cfg["target"])
    else:
        raise ConfigError(f"unknown plot kind {cfg['kind']!r}")
    print(f"figure={cfg['out']}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "plan": cmd_plan, "train": cmd_train, "sweep": cmd_sweep, "plot": cmd_plot}


# ---------------------------------------------------------------------------
# argument parsing


def _add_episode_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("episode")
    g.add_argument("--t0", type=float, help="initial temperature °C (default 20)")
    g.add_argument("--target", type=float, help="target temperature °C (default 60)")
    g.add_argument("--deadline", type=int, help="deadline in steps (default 60)")
    g.add_argument("--band", type=float, help="terminal service band ±°C (default 1)")
    t = p.add_argument_group("tank")
    t.add_argument("--mass-kg", dest="mass_kg", type=float)
    t.add_argument("--cp", type=float)
    t.add_argument("--h", type=float)
    t.add_argument("--area-m2", dest="area_m2", type=float)
    t.add_argument("--eta", type=float)
    t.add_argument("--p-on-w", dest="p_on_w", type=float)
    t.add_argument("--dt-s", dest="dt_s", type=float)
    t.add_argument("--ambient", type=float)


def _add_mcts_flags(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--sims", type=int, help="MCTS simulations per decision (default 25000)")
    p.add_argument("--c-ucb", dest="c_ucb", type=float, help="UCB1 exploration constant (default sqrt 2)")
    if seed:
        p.add_argument("--seed", type=int, help="RNG seed (default $HEATPLAN_SEED or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatplan", description="Deadline-aware water-heater control benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one closed-loop episode and write its trajectory CSV")
    p.add_argument("--config")
    _add_episode_flags(p)
    _add_mcts_flags(p)
    p.add_argument("--controller", choices=CONTROLLERS)
    p.add_argument("--policy", help="PPO policy file")
    p.add_argument("--out", help="trajectory CSV path")
    p.add_argument("--trace", help="MCTS search trace (JSON lines)")

    p = sub.add_parser("plan", help="print an open-loop oracle schedule or one MCTS root decision")
    p.add_argument("--config")
    _add_episode_flags(p)
    _add_mcts_flags(p)
    p.add_argument("--method", choices=("oracle", "bruteforce", "mcts"))
    p.add_argument("--temp", type=float, help="MCTS root temperature (default t0)")
    p.add_argument("--time-index", dest="time_index", type=int)

    p = sub.add_parser("train", help="train a PPO policy")
    p.add_argument("--config")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="policy JSON path")
    p.add_argument("--curve", help="learning-curve CSV path (default <out>.curve.csv)")
    p.add_argument("--steps-per-batch", dest="steps_per_batch", type=int)
    p.add_argument("--minibatch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--clip-ratio", dest="clip_ratio", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--gae-lambda", dest="gae_lambda", type=float)
    p.add_argument("--value-coef", dest="value_coef", type=float)
    p.add_argument("--entropy-coef", dest="entropy_coef", type=float)
    p.add_argument("--grad-clip-norm", dest="grad_clip_norm", type=float)

    p = sub.add_parser("sweep", help="one-dimensional sweep over a grid")
    p.add_argument("--config")
    _add_episode_flags(p)
    _add_mcts_flags(p, seed=False)
    p.add_argument("--vary", choices=sorted(AXES))
    p.add_argument("--values", help="comma-separated grid (default: the standard grid)")
    p.add_argument("--controllers", help=f"comma-separated subset of {','.join(CONTROLLERS)}")
    p.add_argument("--seeds", help="comma-separated seeds for stochastic controllers")
    p.add_argument("--policy")
    p.add_argument("--ppo-sample", dest="ppo_sample", action="store_true", default=None,
                   help="sample PPO actions instead of greedy argmax")
    p.add_argument("--jobs", type=int, help="worker threads")
    p.add_argument("--out", help="results CSV path")
    p.add_argument("--summary", help="per-grid-point summary CSV path")

    p = sub.add_parser("plot", help="draw a sweep scatter or trajectory figure")
    p.add_argument("--config")
    p.add_argument("--in", dest="inputs", nargs="+", help="results or trajectory CSV file(s)")
    p.add_argument("--kind", choices=("scatter_by_axis", "trajectory"))
    p.add_argument("--out")
    p.add_argument("--axis", choices=sorted(AXES))
    p.add_argument("--target", type=float, help="target line for trajectory plots")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        sys.stderr.write(render_config(args.command, cfg))
        return COMMANDS[args.command](cfg)
    except (ConfigError, SpecError, SweepConfigError, PolicyFormatError) as exc:
        print(f"heatplan: configuration error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"heatplan: training aborted: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"heatplan: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
