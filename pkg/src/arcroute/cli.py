"""Command-line entry points: dataset generation, labeling, training,
solving, benchmarking, split re-optimization and invariant checking."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .arcgraph import run_sequence, solution_to_sequence, transform
from .baselines import ps_best_of_rules
from .bench import run_benchmark
from .config import Config, ConfigError
from .generator import DatasetSpec, GenerationError, generate_dataset, preset_spec
from .instance import (
    InstanceError,
    all_pairs_shortest_paths,
    evaluate_solution,
    load_instance,
    load_solution,
    save_instance,
    save_solution,
    validate_instance,
)
from .model import (
    ModelConfig,
    Prepared,
    init_params,
    load_policy,
    prepare_instance,
    rollout,
    save_policy,
)
from .pathopt import ServiceOrder, beam_search, dp_split, dual_beam_decode, split_to_solution, strip_depot_arcs
from .teacher import (
    TeacherError,
    exact_solve,
    labelize,
    load_labels,
    local_search_solve,
    save_labels,
)
from .training import PpoConfig, SlConfig, evaluate_policy, finetune_ppo, pretrain_sl

METHODS = ("daam", "daam-po", "ps", "teacher", "exact")


def _config_from(args) -> Config:
    if getattr(args, "config", None):
        return Config.load(args.config)
    return Config()


def _model_config(cfg: Config) -> ModelConfig:
    return ModelConfig(
        d_h=cfg.get_int("d_h"),
        n_layers=cfg.get_int("n_layers"),
        n_heads=cfg.get_int("n_heads"),
        clip_c=cfg.get_float("clip_c"),
        mds_dim=cfg.get_int("mds_dim"),
    )


def _load_dataset(data_dir: Path):
    paths = sorted(data_dir.glob("*.txt"))
    if not paths:
        raise InstanceError(f"no instance files (*.txt) under {data_dir}")
    return [(p, load_instance(p)) for p in paths]


def _params_for(args, cfg: Config):
    if getattr(args, "checkpoint", None):
        return load_policy(args.checkpoint)
    return init_params(_model_config(cfg), np.random.default_rng(cfg.get_int("init_seed")))


def _solve_one(method: str, instance, prep: Prepared, params, cfg: Config, args):
    if method == "ps":
        return ps_best_of_rules(instance, prep.graph, prep.dist, seed=args.seed)
    if method == "teacher":
        rng = np.random.default_rng(args.seed)
        return local_search_solve(
            instance, prep.dist, budget=cfg.get_int("teacher_budget"), rng=rng,
            graph=prep.graph, stall_limit=cfg.get_int("teacher_stall_limit"),
        )
    if method == "exact":
        return exact_solve(instance, prep.dist)
    if method == "daam-po":
        return dual_beam_decode(prep, params, beam_width=cfg.get_int("beam_width"))
    # plain policy decode, split at the depot returns it chose itself
    if args.mode == "beam":
        seq = beam_search(prep, params, cfg.get_int("beam_width"), constrained=True)
    else:
        rng = np.random.default_rng(args.seed) if args.mode == "sample" else None
        seq = rollout(prep, params, mode=args.mode, rng=rng).final_state.sequence
    from .arcgraph import sequence_to_solution

    return sequence_to_solution(prep.graph, seq)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = _config_from(args)
    spec = preset_spec(cfg.get_str("dataset_scale"), count=args.count, seed=args.seed)
    spec = DatasetSpec(
        name=spec.name,
        count=args.count,
        node_lo=spec.node_lo,
        node_hi=spec.node_hi,
        required_edges=spec.required_edges,
        demand_lo=cfg.get_int("demand_lo"),
        demand_hi=cfg.get_int("demand_hi"),
        capacity=cfg.get_int("capacity"),
        seed=args.seed,
        edge_factor=cfg.get_float("edge_factor"),
        coord_scale=cfg.get_int("coord_scale"),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for instance in generate_dataset(spec):
        save_instance(instance, out / f"{instance.name}.txt")
    print(f"wrote {spec.count} instances to {out}")
    return 0


def cmd_label(args) -> int:
    cfg = _config_from(args)
    out = Path(args.out) if args.out else Path(args.data)
    out.mkdir(parents=True, exist_ok=True)
    budget = args.budget if args.budget is not None else cfg.get_int("teacher_budget")
    n = 0
    for path, instance in _load_dataset(Path(args.data)):
        dist = all_pairs_shortest_paths(instance)
        graph = transform(instance, dist)
        if args.teacher == "exact":
            sol = exact_solve(instance, dist)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(n,)))
            sol = local_search_solve(
                instance, dist, budget=budget, rng=rng, graph=graph,
                stall_limit=cfg.get_int("teacher_stall_limit"),
            )
        save_labels(labelize(instance, sol, graph), out / f"{path.stem}.label")
        n += 1
    print(f"labeled {n} instances into {out}")
    return 0


def cmd_train_sl(args) -> int:
    cfg = _config_from(args)
    params = _params_for(args, cfg)
    dataset = []
    for path, instance in _load_dataset(Path(args.data)):
        label_path = path.with_suffix(".label")
        if not label_path.exists():
            print(f"skipping {path.name}: no label file", file=sys.stderr)
            continue
        prep = prepare_instance(instance, params.config.mds_dim)
        dataset.append((prep, load_labels(label_path)))
    sl = SlConfig(
        batch_size=cfg.get_int("sl_batch_size"),
        epochs=args.epochs if args.epochs is not None else cfg.get_int("sl_epochs"),
        learning_rate=cfg.get_float("learning_rate"),
        shuffle_seed=cfg.get_int("sl_shuffle_seed"),
    )
    pretrain_sl(dataset, params, sl, log=print)
    save_policy(args.out, params)
    print(f"saved checkpoint to {args.out}")
    return 0


def cmd_train_rl(args) -> int:
    cfg = _config_from(args)
    params = _params_for(args, cfg)
    train_pool = [
        prepare_instance(inst, params.config.mds_dim)
        for _, inst in _load_dataset(Path(args.train))
    ]
    test_pool = [
        prepare_instance(inst, params.config.mds_dim)
        for _, inst in _load_dataset(Path(args.test))
    ]
    ppo = PpoConfig(
        batch_size=cfg.get_int("ppo_batch_size"),
        episodes=args.episodes if args.episodes is not None else cfg.get_int("ppo_episodes"),
        clip_epsilon=cfg.get_float("ppo_clip_epsilon"),
        inner_epochs=cfg.get_int("ppo_inner_epochs"),
        eval_pool_size=cfg.get_int("ppo_eval_pool"),
        constrained=cfg.get_bool("ppo_constrained"),
    )
    finetune_ppo(params, train_pool, test_pool, ppo, np.random.default_rng(args.seed), log=print)
    save_policy(args.out, params)
    print(f"saved checkpoint to {args.out}")
    return 0


def cmd_solve(args) -> int:
    cfg = _config_from(args)
    instance = load_instance(args.instance)
    mds_dim = cfg.get_int("mds_dim")
    params = None
    if args.method in ("daam", "daam-po"):
        params = _params_for(args, cfg)
        mds_dim = params.config.mds_dim
    prep = prepare_instance(instance, mds_dim)
    sol = _solve_one(args.method, instance, prep, params, cfg, args)
    ev = evaluate_solution(instance, prep.dist, sol)
    sol.total_cost, sol.deadhead_cost = ev.total_cost, ev.deadhead_cost
    if args.out:
        save_solution(instance.name, sol, args.out)
    print(f"{args.method} cost {ev.total_cost} deadhead {ev.deadhead_cost} "
          f"feasible {ev.feasible} routes {len(sol.routes)}")
    return 0 if ev.feasible else 1


def cmd_bench(args) -> int:
    cfg = _config_from(args)
    instances = [inst for _, inst in _load_dataset(Path(args.data))]
    wanted = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in wanted + [args.reference]:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    if args.reference not in wanted:
        wanted.append(args.reference)
    params = (
        _params_for(args, cfg) if any(m.startswith("daam") for m in wanted) else None
    )
    mds_dim = params.config.mds_dim if params else cfg.get_int("mds_dim")
    preps = {inst.name: prepare_instance(inst, mds_dim) for inst in instances}

    def make_solver(method):
        def solve(instance):
            return _solve_one(method, instance, preps[instance.name], params, cfg, args)

        return solve

    report = run_benchmark(
        {m: make_solver(m) for m in wanted},
        instances,
        reference=args.reference,
        repeats=args.repeats if args.repeats is not None else cfg.get_int("bench_repeats"),
    )
    print(report.table())
    if args.out:
        Path(args.out).write_text(report.delimited(), encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_opt(args) -> int:
    """Re-optimize the depot returns of an existing solution file."""
    instance = load_instance(args.instance)
    dist = all_pairs_shortest_paths(instance)
    graph = transform(instance, dist)
    name, sol = load_solution(args.solution)
    seq = solution_to_sequence(graph, sol.routes)
    order = strip_depot_arcs(seq)
    split = dp_split(order, graph, instance.capacity)
    improved = split_to_solution(order, split, graph)
    ev = evaluate_solution(instance, dist, improved)
    save_solution(name, improved, args.out or args.solution)
    print(f"optimized cost {ev.total_cost} (was {sol.total_cost})")
    return 0


def cmd_check(args) -> int:
    """Run the invariant suite over a dataset directory."""
    rng = np.random.default_rng(args.seed)
    failures = 0
    for path, instance in _load_dataset(Path(args.data)):
        problems = validate_instance(instance)
        if problems:
            failures += 1
            print(f"{path.name}: INVALID: {problems[0]}")
            continue
        dist = all_pairs_shortest_paths(instance)
        graph = transform(instance, dist)
        # random legal rollout must satisfy the reward/cost identity
        from .arcgraph import initial_state, legal_actions, step as env_step
        from .arcgraph import rollout_cost_identity

        state = initial_state(graph)
        actions, rewards = [], []
        while not state.done:
            mask = legal_actions(state, graph, constrained=True)
            choices = np.nonzero(mask)[0]
            action = int(choices[rng.integers(len(choices))])
            actions.append(action)
            state, reward = env_step(state, action, graph)
            rewards.append(reward)
        rollout_cost_identity(instance, dist, graph, state.sequence, rewards)
        ps = ps_best_of_rules(instance, graph, dist, seed=args.seed)
        ev = evaluate_solution(instance, dist, ps)
        if not ev.feasible:
            failures += 1
            print(f"{path.name}: path scanning produced infeasible solution")
            continue
        print(f"{path.name}: ok (ps cost {ev.total_cost})")
    if failures:
        print(f"{failures} instance(s) failed checks", file=sys.stderr)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcroute",
        description="Capacitated arc routing toolkit: generate, label, train, solve, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", type=str, default=None, help="key = value config file")
        p.add_argument("--out", type=str, required=out_required, default=None)

    p = sub.add_parser("gen", help="generate a dataset from a preset scale")
    common(p, out_required=True)
    p.add_argument("--count", type=int, default=100)

    p = sub.add_parser("label", help="run the teacher over a dataset")
    common(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--teacher", choices=("ls", "exact"), default="ls")
    p.add_argument("--budget", type=int, default=None)

    p = sub.add_parser("train-sl", help="supervised pre-training on teacher labels")
    common(p, out_required=True)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--checkpoint", type=str, default=None, help="warm start")

    p = sub.add_parser("train-rl", help="PPO fine-tuning with self-critical baseline")
    common(p, out_required=True)
    p.add_argument("--train", type=str, required=True)
    p.add_argument("--test", type=str, required=True)
    p.add_argument("--checkpoint", type=str, default=None, help="initial policy")
    p.add_argument("--episodes", type=int, default=None)

    p = sub.add_parser("solve", help="solve one instance")
    common(p)
    p.add_argument("--instance", type=str, required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--checkpoint", type=str, default=None)
    p.add_argument("--mode", choices=("greedy", "sample", "beam"), default="greedy")

    p = sub.add_parser("bench", help="benchmark methods on a dataset")
    common(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--methods", type=str, required=True, help="comma-separated")
    p.add_argument("--reference", type=str, required=True)
    p.add_argument("--checkpoint", type=str, default=None)
    p.add_argument("--repeats", type=int, default=None, help="timing runs per solve")
    p.add_argument("--mode", choices=("greedy", "sample", "beam"), default="greedy")

    p = sub.add_parser("opt", help="re-optimize depot returns of a solution file")
    common(p)
    p.add_argument("--instance", type=str, required=True)
    p.add_argument("--solution", type=str, required=True)

    p = sub.add_parser("check", help="validate a dataset and core invariants")
    common(p)
    p.add_argument("--data", type=str, required=True)

    return parser


COMMANDS = {
    "gen": cmd_gen,
    "label": cmd_label,
    "train-sl": cmd_train_sl,
    "train-rl": cmd_train_rl,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "opt": cmd_opt,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InstanceError, TeacherError, GenerationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
