"""Command line entry points.

Subcommands: inspect (profile statistics), synth (write a group dataset),
train (fit one model, write a checkpoint), eval (score a checkpoint or a
baseline), experiment (full repeated sweep from a config file). The
DEEPGROUP_CONFIG environment variable supplies the config path when
--config is omitted; it overrides nothing else.
"""

import argparse
import os
import sys

import numpy as np

from .baselines import osim_predict, pop_predict, rtcp_predict, summarize_training
from .groups import (
    SynthConfig,
    assign_decisions,
    generate_groups,
    parse_group_dataset,
    serialize_group_dataset,
)
from .harness import (
    build_reverse_test,
    emit_results,
    load_config,
    parse_task,
    run_experiment,
)
from .model import AGGREGATORS, DeepGroupModel, ModelConfig
from .preflib import parse_preference_file
from .social_choice import DecisionRule


def _read_profile(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_preference_file(fh.read())


def _read_groups(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_group_dataset(fh.read())


def _cmd_inspect(args):
    profile = _read_profile(args.data)
    print(f"alternatives: {profile.num_alternatives}")
    for i, name in enumerate(profile.alternative_names, start=1):
        print(f"  {i}: {name}")
    print(f"voters: {profile.num_voters}")
    lengths = np.array([len(r) for r in profile.voters])
    print(f"ballot lengths: min={lengths.min()} mean={lengths.mean():.2f} max={lengths.max()}")
    tops = np.bincount([r.entries[0] for r in profile.voters], minlength=profile.num_alternatives + 1)[1:]
    shares = ", ".join(f"{i + 1}:{c / profile.num_voters:.3f}" for i, c in enumerate(tops))
    print(f"top-choice shares: {shares}")
    return 0


def _cmd_synth(args):
    profile = _read_profile(args.data)
    rng = np.random.default_rng(args.seed)
    if args.n_users is not None:
        from .preflib import sample_users

        profile = sample_users(profile, args.n_users, rng)
    synth = SynthConfig(
        method=args.method,
        kappa=args.kappa,
        num_groups=args.num_groups,
        s_min=args.s_min,
        s_max=args.s_max,
        tau_sim=args.tau_sim,
        tau_dis=args.tau_dis,
        seed=args.seed,
    )
    groups = generate_groups(profile, synth, rng)
    dataset = assign_decisions(
        groups, profile, DecisionRule.parse(args.rule), rng, method=args.method, seed=args.seed
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_group_dataset(dataset))
    print(f"wrote {len(dataset)} groups over {dataset.num_alternatives} alternatives to {args.out}")
    return 0


def _model_config(args, num_users, num_items):
    return ModelConfig(
        num_users=num_users,
        num_items=num_items,
        aggregator=args.aggregator,
        hidden_sizes=tuple(int(h) for h in args.hidden_sizes.split(",")),
        keep_prob=args.keep_prob,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def _cmd_train(args):
    profile = _read_profile(args.data)
    dataset = _read_groups(args.groups)
    config = _model_config(args, profile.num_voters, profile.num_alternatives)
    model = DeepGroupModel(config)
    trace = model.fit(dataset)
    model.save(args.out)
    print(f"trained {config.epochs} epochs on {len(dataset)} groups; "
          f"loss {trace[0]:.4f} -> {trace[-1]:.4f}; checkpoint at {args.out}")
    return 0


def _cmd_eval(args):
    profile = _read_profile(args.data)
    train = _read_groups(args.train_groups)
    task = parse_task(args.task)
    if task == "group_decision":
        if args.test_groups is None:
            raise SystemExit("eval: --test-groups is required for the group decision task")
        test = _read_groups(args.test_groups)
        test_groups, targets = test.groups, test.decisions
    else:
        test_groups, targets = build_reverse_test(train, profile)
    rng = np.random.default_rng(args.seed)
    if args.method == "DeepGroup":
        if args.model is None:
            raise SystemExit("eval: --model checkpoint is required for DeepGroup")
        model = DeepGroupModel.load(args.model)
        scores = model.predict_scores_batch([g.members for g in test_groups])
        preds = scores.argmax(axis=1) + 1
    else:
        summary = summarize_training(train)
        fn = {"Pop": lambda g: pop_predict(summary, rng),
              "RTCP": lambda g: rtcp_predict(g, summary, rng),
              "OSim": lambda g: osim_predict(g, summary, rng)}[args.method]
        preds = np.array([fn(g) for g in test_groups])
    accuracy = float(np.mean(preds == np.asarray(targets)))
    print(f"{args.method} {task} accuracy: {accuracy:.4f} over {len(test_groups)} test groups")
    return 0


def _cmd_experiment(args):
    config_path = args.config or os.environ.get("DEEPGROUP_CONFIG")
    if not config_path:
        raise SystemExit("experiment: provide --config or set DEEPGROUP_CONFIG")
    config = load_config(config_path)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output = args.out
    if args.jobs is not None:
        config.jobs = args.jobs
    report = run_experiment(config)
    detail, summary = emit_results(report, config.output)
    for method in config.methods:
        print(f"{method}: mean accuracy {report.mean(method):.4f} "
              f"(std {report.std(method):.4f}, {config.instances} instances)")
    print(f"wrote {detail} and {summary}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="deepgroup", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print statistics of a preference file")
    p.add_argument("--data", required=True, help="preference file path")
    p.set_defaults(fn=_cmd_inspect)

    p = sub.add_parser("synth", help="synthesize a group dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("kpg", "rsg", "rdg"), default="kpg")
    p.add_argument("--kappa", type=int, default=None)
    p.add_argument("--num-groups", type=int, default=None)
    p.add_argument("--n-users", type=int, default=None)
    p.add_argument("--s-min", type=int, default=2)
    p.add_argument("--s-max", type=int, default=10)
    p.add_argument("--tau-sim", type=float, default=0.5)
    p.add_argument("--tau-dis", type=float, default=-0.5)
    p.add_argument("--rule", default="plurality")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train one model on a group dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--aggregator", choices=AGGREGATORS, default="mean")
    p.add_argument("--hidden-sizes", default="64,32,16,8")
    p.add_argument("--keep-prob", type=float, default=0.8)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--train-groups", required=True)
    p.add_argument("--test-groups", default=None)
    p.add_argument("--task", default="group_decision")
    p.add_argument("--method", choices=("DeepGroup", "Pop", "RTCP", "OSim"), default="DeepGroup")
    p.add_argument("--model", default=None, help="checkpoint path (DeepGroup only)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("experiment", help="run a full experiment from a config file")
    p.add_argument("--config", default=None, help="key=value config (or DEEPGROUP_CONFIG)")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--out", default=None, help="override output directory")
    p.add_argument("--jobs", type=int, default=None, help="parallel instance workers")
    p.set_defaults(fn=_cmd_experiment)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"deepgroup {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
