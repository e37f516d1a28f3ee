"""Experiment orchestration: synth -> split -> train -> evaluate -> CSV.

A run is a grid cell: one preference file, one synthesis setting, one rule,
one task. It repeats over independent dataset instances and reports
per-method accuracy. Instance randomness comes from a seed lattice: every
random stream is seeded by (master seed, instance index, purpose), so
results replay byte-identically and adding instances never perturbs earlier
ones.
"""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .baselines import osim_predict, pop_predict, rtcp_predict, summarize_training
from .groups import Group, GroupDataset, SynthConfig, assign_decisions, generate_groups
from .model import DeepGroupModel, ModelConfig
from .preflib import parse_preference_file, sample_users
from .social_choice import DecisionRule

TASKS = ("group_decision", "reverse_social_choice")
METHODS = ("DeepGroup", "Pop", "RTCP", "OSim")

_TASK_ALIASES = {
    "groupdecision": "group_decision",
    "groupdecisionprediction": "group_decision",
    "reversesocialchoice": "reverse_social_choice",
    "reverse": "reverse_social_choice",
}

# purposes in the (master, instance, purpose) seed lattice
_SEED_SAMPLE = 0
_SEED_SYNTH = 1
_SEED_DECIDE = 2
_SEED_SPLIT = 3
_SEED_METHOD_BASE = 10  # + canonical method index, so the method set never shifts seeds


def parse_task(text):
    key = "".join(c for c in text.strip().lower() if c not in "-_ ")
    if key not in _TASK_ALIASES:
        raise ValueError(f"unknown task {text!r}")
    return _TASK_ALIASES[key]


def parse_method(text):
    for m in METHODS:
        if text.strip().lower().replace("-", "") == m.lower():
            return m
    raise ValueError(f"unknown method {text!r}, expected one of {METHODS}")


@dataclass
class ExperimentConfig:
    preference_file: str
    synth: SynthConfig
    rule: DecisionRule
    task: str = "group_decision"
    methods: tuple = METHODS
    n_users: int = None  # sample size; None uses the full profile
    model: ModelConfig = field(default_factory=lambda: ModelConfig(num_users=1, num_items=1))
    instances: int = 20
    split_fraction: float = 0.7
    output: str = "results"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        self.task = parse_task(self.task)
        self.methods = tuple(parse_method(m) for m in self.methods)
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must be in (0, 1)")
        if self.instances < 1:
            raise ValueError("instances must be >= 1")
        if self.seed < 0:
            raise ValueError("master seed must be non-negative")

    @property
    def dataset_name(self):
        return os.path.splitext(os.path.basename(self.preference_file))[0]

    @property
    def kappa_or_l(self):
        return self.synth.kappa if self.synth.method == "kpg" else self.synth.num_groups


@dataclass
class EvalReport:
    config: ExperimentConfig
    accuracies: dict  # method -> list of per-instance accuracies

    def mean(self, method):
        return float(np.mean(self.accuracies[method]))

    def std(self, method):
        return float(np.std(self.accuracies[method]))


def _lattice_rng(master, instance, purpose):
    return np.random.default_rng(np.random.SeedSequence([master, instance, purpose]))


def split_dataset(dataset, fraction, rng):
    """Uniform random split by group; train gets round(fraction * l) groups.

    Both sides stay non-empty (the rounding is clamped), and group identity
    is the member set, so no group can sit on both sides.
    """
    l = len(dataset)
    if l < 2:
        raise ValueError("need at least 2 groups to split")
    n_train = min(max(int(round(fraction * l)), 1), l - 1)
    perm = rng.permutation(l)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    def take(idx):
        return GroupDataset(
            groups=[dataset.groups[i] for i in idx],
            decisions=[dataset.decisions[i] for i in idx],
            num_alternatives=dataset.num_alternatives,
            method=dataset.method,
            rule=dataset.rule,
            seed=dataset.seed,
            rule_used=[dataset.rule_used[i] for i in idx] if dataset.rule_used else None,
        )

    return take(train_idx), take(test_idx)


def build_reverse_test(train, profile):
    """Singleton test groups for every distinct user in the training groups.

    Ground truth is each user's own top choice.
    """
    if not len(train):
        raise ValueError("empty training set")
    users = sorted({u for g in train.groups for u in g.members})
    groups = [Group(members=(u,)) for u in users]
    truths = [profile.voters[u].entries[0] for u in users]
    return groups, truths


def evaluate(method, train, test_groups, test_targets, profile, model_config, rng):
    """Accuracy of one method's top-1 predictions against the targets."""
    if not test_groups:
        raise ValueError("empty test set")
    if method == "DeepGroup":
        config = replace(
            model_config,
            num_users=profile.num_voters,
            num_items=profile.num_alternatives,
            seed=int(rng.integers(2**62)),
        )
        model = DeepGroupModel(config)
        model.fit(train)
        scores = model.predict_scores_batch([g.members for g in test_groups])
        preds = scores.argmax(axis=1) + 1
    else:
        summary = summarize_training(train)
        predictor = {"Pop": lambda g: pop_predict(summary, rng),
                     "RTCP": lambda g: rtcp_predict(g, summary, rng),
                     "OSim": lambda g: osim_predict(g, summary, rng)}[method]
        preds = np.array([predictor(g) for g in test_groups])
    return float(np.mean(preds == np.asarray(test_targets)))


@lru_cache(maxsize=4)
def _load_profile(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_preference_file(fh.read())


def run_instance(config, instance):
    """One dataset instance end to end; returns {method: accuracy}."""
    profile = _load_profile(config.preference_file)
    if config.n_users is not None:
        profile = sample_users(profile, config.n_users, _lattice_rng(config.seed, instance, _SEED_SAMPLE))
    groups = generate_groups(profile, config.synth, _lattice_rng(config.seed, instance, _SEED_SYNTH))
    dataset = assign_decisions(
        groups, profile, config.rule, _lattice_rng(config.seed, instance, _SEED_DECIDE),
        method=config.synth.method, seed=config.seed,
    )
    if config.task == "group_decision":
        train, test = split_dataset(dataset, config.split_fraction, _lattice_rng(config.seed, instance, _SEED_SPLIT))
        test_groups, targets = test.groups, test.decisions
    else:
        train = dataset
        test_groups, targets = build_reverse_test(train, profile)
    result = {}
    for method in config.methods:
        rng = _lattice_rng(config.seed, instance, _SEED_METHOD_BASE + METHODS.index(method))
        result[method] = evaluate(method, train, test_groups, targets, profile, config.model, rng)
    return result


def _run_instance_job(args):
    config, instance = args
    try:
        return instance, run_instance(config, instance)
    except Exception as exc:
        raise RuntimeError(f"instance {instance} failed: {exc}") from exc


def run_experiment(config):
    """All instances of one grid cell, aggregated into an EvalReport."""
    results = {}
    jobs = [(config, i) for i in range(config.instances)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for instance, accs in pool.map(_run_instance_job, jobs):
                results[instance] = accs
    else:
        for job in jobs:
            instance, accs = _run_instance_job(job)
            results[instance] = accs
    accuracies = {m: [results[i][m] for i in range(config.instances)] for m in config.methods}
    return EvalReport(config=config, accuracies=accuracies)


def emit_results(report, out_dir):
    """Write detail.csv (one row per method x instance) and summary.csv."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = report.config
    cell = [cfg.dataset_name, cfg.task, cfg.rule.kind, cfg.synth.method, cfg.kappa_or_l]
    detail_path = os.path.join(out_dir, "detail.csv")
    with open(detail_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "task", "rule", "synth_method", "kappa_or_l",
                         "method", "instance", "accuracy"])
        for method in cfg.methods:
            for instance, acc in enumerate(report.accuracies[method]):
                writer.writerow(cell + [method, instance, repr(acc)])
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "task", "rule", "synth_method", "kappa_or_l",
                         "method", "instances", "mean_accuracy", "std_accuracy"])
        for method in cfg.methods:
            writer.writerow(cell + [method, cfg.instances,
                                    repr(report.mean(method)), repr(report.std(method))])
    return detail_path, summary_path


# ---------------------------------------------------------------------------
# flat key=value config files
# ---------------------------------------------------------------------------

_MODEL_KEYS = {
    "aggregator": str,
    "user_dim": int,
    "item_dim": int,
    "keep_prob": float,
    "learning_rate": float,
    "epochs": int,
    "batch_size": int,
}


def load_config(path):
    """Read an ExperimentConfig from a flat key=value text file."""
    raw = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path} line {line_no}: expected key=value, got {line!r}")
            raw[key.strip().lower()] = value.strip()

    def pop(key, convert, default=None):
        if key in raw:
            return convert(raw.pop(key))
        return default

    preference_file = raw.pop("preference_file", None)
    if preference_file is None:
        raise ValueError(f"{path}: preference_file is required")
    if not os.path.isabs(preference_file):
        preference_file = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), preference_file))

    synth = SynthConfig(
        method=pop("synth_method", str, "kpg").lower(),
        kappa=pop("kappa", int),
        num_groups=pop("num_groups", int),
        s_min=pop("s_min", int, 2),
        s_max=pop("s_max", int, 10),
        tau_sim=pop("tau_sim", float, 0.5),
        tau_dis=pop("tau_dis", float, -0.5),
        seed=0,
    )
    model = ModelConfig(num_users=1, num_items=1)
    model_args = {}
    for key, convert in _MODEL_KEYS.items():
        if key in raw:
            model_args[key] = convert(raw.pop(key))
    if "hidden_sizes" in raw:
        model_args["hidden_sizes"] = tuple(int(h) for h in raw.pop("hidden_sizes").split(","))
    if model_args:
        model = replace(model, **model_args)

    config = ExperimentConfig(
        preference_file=preference_file,
        synth=synth,
        rule=DecisionRule.parse(pop("rule", str, "plurality")),
        task=pop("task", str, "group_decision"),
        methods=tuple(m.strip() for m in pop("methods", str, ",".join(METHODS)).split(",")),
        n_users=pop("n_users", int),
        model=model,
        instances=pop("instances", int, 20),
        split_fraction=pop("split_fraction", float, 0.7),
        output=pop("output", str, "results"),
        seed=pop("seed", int, 0),
        jobs=pop("jobs", int, 1),
    )
    if raw:
        raise ValueError(f"{path}: unknown config keys {sorted(raw)}")
    return config
