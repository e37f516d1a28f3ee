"""The group decision model: embeddings, set aggregator, MLP tower.

A group is encoded by aggregating its members' embedding rows into one
fixed-length vector (mean / max / min / median, or their mean-max-min
concatenation), which is concatenated with the candidate item's embedding
and pushed through a relu MLP ending in a sigmoid. Training maximizes the
likelihood of the observed one-hot group-item interactions: every group
contributes one positive record and m-1 negatives, optimized with
mini-batch Adam on mean binary cross-entropy.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .tensor import Tensor

ELEMENTWISE_AGGREGATORS = ("mean", "max", "min", "median")
AGGREGATORS = ELEMENTWISE_AGGREGATORS + ("mean_max_min",)


@dataclass
class ModelConfig:
    num_users: int
    num_items: int
    user_dim: int = 64
    item_dim: int = 64
    hidden_sizes: tuple = (64, 32, 16, 8)
    aggregator: str = "mean"
    keep_prob: float = 0.8
    learning_rate: float = 0.001
    epochs: int = 100
    batch_size: int = 4096
    seed: int = 0

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.num_users < 1 or self.num_items < 1:
            raise ValueError("need at least one user and one item")
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}, expected one of {AGGREGATORS}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError("keep_prob must be in (0, 1]")

    @property
    def agg_output_dim(self):
        return self.user_dim * (3 if self.aggregator == "mean_max_min" else 1)


def _glorot(rng, fan_out, fan_in):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def _ragged_take(flat, offsets, segments):
    """Concatenate flat[offsets[s]:offsets[s+1]] for s in segments."""
    sizes = offsets[segments + 1] - offsets[segments]
    total = int(sizes.sum())
    out_offsets = np.zeros(segments.shape[0] + 1, dtype=np.int64)
    np.cumsum(sizes, out=out_offsets[1:])
    within = np.arange(total, dtype=np.int64) - np.repeat(out_offsets[:-1], sizes)
    return flat[np.repeat(offsets[segments], sizes) + within], out_offsets


class DeepGroupModel:
    """Likelihood model for (group, item) interactions.

    Parameters live in self.params; fit() trains in place and records which
    users were seen, so prediction can substitute the mean learned embedding
    for cold users.
    """

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c = config
        params = {
            "user_embeddings": Tensor(rng.normal(0.0, 0.01, (c.num_users, c.user_dim)), requires_grad=True),
            "item_embeddings": Tensor(rng.normal(0.0, 0.01, (c.num_items, c.item_dim)), requires_grad=True),
        }
        fan_in = c.agg_output_dim + c.item_dim
        for i, width in enumerate(c.hidden_sizes, start=1):
            params[f"hidden_weight_{i}"] = Tensor(_glorot(rng, width, fan_in), requires_grad=True)
            params[f"hidden_bias_{i}"] = Tensor(np.zeros(width), requires_grad=True)
            fan_in = width
        params["output_weight"] = Tensor(_glorot(rng, 1, fan_in), requires_grad=True)
        params["output_bias"] = Tensor(np.zeros(1), requires_grad=True)
        self.params = params
        self.seen_users = frozenset()
        self.fitted = False

    # -- forward ----------------------------------------------------------

    def _check_members(self, member_ids):
        members = sorted(member_ids)
        if not members:
            raise ValueError("group has no members")
        if len(set(members)) != len(members):
            raise ValueError("duplicate member id")
        if members[0] < 0 or members[-1] >= self.config.num_users:
            raise IndexError(f"member id out of range [0, {self.config.num_users})")
        return np.array(members, dtype=np.int64)

    def _aggregate(self, member_idx, offsets):
        U = self.params["user_embeddings"]
        if self.config.aggregator == "mean_max_min":
            mean = T.gather_segment_reduce(U, member_idx, offsets, "mean")
            mx = T.gather_segment_reduce(U, member_idx, offsets, "max")
            mn = T.gather_segment_reduce(U, member_idx, offsets, "min")
            return T.concat_cols(T.concat_cols(mean, mx), mn)
        return T.gather_segment_reduce(U, member_idx, offsets, self.config.aggregator)

    def aggregate_group(self, member_ids):
        """Group embedding as a differentiable (agg_output_dim,) tensor.

        Member rows are gathered in ascending user-id order, so the result is
        bit-identical under any permutation of member_ids.
        """
        members = self._check_members(member_ids)
        offsets = np.array([0, members.shape[0]], dtype=np.int64)
        return T.reshape(self._aggregate(members, offsets), (self.config.agg_output_dim,))

    def forward_batch(self, member_idx, offsets, item_idx, training=False, rng=None):
        """Interaction probabilities for a batch of (group, item) records.

        member_idx/offsets give each record's member rows (ragged); item_idx
        is one item per record. Returns a (batch, 1) tensor in (0, 1).
        """
        if training and rng is None:
            raise ValueError("training mode needs an rng for dropout")
        q = self._aggregate(np.asarray(member_idx, dtype=np.int64), offsets)
        items = T.gather_rows(self.params["item_embeddings"], np.asarray(item_idx, dtype=np.int64))
        x = T.concat_cols(q, items)
        for i in range(1, len(self.config.hidden_sizes) + 1):
            x = T.relu(T.linear(x, self.params[f"hidden_weight_{i}"], self.params[f"hidden_bias_{i}"]))
            x = T.dropout(x, self.config.keep_prob, training, rng)
        logits = T.linear(x, self.params["output_weight"], self.params["output_bias"])
        return T.sigmoid(logits)

    def forward(self, member_ids, alternative_id, training=False, rng=None):
        """Probability that this group interacts with this alternative (1-based id)."""
        members = self._check_members(member_ids)
        if not 1 <= alternative_id <= self.config.num_items:
            raise IndexError(f"alternative id {alternative_id} out of range [1, {self.config.num_items}]")
        if training:
            offsets = np.array([0, members.shape[0]], dtype=np.int64)
            out = self.forward_batch(members, offsets, np.array([alternative_id - 1]), training=True, rng=rng)
            return float(out.data[0, 0])
        return float(self._predict_scores_for(members)[alternative_id - 1])

    # -- training ---------------------------------------------------------

    def fit(self, dataset):
        """Train on a GroupDataset; returns the per-epoch mean loss trace."""
        c = self.config
        if dataset.num_alternatives != c.num_items:
            raise ValueError(
                f"dataset has {dataset.num_alternatives} alternatives, model expects {c.num_items}"
            )
        flat_members = np.concatenate([np.asarray(g.members, dtype=np.int64) for g in dataset.groups])
        if flat_members.min() < 0 or flat_members.max() >= c.num_users:
            raise ValueError("dataset member id out of range for this model")
        group_offsets = np.zeros(len(dataset) + 1, dtype=np.int64)
        np.cumsum([len(g) for g in dataset.groups], out=group_offsets[1:])

        n_groups, m = len(dataset), c.num_items
        record_group = np.repeat(np.arange(n_groups, dtype=np.int64), m)
        record_item = np.tile(np.arange(m, dtype=np.int64), n_groups)
        positives = np.asarray(dataset.decisions, dtype=np.int64) - 1
        labels = (record_item == positives[record_group]).astype(np.float64)

        params = list(self.params.values())
        optimizer = T.Adam(params, learning_rate=c.learning_rate)
        rng = np.random.default_rng([c.seed, 1])
        n_records = record_group.shape[0]
        trace = []
        for _ in range(c.epochs):
            order = rng.permutation(n_records)
            epoch_loss = 0.0
            for start in range(0, n_records, c.batch_size):
                batch = order[start:start + c.batch_size]
                member_idx, offsets = _ragged_take(flat_members, group_offsets, record_group[batch])
                yhat = self.forward_batch(member_idx, offsets, record_item[batch], training=True, rng=rng)
                loss = T.bce_loss(yhat, Tensor(labels[batch].reshape(-1, 1)))
                loss.backward()
                optimizer.step()
                epoch_loss += loss.item() * batch.shape[0]
            trace.append(epoch_loss / n_records)
        self.seen_users = frozenset(int(u) for u in np.unique(flat_members))
        self.fitted = True
        return trace

    # -- prediction -------------------------------------------------------

    def _effective_member_rows(self, flat_members):
        """Embedding rows for prediction; cold users get the mean seen row."""
        U = self.params["user_embeddings"].data
        rows = U[flat_members]
        if self.fitted and len(self.seen_users) < self.config.num_users:
            seen = np.fromiter(self.seen_users, dtype=np.int64)
            seen_mask = np.zeros(self.config.num_users, dtype=bool)
            seen_mask[seen] = True
            cold = ~seen_mask[flat_members]
            if cold.any():
                rows[cold] = U[np.sort(seen)].mean(axis=0)
        return rows

    def _eval_mlp(self, x):
        for i in range(1, len(self.config.hidden_sizes) + 1):
            x = np.maximum(x @ self.params[f"hidden_weight_{i}"].data.T + self.params[f"hidden_bias_{i}"].data, 0.0)
        logits = x @ self.params["output_weight"].data.T + self.params["output_bias"].data
        return T._sigmoid_stable(logits)

    def _predict_scores_for(self, members):
        return self.predict_scores_batch([members])[0]

    def predict_scores_batch(self, member_lists):
        """Evaluation-mode probabilities for every group x every item.

        member_lists: sequence of member-id sequences. Returns an array of
        shape (num_groups, num_items); column j scores alternative j+1.
        """
        c = self.config
        member_arrays = [self._check_members(ms) for ms in member_lists]
        n_groups, m = len(member_arrays), c.num_items
        scores = np.empty((n_groups, m))
        chunk = max(1, 65536 // m)
        item_idx = None
        for start in range(0, n_groups, chunk):
            part = member_arrays[start:start + chunk]
            flat = np.concatenate(part)
            offsets = np.zeros(len(part) + 1, dtype=np.int64)
            np.cumsum([p.shape[0] for p in part], out=offsets[1:])
            rows = self._effective_member_rows(flat)
            if c.aggregator == "mean_max_min":
                qs = [kernels.segment_reduce(rows, offsets, T.REDUCE_OPS[o])[0] for o in ("mean", "max", "min")]
                q = np.concatenate(qs, axis=1)
            else:
                q, _ = kernels.segment_reduce(rows, offsets, T.REDUCE_OPS[c.aggregator])
            if item_idx is None or item_idx.shape[0] != len(part) * m:
                item_idx = np.tile(np.arange(m, dtype=np.int64), len(part))
            x = np.concatenate(
                [np.repeat(q, m, axis=0), self.params["item_embeddings"].data[item_idx]], axis=1
            )
            scores[start:start + len(part)] = self._eval_mlp(x).reshape(len(part), m)
        return scores

    def predict_topk(self, member_ids, k):
        """Top-k alternative ids (1-based) by descending score, id ascending on ties."""
        m = self.config.num_items
        if not 1 <= k <= m:
            raise ValueError(f"k must be in [1, {m}], got {k}")
        scores = self._predict_scores_for(self._check_members(member_ids))
        order = np.lexsort((np.arange(m), -scores))
        return [int(j) + 1 for j in order[:k]]

    # -- persistence ------------------------------------------------------

    def save(self, path):
        c = self.config
        meta = {
            "num_users": c.num_users,
            "num_items": c.num_items,
            "user_dim": c.user_dim,
            "item_dim": c.item_dim,
            "hidden_sizes": ",".join(str(h) for h in c.hidden_sizes),
            "aggregator": c.aggregator,
            "keep_prob": repr(c.keep_prob),
            "learning_rate": repr(c.learning_rate),
            "epochs": c.epochs,
            "batch_size": c.batch_size,
            "seed": c.seed,
            "fitted": int(self.fitted),
            "seen_users": ",".join(str(u) for u in sorted(self.seen_users)),
        }
        T.save_tensors(path, {name: t.data for name, t in self.params.items()}, meta)

    @classmethod
    def load(cls, path):
        tensors, meta = T.load_tensors(path)
        config = ModelConfig(
            num_users=int(meta["num_users"]),
            num_items=int(meta["num_items"]),
            user_dim=int(meta["user_dim"]),
            item_dim=int(meta["item_dim"]),
            hidden_sizes=tuple(int(h) for h in meta["hidden_sizes"].split(",")),
            aggregator=meta["aggregator"],
            keep_prob=float(meta["keep_prob"]),
            learning_rate=float(meta["learning_rate"]),
            epochs=int(meta["epochs"]),
            batch_size=int(meta["batch_size"]),
            seed=int(meta["seed"]),
        )
        model = cls(config)
        for name, t in model.params.items():
            if name not in tensors:
                raise ValueError(f"{path}: missing tensor {name!r}")
            if tensors[name].shape != t.data.shape:
                raise ValueError(
                    f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                    f"config implies {t.data.shape}"
                )
            t.data = tensors[name]
        model.fitted = bool(int(meta.get("fitted", "0")))
        seen = meta.get("seen_users", "")
        model.seen_users = frozenset(int(u) for u in seen.split(",") if u)
        return model
