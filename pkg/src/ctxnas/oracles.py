"""Reward sources for the search engine.

Two oracle kinds serve architecture rewards at desk scale:

* TabularBenchmark: O(1) lookups into a portable container of precomputed
  per-epoch validation accuracies plus final validation/test accuracies for
  every cell architecture on each dataset.
* SyntheticFamily: deterministic landscapes over any action schema. Tasks in
  a family share a base weight vector over the one-hot features and differ by
  a seeded perturbation, so rewards correlate across tasks; a deterministic
  latency model supports multi-objective rewards.

Performance values handed to the agent are always normalized to [0, 1]
(tabular accuracies are divided by 100 at this boundary).

Portable container layout (little-endian):
    magic    8 bytes  b"PTBENCH1"
    hlen     uint32   byte length of the JSON header
    header   JSON     datasets, op_names, arch_count, epoch_count,
                      payload_shape, dtype "<f4", sha256 of the payload,
                      free-form source string
    payload  float32  shape (n_datasets, arch_count, epoch_count + 2):
                      validation accuracy after epochs 1..epoch_count, then
                      final validation accuracy, then final test accuracy,
                      all in percent. Architectures are ordered by the
                      base-5 cell index.
"""
import hashlib
import json
import os
import re
import struct

import numpy as np

from .spaces import CellSchema, cell_index, schema_from_config

PORTABLE_MAGIC = b"PTBENCH1"
PORTABLE_VERSION = 1
CELL_COUNT = 15625


class OracleLookupError(LookupError):
    """Unknown architecture, task, or fidelity."""


class RewardSpec:
    """What to ask the oracle for.

    fidelity: training epoch the validation accuracy is read at (1-based);
    None means the fully-trained score. t_target/w switch on the
    latency-weighted reward performance * (latency / t_target) ** w.
    """

    def __init__(self, fidelity=None, t_target=None, w=-0.05):
        if fidelity is not None and int(fidelity) < 1:
            raise ValueError(f"fidelity must be >= 1 or None, got {fidelity}")
        if w > 0:
            raise ValueError(f"latency exponent must be <= 0, got {w}")
        if t_target is not None and t_target <= 0:
            raise ValueError(f"t_target must be positive, got {t_target}")
        self.fidelity = None if fidelity is None else int(fidelity)
        self.t_target = None if t_target is None else float(t_target)
        self.w = float(w)

    def wants_latency(self):
        return self.t_target is not None

    def to_config(self):
        return {"fidelity": self.fidelity, "t_target": self.t_target, "w": self.w}


class RewardValue:
    def __init__(self, performance, latency=None):
        self.performance = float(performance)
        self.latency = None if latency is None else float(latency)


def multiobjective_reward(performance, latency, spec):
    """performance * (latency / t_target) ** w; equals performance at target."""
    if performance < 0:
        raise ValueError("performance must be >= 0")
    if latency is None:
        raise OracleLookupError("latency-weighted reward requested, oracle has no latency")
    if latency <= 0:
        raise ValueError("latency must be positive")
    return performance * (latency / spec.t_target) ** spec.w


def resolve_reward(value, spec):
    """Collapse a RewardValue to the scalar the agent trains on."""
    if spec.wants_latency():
        return multiobjective_reward(value.performance, value.latency, spec)
    return value.performance


def query_reward(oracle, actions, task_id, spec):
    """Uniform entry point used by the search loop and baselines."""
    return oracle.query(actions, task_id, spec)


def sample_meta_task(oracle, rng):
    """Draw a task id from the oracle's meta-training pool."""
    return oracle.sample_task(rng)


# ---------------------------------------------------------------------------
# portable benchmark container

def write_portable(path, datasets, op_names, payload, source=""):
    """Write a container; payload is (n_datasets, arch_count, epochs + 2) in percent."""
    payload = np.ascontiguousarray(payload, dtype="<f4")
    if payload.ndim != 3 or payload.shape[0] != len(datasets):
        raise ValueError(f"payload shape {payload.shape} does not match datasets")
    raw = payload.tobytes()
    header = {
        "version": PORTABLE_VERSION,
        "datasets": list(datasets),
        "op_names": list(op_names),
        "arch_count": int(payload.shape[1]),
        "epoch_count": int(payload.shape[2]) - 2,
        "payload_shape": list(payload.shape),
        "dtype": "<f4",
        "sha256": hashlib.sha256(raw).hexdigest(),
        "source": source,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(PORTABLE_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(raw)
    return header


def read_portable(path):
    """Read and validate a container; returns (header, payload float32)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(PORTABLE_MAGIC))
        if magic != PORTABLE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        raw = fh.read()
    if header.get("version") != PORTABLE_VERSION:
        raise ValueError(f"{path}: unsupported version {header.get('version')}")
    if hashlib.sha256(raw).hexdigest() != header["sha256"]:
        raise ValueError(f"{path}: payload checksum mismatch")
    shape = tuple(header["payload_shape"])
    payload = np.frombuffer(raw, dtype="<f4")
    if payload.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload size does not match shape {shape}")
    return header, payload.reshape(shape)


class TabularBenchmark:
    """Per-epoch and final accuracies for every cell architecture.

    Read-only after load; queries are plain array lookups.
    """

    def __init__(self, header, payload, meta_datasets=None):
        self.datasets = list(header["datasets"])
        self.epoch_count = int(header["epoch_count"])
        self.header = header
        if payload.shape != (len(self.datasets), CELL_COUNT, self.epoch_count + 2):
            raise ValueError(
                f"payload shape {payload.shape} is not "
                f"({len(self.datasets)}, {CELL_COUNT}, epochs+2)"
            )
        if self.epoch_count < 12:
            raise ValueError(f"epoch curve too short: {self.epoch_count} < 12")
        if not np.all((payload >= 0.0) & (payload <= 100.0)):
            raise ValueError("accuracies outside [0, 100]")
        self.payload = payload
        self.schema = CellSchema(op_names=header["op_names"])
        self._index = {name: i for i, name in enumerate(self.datasets)}
        self.meta_datasets = list(meta_datasets) if meta_datasets else list(self.datasets)
        for name in self.meta_datasets:
            if name not in self._index:
                raise OracleLookupError(f"meta dataset {name!r} not in benchmark")

    @classmethod
    def load(cls, path, meta_datasets=None):
        header, payload = read_portable(path)
        return cls(header, payload, meta_datasets=meta_datasets)

    def _dataset(self, task_id):
        try:
            return self._index[task_id]
        except KeyError:
            raise OracleLookupError(
                f"unknown dataset {task_id!r}; have {self.datasets}"
            ) from None

    def task_ids(self):
        return list(self.datasets)

    def sample_task(self, rng):
        return self.meta_datasets[int(rng.integers(len(self.meta_datasets)))]

    def val_accuracy(self, task_id, index, epoch=None):
        """Stored validation accuracy in percent; epoch None = fully trained."""
        d = self._dataset(task_id)
        if not 0 <= index < CELL_COUNT:
            raise OracleLookupError(f"architecture index {index} out of range")
        if epoch is None:
            return float(self.payload[d, index, self.epoch_count])
        if not 1 <= epoch <= self.epoch_count:
            raise OracleLookupError(
                f"epoch {epoch} beyond stored curve of length {self.epoch_count}"
            )
        return float(self.payload[d, index, epoch - 1])

    def test_accuracy(self, task_id, index):
        d = self._dataset(task_id)
        return float(self.payload[d, index, self.epoch_count + 1])

    def final_val_matrix(self, task_id):
        return np.asarray(self.payload[self._dataset(task_id), :, self.epoch_count])

    def max_final_val(self, task_id):
        return float(self.final_val_matrix(task_id).max())

    def query(self, actions, task_id, spec):
        index = cell_index(actions)
        acc = self.val_accuracy(task_id, index, epoch=spec.fidelity)
        return RewardValue(acc / 100.0, latency=None)

    def global_best(self, task_id, spec):
        """Best achievable normalized performance under this spec."""
        d = self._dataset(task_id)
        col = self.epoch_count if spec.fidelity is None else spec.fidelity - 1
        if spec.fidelity is not None and not 1 <= spec.fidelity <= self.epoch_count:
            raise OracleLookupError(f"epoch {spec.fidelity} beyond stored curve")
        return float(self.payload[d, :, col].max()) / 100.0


# ---------------------------------------------------------------------------
# synthetic landscapes

_TASK_ID = re.compile(r"^syn(\d+):(\d+):d(\d+)$")


class SyntheticFamily:
    """Seeded family of reward landscapes over one schema.

    A task scores an architecture by summing per-option weights over its
    one-hot features, min-max scaled by the per-slot extremes so rewards lie
    in [0, 1] (the bound is attained on constraint-free schemas). Task
    weights = family base + deviation * difficulty/20 * seeded noise, so
    tasks stay rank-correlated within a family. The requested fidelity is
    validated but does not change the score: a synthetic task models the
    converged performance directly.

    Latency is a noise-free per-option cost sum plus a constant, shared by
    all tasks in the family.
    """

    def __init__(self, schema, family_seed, deviation=0.15,
                 difficulties=(10, 20, 30), latency_base=5.0, latency_scale=2.0):
        self.schema = schema
        self.family_seed = int(family_seed)
        self.deviation = float(deviation)
        self.difficulties = tuple(int(d) for d in difficulties)
        self.latency_base = float(latency_base)
        base_rng = np.random.default_rng(np.random.SeedSequence([self.family_seed, 0]))
        self.base_weights = base_rng.normal(size=schema.onehot_width)
        lat_rng = np.random.default_rng(np.random.SeedSequence([self.family_seed, 1]))
        self.latency_costs = lat_rng.uniform(0.0, latency_scale, schema.onehot_width)
        self._tasks = {}

    def task_id(self, task_seed, difficulty=None):
        if difficulty is None:
            difficulty = self.difficulties[len(self.difficulties) // 2]
        if difficulty not in self.difficulties:
            raise OracleLookupError(f"difficulty {difficulty} not in {self.difficulties}")
        return f"syn{self.family_seed}:{int(task_seed)}:d{int(difficulty)}"

    def sample_task(self, rng):
        task_seed = int(rng.integers(2 ** 31 - 1))
        difficulty = int(self.difficulties[int(rng.integers(len(self.difficulties)))])
        return self.task_id(task_seed, difficulty)

    def _weights(self, task_id):
        if task_id in self._tasks:
            return self._tasks[task_id]
        m = _TASK_ID.match(task_id)
        if not m or int(m.group(1)) != self.family_seed:
            raise OracleLookupError(f"task {task_id!r} does not belong to this family")
        task_seed, difficulty = int(m.group(2)), int(m.group(3))
        if difficulty not in self.difficulties:
            raise OracleLookupError(f"task {task_id!r} has unknown difficulty")
        rng = np.random.default_rng(
            np.random.SeedSequence([self.family_seed, 2, task_seed, difficulty])
        )
        scale = self.deviation * difficulty / 20.0
        w = self.base_weights + scale * rng.normal(size=self.schema.onehot_width)
        lo = hi = 0.0
        for slot, off in zip(self.schema.slots, self.schema.offsets):
            block = w[off:off + len(slot.options)]
            lo += block.min()
            hi += block.max()
        self._tasks[task_id] = (w, lo, hi)
        return self._tasks[task_id]

    def reward(self, actions, task_id):
        w, lo, hi = self._weights(task_id)
        # slot-order accumulation matches lo/hi exactly, so the per-slot
        # argmax really scores 1.0 and the argmin 0.0
        u = 0.0
        for a, off in zip(actions, self.schema.offsets):
            u += w[off + int(a)]
        if hi <= lo:
            return 0.5
        return (u - lo) / (hi - lo)

    def latency(self, actions):
        t = self.latency_base
        for a, off in zip(actions, self.schema.offsets):
            t += self.latency_costs[off + int(a)]
        return t

    def query(self, actions, task_id, spec):
        if spec.fidelity is not None and spec.fidelity < 1:
            raise OracleLookupError(f"bad fidelity {spec.fidelity}")
        self.schema.decode(actions)  # reject invalid architectures
        return RewardValue(self.reward(actions, task_id), latency=self.latency(actions))

    def optimum(self, task_id):
        """Argmax architecture and its reward (1.0); constraint-free schemas only."""
        w, _, _ = self._weights(task_id)
        actions = []
        for l, (slot, off) in enumerate(zip(self.schema.slots, self.schema.offsets)):
            mask = self.schema.slot_mask(tuple(actions))
            if not mask.all():
                raise ValueError("optimum is only exact on constraint-free schemas")
            actions.append(int(np.argmax(w[off:off + len(slot.options)])))
        actions = tuple(actions)
        return actions, self.reward(actions, task_id)

    def global_best(self, task_id, spec):
        _, reward = self.optimum(task_id)
        return reward


def oracle_from_config(cfg, data_dir=None):
    """Build an oracle from a plain config dict.

    kind "tabular" wants {path, meta_datasets?}; a relative path is resolved
    against data_dir. kind "synthetic" wants {schema, family_seed, ...}.
    """
    kind = cfg.get("kind")
    if kind == "tabular":
        path = cfg["path"]
        if data_dir is not None and not os.path.isabs(path):
            path = os.path.join(data_dir, path)
        return TabularBenchmark.load(path, meta_datasets=cfg.get("meta_datasets"))
    if kind == "synthetic":
        schema = schema_from_config(cfg["schema"])
        return SyntheticFamily(
            schema,
            family_seed=cfg["family_seed"],
            deviation=cfg.get("deviation", 0.15),
            difficulties=tuple(cfg.get("difficulties", (10, 20, 30))),
            latency_base=cfg.get("latency_base", 5.0),
            latency_scale=cfg.get("latency_scale", 2.0),
        )
    raise ValueError(f"unknown oracle kind {kind!r}")
