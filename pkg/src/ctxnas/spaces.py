"""Search spaces as sequential discrete action schemas.

A schema is an ordered list of decision slots, each with a finite option
list. Architectures are action sequences (one index per slot); the engine
sees them as one-hot blocks, with untaken trailing slots encoded as zeros.

Two concrete spaces ship with the engine: a 6-edge cell space (5 operations
per edge, 15,625 architectures, bijective with a base-5 index) and a
residual macro space (base channel, depth, stage count, then per-stage block
counts and per-level channel counts that must each sum to the depth).
Additional constraint-free spaces can be declared in config files.
"""
from dataclasses import dataclass

import numpy as np

CELL_NUM_EDGES = 6
CELL_NUM_OPS = 5
CELL_SPACE_SIZE = CELL_NUM_OPS ** CELL_NUM_EDGES  # 15,625

MACRO_BASE_CHANNELS = (48, 56, 64, 72)
MACRO_DEPTHS = (15, 20, 25, 30)
MACRO_NUM_STAGES = (4, 5)
# block-count slots carry 0 only for stage slots beyond the chosen count
_MACRO_MAX_BLOCK = max(MACRO_DEPTHS) - min(MACRO_NUM_STAGES) + 1  # 27


class InvalidArchitectureError(ValueError):
    """Action sequence violates the schema's constraints."""


@dataclass(frozen=True)
class Slot:
    label: str
    options: tuple

    def __post_init__(self):
        if len(self.options) < 2:
            raise ValueError(f"slot {self.label!r} needs at least 2 options")


@dataclass(frozen=True)
class CellArch:
    edge_ops: tuple

    def __post_init__(self):
        if len(self.edge_ops) != CELL_NUM_EDGES:
            raise InvalidArchitectureError(f"need {CELL_NUM_EDGES} edge ops")
        if any(not 0 <= op < CELL_NUM_OPS for op in self.edge_ops):
            raise InvalidArchitectureError(f"edge op out of range: {self.edge_ops}")


@dataclass(frozen=True)
class MacroArch:
    base_channel: int
    depth: int
    num_stages: int
    blocks_per_stage: tuple
    channel_distribution: tuple

    def __post_init__(self):
        if len(self.blocks_per_stage) != self.num_stages:
            raise InvalidArchitectureError("blocks_per_stage length != num_stages")
        if len(self.channel_distribution) != self.num_stages:
            raise InvalidArchitectureError("channel_distribution length != num_stages")
        for name, seq in (("blocks_per_stage", self.blocks_per_stage),
                          ("channel_distribution", self.channel_distribution)):
            if any(v < 1 for v in seq):
                raise InvalidArchitectureError(f"{name} entries must be positive: {seq}")
            if sum(seq) != self.depth:
                raise InvalidArchitectureError(
                    f"{name} sums to {sum(seq)}, depth is {self.depth}"
                )


@dataclass(frozen=True)
class GenericArch:
    """Decoded architecture for config-declared constraint-free spaces."""
    actions: tuple
    labels: tuple


class ActionSchema:
    """Ordered decision slots plus the validity/encoding rules they imply."""

    kind = "table"

    def __init__(self, slots):
        self.slots = tuple(slots)
        if not self.slots:
            raise ValueError("schema needs at least one slot")
        self.offsets = []
        off = 0
        for slot in self.slots:
            self.offsets.append(off)
            off += len(slot.options)
        self.onehot_width = off
        # constraint-free masks never change, so hand out shared frozen copies
        self._full_masks = []
        for slot in self.slots:
            mask = np.ones(len(slot.options), dtype=bool)
            mask.setflags(write=False)
            self._full_masks.append(mask)

    def __len__(self):
        return len(self.slots)

    def _check_prefix(self, actions):
        actions = tuple(int(a) for a in actions)
        if len(actions) > len(self.slots):
            raise InvalidArchitectureError(
                f"{len(actions)} actions for a {len(self.slots)}-slot schema"
            )
        for l, a in enumerate(actions):
            if not 0 <= a < len(self.slots[l].options):
                raise InvalidArchitectureError(
                    f"action {a} out of range for slot {self.slots[l].label!r}"
                )
            if not self.slot_mask(actions[:l])[a]:
                raise InvalidArchitectureError(
                    f"action {a} at slot {self.slots[l].label!r} unreachable "
                    f"under prefix {actions[:l]}"
                )
        return actions

    def slot_mask(self, prefix):
        """Boolean mask over the next slot's options; constraint-free here."""
        return self._full_masks[len(prefix)]

    def decode(self, actions):
        actions = self._check_prefix(actions)
        if len(actions) != len(self.slots):
            raise InvalidArchitectureError(
                f"need {len(self.slots)} actions, got {len(actions)}"
            )
        return self._decode_full(actions)

    def _decode_full(self, actions):
        return GenericArch(
            actions=actions,
            labels=tuple(s.options[a] for s, a in zip(self.slots, actions)),
        )

    def encode(self, arch):
        """Inverse of decode."""
        if not isinstance(arch, GenericArch):
            raise TypeError(f"expected GenericArch, got {type(arch).__name__}")
        return tuple(arch.actions)

    def fingerprint(self):
        """Stable identity string used to match checkpoints to schemas."""
        parts = [f"{s.label}={','.join(map(str, s.options))}" for s in self.slots]
        return f"{self.kind}|" + "|".join(parts)

    def to_config(self):
        return {
            "kind": "table",
            "slots": [{"label": s.label, "options": list(s.options)} for s in self.slots],
        }


class CellSchema(ActionSchema):
    """6 directed edges, one operation choice each; no cross-edge constraints."""

    kind = "cell"

    def __init__(self, op_names=None):
        if op_names is None:
            op_names = tuple(f"op{i}" for i in range(CELL_NUM_OPS))
        op_names = tuple(op_names)
        if len(op_names) != CELL_NUM_OPS:
            raise ValueError(f"cell space has {CELL_NUM_OPS} operations")
        self.op_names = op_names
        edges = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]
        super().__init__(Slot(f"edge{dst}<-{src}", op_names) for dst, src in edges)

    def _decode_full(self, actions):
        return CellArch(edge_ops=actions)

    def encode(self, arch):
        if not isinstance(arch, CellArch):
            raise TypeError(f"expected CellArch, got {type(arch).__name__}")
        return tuple(arch.edge_ops)

    def to_config(self):
        return {"kind": "cell", "op_names": list(self.op_names)}


class MacroSchema(ActionSchema):
    """Residual-skeleton space.

    Action order: base channel, depth, stage count, then a fixed block of
    per-stage block-count slots and per-level channel-count slots. With 4
    stages the fifth slot of each block is forced to 0 and dropped by decode;
    live slots must be positive and sum to the depth.
    """

    kind = "macro"

    def __init__(self, base_channels=MACRO_BASE_CHANNELS, depths=MACRO_DEPTHS,
                 num_stages=MACRO_NUM_STAGES):
        self.base_channels = tuple(base_channels)
        self.depths = tuple(depths)
        self.stage_choices = tuple(num_stages)
        self.max_stages = max(self.stage_choices)
        max_block = max(self.depths) - min(self.stage_choices) + 1
        counts = tuple(range(max_block + 1))
        slots = [
            Slot("base_channel", self.base_channels),
            Slot("depth", self.depths),
            Slot("num_stages", self.stage_choices),
        ]
        slots += [Slot(f"stage{i}_blocks", counts) for i in range(self.max_stages)]
        slots += [Slot(f"level{i}_channels", counts) for i in range(self.max_stages)]
        super().__init__(slots)

    def _group(self, index):
        """(group, position): group 0 = header, 1 = stage counts, 2 = channel counts."""
        if index < 3:
            return 0, index
        if index < 3 + self.max_stages:
            return 1, index - 3
        return 2, index - 3 - self.max_stages

    def slot_mask(self, prefix):
        prefix = tuple(int(a) for a in prefix)
        index = len(prefix)
        if index >= len(self.slots):
            raise InvalidArchitectureError("sequence already complete")
        options = self.slots[index].options
        group, pos = self._group(index)
        if group == 0:
            return np.ones(len(options), dtype=bool)
        depth = self.depths[prefix[1]]
        stages = self.stage_choices[prefix[2]]
        start = 3 if group == 1 else 3 + self.max_stages
        taken = sum(options[a] for a in prefix[start:index])
        mask = np.zeros(len(options), dtype=bool)
        if pos >= stages:
            mask[0] = True  # unused slot under a 4-stage choice
            return mask
        budget = depth - taken
        later = stages - pos - 1  # live slots still to fill, one unit minimum each
        lo, hi = 1, budget - later
        if pos == stages - 1:
            lo = hi = budget
        for a, v in enumerate(options):
            if lo <= v <= hi:
                mask[a] = True
        if not mask.any():
            raise InvalidArchitectureError(
                f"prefix {prefix} leaves no feasible {self.slots[index].label}"
            )
        return mask

    def _decode_full(self, actions):
        depth = self.depths[actions[1]]
        stages = self.stage_choices[actions[2]]
        counts = self.slots[3].options
        blocks = tuple(counts[a] for a in actions[3:3 + stages])
        channels = tuple(
            counts[a] for a in actions[3 + self.max_stages:3 + self.max_stages + stages]
        )
        return MacroArch(
            base_channel=self.base_channels[actions[0]],
            depth=depth,
            num_stages=stages,
            blocks_per_stage=blocks,
            channel_distribution=channels,
        )

    def encode(self, arch):
        if not isinstance(arch, MacroArch):
            raise TypeError(f"expected MacroArch, got {type(arch).__name__}")
        actions = [
            self.base_channels.index(arch.base_channel),
            self.depths.index(arch.depth),
            self.stage_choices.index(arch.num_stages),
        ]
        counts = self.slots[3].options
        for group in (arch.blocks_per_stage, arch.channel_distribution):
            padded = tuple(group) + (0,) * (self.max_stages - len(group))
            actions.extend(counts.index(v) for v in padded)
        return tuple(actions)

    def to_config(self):
        return {
            "kind": "macro",
            "base_channels": list(self.base_channels),
            "depths": list(self.depths),
            "num_stages": list(self.stage_choices),
        }


def schema_from_config(cfg):
    """Build a schema from its structured-config form (see to_config)."""
    kind = cfg.get("kind", "table")
    if kind == "cell":
        return CellSchema(op_names=cfg.get("op_names"))
    if kind == "macro":
        return MacroSchema(
            base_channels=cfg.get("base_channels", MACRO_BASE_CHANNELS),
            depths=cfg.get("depths", MACRO_DEPTHS),
            num_stages=cfg.get("num_stages", MACRO_NUM_STAGES),
        )
    if kind == "table":
        return ActionSchema(
            Slot(s["label"], tuple(s["options"])) for s in cfg["slots"]
        )
    raise ValueError(f"unknown schema kind {kind!r}")


def actions_to_arch(schema, actions):
    """Decode and validate a complete action sequence."""
    return schema.decode(actions)


def arch_to_actions(schema, arch):
    return schema.encode(arch)


def cell_index(arch):
    """Positional base-5 index: sum of op_i * 5^i over the 6 edges."""
    if isinstance(arch, CellArch):
        ops = arch.edge_ops
    else:
        ops = tuple(int(a) for a in arch)
        CellArch(edge_ops=ops)  # validation only
    return sum(op * CELL_NUM_OPS ** i for i, op in enumerate(ops))


def cell_from_index(index):
    """Inverse of cell_index."""
    if not 0 <= index < CELL_SPACE_SIZE:
        raise InvalidArchitectureError(f"cell index {index} out of range")
    ops = []
    for _ in range(CELL_NUM_EDGES):
        ops.append(index % CELL_NUM_OPS)
        index //= CELL_NUM_OPS
    return CellArch(edge_ops=tuple(ops))


def valid_action_mask(schema, partial_actions):
    """Mask over the next slot: an option is allowed iff some completion of
    the prefix decodes to a valid architecture. Raises on unreachable prefixes."""
    prefix = schema._check_prefix(partial_actions)
    if len(prefix) == len(schema.slots):
        raise InvalidArchitectureError("sequence already complete")
    return schema.slot_mask(prefix)


def arch_onehot(schema, actions):
    """Fixed-width one-hot encoding; untaken trailing slots stay all-zero."""
    actions = tuple(int(a) for a in actions)
    if len(actions) > len(schema.slots):
        raise InvalidArchitectureError("more actions than slots")
    out = np.zeros(schema.onehot_width)
    for l, a in enumerate(actions):
        if not 0 <= a < len(schema.slots[l].options):
            raise InvalidArchitectureError(
                f"action {a} out of range for slot {schema.slots[l].label!r}"
            )
        out[schema.offsets[l] + a] = 1.0
    return out


def random_actions(schema, rng):
    """Sample a complete valid sequence, uniform over allowed options per slot."""
    actions = []
    for _ in range(len(schema)):
        allowed = np.flatnonzero(schema.slot_mask(tuple(actions)))
        actions.append(int(allowed[rng.integers(allowed.size)]))
    return tuple(actions)


def arch_key(schema, actions):
    """Stable string id for trace files: base-5 index for the cell space,
    dash-joined actions otherwise."""
    if isinstance(schema, CellSchema):
        return str(cell_index(tuple(actions)))
    return "-".join(str(int(a)) for a in actions)
