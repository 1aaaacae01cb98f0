"""Extraction from the official tabular cell-benchmark archive.

Targets the `v1_1-096897` release of the benchmark dump: a torch pickle whose
`arch2infos[index]` entries hold two result groups keyed "less" (the 12-epoch
training schedule) and "full" (the 200-epoch schedule), each with
`all_results[(dataset, seed)]` dicts whose `eval_acc1es` maps
"{set}@{epoch}" (0-based epochs) to top-1 accuracy. Validation curves live
under the "x-valid" set and test accuracy under "ori-test". Earlier releases
key the curves differently and are rejected rather than guessed at.
"""

import hashlib

import numpy as np

from . import container

DATASETS = ("cifar10-valid", "cifar100", "ImageNet16-120")
OP_NAMES = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3")
NUM_EDGES = 6
NUM_OPS = 5
ARCH_COUNT = NUM_OPS ** NUM_EDGES
CURVE_EPOCHS = 12
VALID_SET = "x-valid"
TEST_SET = "ori-test"
SHORT_HP = "less"
LONG_HP = "full"
MAX_LISTED_GAPS = 20


class ConversionError(ValueError):
    """Archive is not a complete dump of the expected release; gaps lists every hole."""

    def __init__(self, message, gaps=None):
        super().__init__(message)
        self.gaps = list(gaps or [])


def parse_arch_index(arch_str):
    """Base-5 cell index of a benchmark arch string.

    Strings look like "|op~0|+|op~0|op~1|+|op~0|op~1|op~2|"; edges appear in
    the same order the engine's cell schema enumerates them, so digit k of
    the index is the operation chosen on edge k.
    """
    tokens = [t for t in arch_str.replace("+", "|").split("|") if t]
    if len(tokens) != NUM_EDGES:
        raise ConversionError(f"arch string {arch_str!r} has {len(tokens)} edges, want {NUM_EDGES}")
    index = 0
    for k, token in enumerate(tokens):
        name = token.rsplit("~", 1)[0]
        if name not in OP_NAMES:
            raise ConversionError(f"unknown operation {name!r} in arch string {arch_str!r}")
        index += OP_NAMES.index(name) * NUM_OPS ** k
    return index


def load_archive(path):
    # The dump predates tensor-only serialization and is nested python dicts,
    # so the full unpickler is required; map to CPU to keep the tool GPU-free.
    import torch

    return torch.load(path, map_location="cpu", weights_only=False)


def _seed_results(group, dataset):
    """Per-seed result dicts for one dataset, in ascending seed order."""
    found = []
    for key, res in group.get("all_results", {}).items():
        if isinstance(key, tuple) and len(key) == 2 and key[0] == dataset:
            found.append((key[1], res))
    found.sort(key=lambda item: item[0])
    return [res for _, res in found]


def _mean_acc(results, set_name, epoch, gaps, where):
    """Seed-averaged accuracy for one curve point; logs a gap when keys are absent."""
    key = f"{set_name}@{epoch}"
    values = []
    for res in results:
        acc = res.get("eval_acc1es", {})
        if key not in acc:
            gaps.append(f"{where}: missing {key}")
            return np.nan
        values.append(float(acc[key]))
    return float(np.mean(values))


def extract_payload(archive):
    """Dense (dataset, arch, epochs + 2) accuracy tensor from a loaded archive.

    Columns 0..11 hold the short schedule's validation curve, column 12 the
    long schedule's final validation accuracy and column 13 its test
    accuracy. Seed repeats are averaged in float64; the float32 cast happens
    once at write time. Every missing dataset, architecture, schedule or
    epoch key is collected and reported in a single failure.
    """
    infos = archive.get("arch2infos")
    if not isinstance(infos, dict) or not infos:
        raise ConversionError("archive has no arch2infos table; expected the v1_1-096897 release")
    payload = np.full((len(DATASETS), ARCH_COUNT, CURVE_EPOCHS + 2), np.nan)
    seen = np.zeros(ARCH_COUNT, dtype=bool)
    gaps = []
    for entry_key in sorted(infos):
        entry = infos[entry_key]
        groups = {hp: entry.get(hp) for hp in (SHORT_HP, LONG_HP)}
        if not all(isinstance(g, dict) for g in groups.values()):
            gaps.append(f"entry {entry_key}: missing '{SHORT_HP}'/'{LONG_HP}' result groups")
            continue
        arch_str = groups[SHORT_HP].get("arch_str") or groups[LONG_HP].get("arch_str")
        if not arch_str:
            gaps.append(f"entry {entry_key}: no arch string")
            continue
        index = parse_arch_index(arch_str)
        if seen[index]:
            raise ConversionError(f"duplicate architecture {arch_str!r} (cell index {index})")
        seen[index] = True
        for d, dataset in enumerate(DATASETS):
            where = f"{dataset}: arch {index}"
            short = _seed_results(groups[SHORT_HP], dataset)
            long = _seed_results(groups[LONG_HP], dataset)
            if not short or not long:
                gaps.append(f"{where}: no results")
                continue
            for e in range(CURVE_EPOCHS):
                payload[d, index, e] = _mean_acc(short, VALID_SET, e, gaps, where)
            last = int(long[0].get("epochs", 0)) - 1
            payload[d, index, CURVE_EPOCHS] = _mean_acc(long, VALID_SET, last, gaps, where)
            payload[d, index, CURVE_EPOCHS + 1] = _mean_acc(long, TEST_SET, last, gaps, where)
    for index in np.flatnonzero(~seen):
        gaps.append(f"arch {index}: absent from the archive")
    finite = np.isfinite(payload)
    bad = finite & ((payload < 0.0) | (payload > 100.0))
    for d, index, col in zip(*np.nonzero(bad)):
        gaps.append(f"{DATASETS[d]}: arch {index}: column {col} outside [0, 100]")
    if gaps:
        shown = gaps[:MAX_LISTED_GAPS]
        more = len(gaps) - len(shown)
        listing = "\n  ".join(shown + ([f"... {more} more"] if more else []))
        raise ConversionError(f"archive incomplete: {len(gaps)} gaps\n  {listing}", gaps=gaps)
    return payload


def _file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def convert(archive_path, out_path):
    """Convert an archive dump into a portable container; returns the header.

    Output is a pure function of the archive bytes: fill order is fixed, seed
    means use ascending seed order, and the source field is the archive's own
    content hash, so converting the same dump twice gives identical files.
    """
    archive = load_archive(archive_path)
    meta = archive.get("meta_archs")
    if meta is not None and len(meta) != ARCH_COUNT:
        raise ConversionError(f"meta_archs lists {len(meta)} architectures, want {ARCH_COUNT}")
    payload = extract_payload(archive)
    source = "sha256:" + _file_digest(archive_path)
    return container.write(out_path, DATASETS, OP_NAMES, payload, source=source)
