"""Read-back checks plus a cross-dataset rank-agreement report."""

import numpy as np
from scipy import stats

from . import container
from .archive import ARCH_COUNT, CURVE_EPOCHS


def verify(path):
    """Validate a container and summarize it; raises ValueError on any defect.

    Checks the checksum (via the read path), the architecture count, the
    payload shape against the header, accuracy ranges and finiteness. The
    report carries per-dataset final-accuracy maxima and Spearman rank
    correlations of final validation accuracy between every dataset pair.
    """
    header, payload = container.read(path)
    problems = []
    datasets = header.get("datasets", [])
    epochs = int(header.get("epoch_count", 0))
    if header.get("arch_count") != ARCH_COUNT:
        problems.append(f"arch count {header.get('arch_count')} != {ARCH_COUNT}")
    if payload.shape != (len(datasets), ARCH_COUNT, epochs + 2):
        problems.append(f"payload shape {payload.shape} disagrees with header")
    if epochs < CURVE_EPOCHS:
        problems.append(f"epoch curve too short: {epochs} < {CURVE_EPOCHS}")
    if not np.all(np.isfinite(payload)):
        problems.append("payload has non-finite values")
    elif not np.all((payload >= 0.0) & (payload <= 100.0)):
        problems.append("accuracies outside [0, 100]")
    if problems:
        raise ValueError(f"{path}: " + "; ".join(problems))
    finals = payload[:, :, epochs].astype(np.float64)
    spearman = {}
    for i in range(len(datasets)):
        for j in range(i + 1, len(datasets)):
            rho = stats.spearmanr(finals[i], finals[j]).statistic
            spearman[f"{datasets[i]}~{datasets[j]}"] = float(rho)
    return {
        "path": str(path),
        "datasets": list(datasets),
        "arch_count": int(header["arch_count"]),
        "epoch_count": epochs,
        "sha256": header["sha256"],
        "source": header.get("source", ""),
        "max_final_val": {name: float(finals[i].max()) for i, name in enumerate(datasets)},
        "spearman": spearman,
    }
