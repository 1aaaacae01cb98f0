"""Fidelity checks against the real benchmark dump, when the user supplies it.

Point BENCH_INGEST_ARCHIVE at the v1_1-096897 release file to enable these.
"""

import os

import numpy as np
import pytest

from bench_ingest.cli import main
from bench_ingest.verify import verify

ARCHIVE_ENV = "BENCH_INGEST_ARCHIVE"

pytestmark = pytest.mark.skipif(
    ARCHIVE_ENV not in os.environ,
    reason=f"set {ARCHIVE_ENV} to the benchmark archive to run the fidelity checks",
)


def test_converted_release_matches_published_figures(tmp_path):
    out = tmp_path / "release.bench"
    assert main([os.environ[ARCHIVE_ENV], str(out)]) == 0
    report = verify(out)
    assert np.float32(report["max_final_val"]["ImageNet16-120"]) == np.float32(47.19)
    rho = report["spearman"]["cifar10-valid~cifar100"]
    assert abs(rho - 0.968) <= 0.01
