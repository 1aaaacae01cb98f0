import pytest
import torch

from archive_fixtures import build_archive


@pytest.fixture(scope="session")
def archive_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("archive") / "fixture_archive.pth"
    torch.save(build_archive(), path)
    return path


@pytest.fixture(scope="session")
def converted(tmp_path_factory, archive_path):
    from bench_ingest.archive import convert

    path = tmp_path_factory.mktemp("container") / "fixture.bench"
    header = convert(archive_path, path)
    return path, header
