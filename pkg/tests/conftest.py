"""Shared fixtures: the committed synthetic dataset and hypothesis profile."""

import json
import sys
from pathlib import Path

import pytest
from hypothesis import settings

TESTS = Path(__file__).resolve().parent
if str(TESTS) not in sys.path:
    sys.path.insert(0, str(TESTS))

from maskcert import load_annotations, load_fixture, load_manifest

DATA = TESTS / "data"

settings.register_profile("package", deadline=None)
settings.load_profile("package")


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def dataset_images():
    return load_annotations(str(DATA / "annotations.json"))


@pytest.fixture(scope="session")
def dataset_masks():
    return load_manifest(str(DATA / "manifest.json"))


@pytest.fixture(scope="session")
def dataset_store(dataset_images, dataset_masks):
    mask_set, _ = dataset_masks
    return load_fixture(str(DATA / "fixture.json"), dataset_images, mask_set)


@pytest.fixture(scope="session")
def golden_certify():
    with open(DATA / "golden_certify.json", "r", encoding="utf-8") as fh:
        return json.load(fh)
