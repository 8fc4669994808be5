from __future__ import annotations

from pathlib import Path

import pytest

from shotsweep import BINARY_FRNFR, Corpus, LabelDef, LabelScheme, RequirementRecord, load_corpus

REPO_ROOT = Path(__file__).resolve().parents[1]
PROMISE_CSV = REPO_ROOT / "data" / "promise_nfr.csv"


def make_records(texts_labels, dataset="test"):
    return [
        RequirementRecord(i, text, label, dataset)
        for i, (text, label) in enumerate(texts_labels)
    ]


@pytest.fixture(scope="session")
def promise_path() -> Path:
    return PROMISE_CSV


@pytest.fixture(scope="session")
def promise_binary() -> Corpus:
    return load_corpus(PROMISE_CSV, BINARY_FRNFR)


@pytest.fixture()
def tiny_scheme() -> LabelScheme:
    return LabelScheme(
        name="tiny",
        task_kind="binary",
        labels=(
            LabelDef("X", "Xray", ("ex",)),
            LabelDef("Y", "Yankee", ("why",)),
        ),
    )
