import numpy as np
import pytest

from ooc.store import EmbeddingMatrix, SampleRecord


@pytest.fixture
def small_matrix():
    values = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=np.float32)
    return EmbeddingMatrix(("a", "b"), values)


def make_records(n, topic="climate", split="train", prefix="s"):
    return [
        SampleRecord(
            id=f"{prefix}{i:04d}", topic=topic, text=f"text {prefix}{i}",
            image_id=f"img_{prefix}{i:04d}", split=split,
        )
        for i in range(n)
    ]


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
