import pytest

TOPICS = ("Healthcare", "Technology", "Religion", "Music")


def make_personas(n, prefix="p"):
    return [
        {"id": f"{prefix}{i:03d}", "identity_text": f"Persona {i}, a {TOPICS[i % 4]} enthusiast.",
         "topic": TOPICS[i % 4]}
        for i in range(n)
    ]


@pytest.fixture
def personas_small():
    return make_personas(6)
