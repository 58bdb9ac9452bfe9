import os

# the suite must never touch the network: checkpoints are built locally
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")

import pytest
import torch
from transformers import DistilBertConfig, DistilBertModel, DistilBertTokenizer

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
WORDS = ["the", "game", "play", "##ing", "again",
         "night", "music", "loud", "quiet", "word"]

SENTENCES = [
    "play ##ing the game",
    "the game again",
    "play ##ing again",
    "night music loud",
    "quiet night music",
    "the music play ##ing loud",
    "game night",
    "loud loud quiet",
    "the game play ##ing the game",
    "word",
]

DIM = 24


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A tiny randomly initialised encoder saved like any published one."""
    path = tmp_path_factory.mktemp("ckpt")
    vocab_file = path / "wordpieces.txt"
    vocab_file.write_text("\n".join(SPECIALS + WORDS) + "\n")
    torch.manual_seed(7)
    config = DistilBertConfig(
        vocab_size=len(SPECIALS) + len(WORDS),
        dim=DIM,
        n_layers=2,
        n_heads=2,
        hidden_dim=48,
        max_position_embeddings=16,
    )
    DistilBertModel(config).save_pretrained(path)
    DistilBertTokenizer(vocab_file=str(vocab_file)).save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def vocab_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "vocab.txt"
    path.write_text("\n".join(SPECIALS + WORDS) + "\n")
    return path


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.txt"
    path.write_text("\n".join(SENTENCES) + "\n")
    return path
