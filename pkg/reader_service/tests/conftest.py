"""Fixtures: a tiny randomly-initialized QA checkpoint saved to disk, so the
service runs fully offline. Scores are meaningless; the protocol, offsets,
and substring guarantees are what is under test.
"""

import pytest
import torch
from transformers import BertConfig, BertForQuestionAnswering, BertTokenizerFast

from reader_service import ServiceConfig, create_app

VOCAB_CHARS = list("abcdefghijklmnopqrstuvwxyz0123456789.,?!-")


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("tiny-qa-model")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += VOCAB_CHARS + [f"##{c}" for c in VOCAB_CHARS]
    (directory / "vocab.txt").write_text("\n".join(vocab), encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(directory / "vocab.txt"), do_lower_case=True)
    tokenizer.save_pretrained(directory)
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=512,
    )
    BertForQuestionAnswering(config).save_pretrained(directory)
    return directory


@pytest.fixture(scope="session")
def service_config(tiny_model_dir):
    return ServiceConfig(model=str(tiny_model_dir), max_sequence_length=64, batch_size=16)


@pytest.fixture(scope="session")
def client(service_config):
    from fastapi.testclient import TestClient

    app = create_app(service_config)
    with TestClient(app) as test_client:
        yield test_client
