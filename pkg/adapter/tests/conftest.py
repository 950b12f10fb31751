import pytest


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly-initialized encoder saved locally.

    Stands in for a downloaded pretrained checkpoint: the loading, pooling,
    batching, and protocol paths are identical, only the weights are
    untrained.
    """
    import torch
    from transformers import BertConfig, BertForSequenceClassification, BertTokenizer

    path = tmp_path_factory.mktemp("tinybert")
    vocab = (["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
             + [f"term{i}" for i in range(40)]
             + list("abcdefghijklmnopqrstuvwxyz0123456789"))
    (path / "vocab.txt").write_text("\n".join(vocab) + "\n")
    torch.manual_seed(0)
    config = BertConfig(vocab_size=len(vocab), hidden_size=32, num_hidden_layers=2,
                        num_attention_heads=2, intermediate_size=64,
                        max_position_embeddings=64, num_labels=2)
    tokenizer = BertTokenizer(str(path / "vocab.txt"))
    tokenizer.save_pretrained(path)
    BertForSequenceClassification(config).save_pretrained(path)
    return str(path)
