import pytest
import torch

from hlogformer.checkpoint import MAGIC, Checkpoint, CheckpointError, load_checkpoint, save_checkpoint


def _save(tmp_path, stack, vocab, **kw):
    path = tmp_path / "model.hlog"
    center = torch.arange(stack.config.d_model, dtype=stack.dtype)
    save_checkpoint(path, Checkpoint(stack, vocab, center, "forward_only", {"note": 1}, **kw))
    return path


def test_round_trip(tmp_path, tiny_stack, small_vocab):
    path = _save(tmp_path, tiny_stack, small_vocab)
    ck = load_checkpoint(path)
    assert ck.stack.config == tiny_stack.config
    assert ck.mode == "forward_only"
    assert ck.vocab.id_to_token == small_vocab.id_to_token
    assert ck.extras == {"note": 1}
    assert torch.equal(ck.center, torch.arange(16, dtype=torch.float64))
    for (n, p), (m, q) in zip(tiny_stack.named_parameters(), ck.stack.named_parameters()):
        assert n == m and q.dtype == p.dtype and torch.equal(p, q)


def test_float32_round_trip(tmp_path, tiny_config, small_vocab):
    from hlogformer.model_core import EncoderStack
    stack = EncoderStack(tiny_config, torch.float32)
    ck = load_checkpoint(_save(tmp_path, stack, small_vocab))
    assert ck.stack.dtype == torch.float32
    assert torch.equal(ck.stack.token_emb, stack.token_emb)


def test_save_is_byte_stable(tmp_path, tiny_stack, small_vocab):
    a = _save(tmp_path, tiny_stack, small_vocab).read_bytes()
    b = _save(tmp_path, tiny_stack, small_vocab).read_bytes()
    assert a == b
    assert a.startswith(MAGIC)


def test_bad_magic(tmp_path):
    path = tmp_path / "x.hlog"
    path.write_bytes(b"PK\x03\x04 something else")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_corrupt_payload(tmp_path, tiny_stack, small_vocab):
    path = _save(tmp_path, tiny_stack, small_vocab)
    raw = bytearray(path.read_bytes())
    raw[-5] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_corrupt_header(tmp_path, tiny_stack, small_vocab):
    path = _save(tmp_path, tiny_stack, small_vocab)
    raw = path.read_bytes()
    path.write_bytes(raw[:len(MAGIC)] + b"{not json" + raw[raw.index(b"\n", len(MAGIC)):])
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(path)


def test_truncated(tmp_path):
    path = tmp_path / "t.hlog"
    path.write_bytes(MAGIC + b'{"encoder_config"')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
