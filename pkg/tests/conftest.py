import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))
torch.set_num_threads(1)

from hlogformer.hierarchical import encode_record  # noqa: E402
from hlogformer.log_tree import parse_record, tree_text  # noqa: E402
from hlogformer.model_core import EncoderConfig, EncoderStack  # noqa: E402
from hlogformer.synthetic import synth_logs  # noqa: E402
from hlogformer.tokenizer import build_vocab  # noqa: E402


@pytest.fixture(scope="session")
def small_trees():
    return [parse_record(line, str(i)) for i, line in enumerate(synth_logs(20, seed=3))]


@pytest.fixture(scope="session")
def small_vocab(small_trees):
    return build_vocab([tree_text(t) for t in small_trees])


@pytest.fixture
def tiny_config(small_vocab):
    return EncoderConfig(len(small_vocab), d_model=16, n_heads=2, d_ff=32, n_blocks=1,
                         max_window=32, summary_slots=3)


@pytest.fixture
def tiny_stack(tiny_config):
    return EncoderStack(tiny_config, torch.float64)


@pytest.fixture
def tiny_records(small_trees, small_vocab, tiny_config):
    return [encode_record(t, small_vocab, tiny_config) for t in small_trees]


# acceptance verdicts, printed as one line each at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: (int(n.split()[0].rstrip("ab")), n)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")
