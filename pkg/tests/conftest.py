import numpy as np
import pytest

from offnet.core import RngStream
from offnet.synthetic import bundled_path

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def vhat_monotone(monkeypatch):
    """Every AMSGrad step taken anywhere in the suite must leave v_hat non-decreasing."""
    from offnet import optim

    original = optim.Amsgrad.step

    def checked(self, params, grads):
        before = {k: v.copy() for k, v in self.v_hat.items()}
        original(self, params, grads)
        for k, old in before.items():
            assert np.all(self.v_hat[k] >= old), f"v_hat decreased for {k}"

    monkeypatch.setattr(optim.Amsgrad, "step", checked)


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture(scope="session")
def bundled():
    return {
        "corpus": bundled_path("synthetic32.tsv"),
        "embeddings": bundled_path("synthetic_embeddings.txt"),
        "contextual": bundled_path("synthetic32_contextual.npz"),
    }


def assert_close(a, b, tol):
    np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0, atol=tol)


def run_cli_pipeline(workdir, bundled, seed=0):
    """preprocess -> train (keis_bigru) -> predict -> evaluate on the bundled corpus."""
    from offnet.cli import run

    w = str(workdir)
    clean = f"{w}/clean.tsv"
    assert run(["preprocess", "--input", bundled["corpus"], "--output", clean]) == 0
    assert run(["train", "--arch", "keis_bigru", "--train", clean, "--val", clean,
                "--embeddings", bundled["embeddings"], "--checkpoint", f"{w}/model.ckpt",
                "--history", f"{w}/history.csv", "--max-len", "12", "--epochs", "30",
                "--batch-size", "8", "--seed", str(seed)]) == 0
    assert run(["predict", "--checkpoint", f"{w}/model.ckpt", "--input", bundled["corpus"],
                "--output", f"{w}/pred.tsv"]) == 0
    assert run(["evaluate", "--predictions", f"{w}/pred.tsv", "--gold", bundled["corpus"],
                "--report-json", f"{w}/report.json", "--report-text", f"{w}/report.txt"]) == 0
    return w


@pytest.fixture(scope="session")
def cli_runs(tmp_path_factory, bundled):
    """Two independent end-to-end runs with the same seed."""
    return [run_cli_pipeline(tmp_path_factory.mktemp(f"cli{i}"), bundled) for i in range(2)]
