import pytest
import torch

from gensemcom.config import desk_config


def tiny_config(task="RECONSTRUCT", **overrides):
    """8x8 images, embed 8: small enough for float64 finite differences."""
    cfg = desk_config(task)
    base = {
        "image.height": 8, "image.width": 8,
        "extractor.patch_size": 1, "extractor.window_size": 2, "extractor.embed_dim": 8,
        "extractor.attention_heads": 2,
        "encoder.hidden_dim": 8, "encoder.strides": (2,), "encoder.out_channels": 4,
        "rx_kb.channels": 8,
        "recon_decoder.embed_dim": 16, "recon_decoder.depth": 1, "recon_decoder.attention_heads": 2,
        "recon_decoder.time_embed_dim": 8, "recon_decoder.channels": 4, "recon_decoder.refinement_steps": 2,
        "seg_decoder.channels": 8,
        "training.batch_size": 4, "training.epochs": 1, "data.n_train": 8, "data.n_val": 4,
    }
    base.update(overrides)
    return cfg.replace(**base)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


# acceptance bookkeeping: tests record one line per criterion, printed at the end of the run
ACCEPTANCE: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def _train_desk(task):
    import time

    from gensemcom.data import make_dataset
    from gensemcom.evaluation import sweep
    from gensemcom.training import fit

    cfg = desk_config(task)
    start = time.perf_counter()
    model, history = fit(cfg)
    elapsed = time.perf_counter() - start
    val = make_dataset(cfg, "val")
    rows = sweep(model, val, task, [0.0, 6.0, 12.0, 18.0], seed=cfg.eval.seed,
                 batch_size=cfg.eval.batch_size, bound_bits=cfg.eval.bound_bits)
    return {"cfg": cfg, "model": model, "history": history, "seconds": elapsed, "val": val, "rows": rows}


@pytest.fixture(scope="session")
def desk_reconstruct():
    return _train_desk("RECONSTRUCT")


@pytest.fixture(scope="session")
def desk_segment():
    return _train_desk("SEGMENT")
