import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from arithopt.dataset import DatasetSpec, generate_dataset
from arithopt.neural import (
    TrainConfig,
    encode_designs,
    make_denoiser,
    make_predictor,
    make_schedule,
    train_diffusion,
    train_predictor,
)

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def train_models(kind, n, unlabeled, labeled, diff_epochs, pred_epochs, seed=0):
    """Dataset + denoiser + predictor bundle used by the sampler-level tests."""
    ds = generate_dataset(
        DatasetSpec(
            kind=kind,
            n=n,
            unlabeled_count=unlabeled,
            labeled_count=labeled,
            rng_seed=seed,
        )
    )
    schedule = make_schedule(1000, "linear-abar")
    denoiser = make_denoiser(kind, n, seed=seed + 1)
    train_diffusion(
        denoiser,
        encode_designs(ds.designs),
        schedule,
        TrainConfig(epochs=diff_epochs, seed=seed + 2),
    )
    predictor = make_predictor(kind, n, seed=seed + 3)
    labeled_designs = [ds.designs[i] for i, _ in ds.labeled]
    ys = np.asarray([label.y for _, label in ds.labeled], dtype=np.float32)
    train_predictor(
        predictor,
        encode_designs(labeled_designs),
        ys,
        TrainConfig(epochs=pred_epochs, seed=seed + 4),
    )
    denoiser.eval()
    predictor.eval()
    return {
        "kind": kind,
        "n": n,
        "dataset": ds,
        "labels_y": ys,
        "schedule": schedule,
        "denoiser": denoiser,
        "predictor": predictor,
    }


@pytest.fixture(scope="session")
def ct8_models():
    """Trained n=8 compressor-tree models; shared by the trend tests."""
    torch.manual_seed(0)
    return train_models("ct", 8, unlabeled=500, labeled=150, diff_epochs=250, pred_epochs=250)


@pytest.fixture(scope="session")
def ct16_denoiser():
    """Trained n=16 denoiser for legalization-cap checks (no predictor needed)."""
    ds = generate_dataset(
        DatasetSpec(kind="ct", n=16, unlabeled_count=160, labeled_count=20, rng_seed=3)
    )
    schedule = make_schedule(1000, "linear-abar")
    denoiser = make_denoiser("ct", 16, seed=5)
    train_diffusion(
        denoiser,
        encode_designs(ds.designs),
        schedule,
        TrainConfig(epochs=50, seed=6),
    )
    denoiser.eval()
    return {"schedule": schedule, "denoiser": denoiser}


@pytest.fixture(scope="session")
def tiny_models():
    """Quickly trained model bundles for n=2 and n=4 pipelines."""
    bundles = {}
    for n, unlabeled, labeled in ((2, 24, 8), (4, 120, 40)):
        bundles[n] = train_models(
            "ct", n, unlabeled=unlabeled, labeled=labeled, diff_epochs=30, pred_epochs=60, seed=10 + n
        )
    return bundles
