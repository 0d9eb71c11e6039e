import numpy as np
import pytest
import torch

from cartoonforge.backbones import load_toy_backend
from cartoonforge.mapper import MapperConfig, MapperMLP

TOY_MAPPER_HIDDEN = (128, 128)


def make_image(seed: int, res: int = 64) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(3, res, res, generator=gen) * 2 - 1


@pytest.fixture(scope="session")
def handles():
    return load_toy_backend()


@pytest.fixture()
def toy_mapper(handles):
    return MapperMLP(
        MapperConfig(pose_dim=handles.pose_dim, identity_dim=handles.identity_dim,
                     hidden_layers=TOY_MAPPER_HIDDEN),
        seed=0,
    )


@pytest.fixture()
def np_rng():
    return np.random.default_rng(1234)
