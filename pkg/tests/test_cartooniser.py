import pytest
import torch

from cartoonforge.cartooniser import (Cartooniser, CartooniserConfig, ConvBNRelu,
                                      DownBlock, ResidualBlock, UpBlock, cartoonise,
                                      stage_shapes)
from cartoonforge.errors import DimensionError

TINY = CartooniserConfig(base_channels=4)


def tiny_model(seed=0, **kw):
    model = Cartooniser(CartooniserConfig(base_channels=4, **kw))
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.uniform_(-0.2, 0.2, generator=gen)
    model.eval()
    return model


class TestStageShapes:
    def test_paper_trace_at_256(self):
        down, up = stage_shapes(TINY, 256)
        assert down == [128, 64, 32, 16]
        assert up == [32, 64, 128, 256]

    def test_toy_resolution(self):
        down, _ = stage_shapes(TINY, 64)
        assert down == [32, 16, 8, 4]

    def test_minimum_resolution(self):
        down, _ = stage_shapes(TINY, 16)
        assert down == [8, 4, 2, 1]

    def test_indivisible_resolution_rejected(self):
        with pytest.raises(DimensionError):
            stage_shapes(TINY, 50)


class TestArchitectureConformance:
    def test_four_down_blocks_with_stride_pattern(self):
        model = tiny_model()
        assert len(model.down_blocks) == 4
        for block in model.down_blocks:
            assert isinstance(block, DownBlock)
            assert block.unit1.conv.stride == (2, 2)
            assert block.unit2.conv.stride == (1, 1)
            for unit in (block.unit1, block.unit2):
                assert isinstance(unit, ConvBNRelu)
                assert isinstance(unit.bn, torch.nn.BatchNorm2d)
                assert isinstance(unit.relu, torch.nn.ReLU)

    def test_four_residual_blocks_with_identity_add(self):
        model = tiny_model()
        assert len(model.res_blocks) == 4
        block = model.res_blocks[0]
        assert isinstance(block, ResidualBlock)
        x = torch.randn(1, 32, 8, 8, generator=torch.Generator().manual_seed(1))
        branch = block.bn2(block.conv2(block.relu(block.bn1(block.conv1(x)))))
        assert torch.allclose(block(x), x + branch)

    def test_four_up_blocks_with_doubling_upsample(self):
        model = tiny_model()
        assert len(model.up_blocks) == 4
        for block in model.up_blocks:
            assert isinstance(block, UpBlock)
            assert block.upsample.scale_factor == 2
            assert block.unit1.conv.stride == (1, 1)
            assert block.unit2.conv.stride == (1, 1)

    def test_config_pins_stage_and_block_counts(self):
        with pytest.raises(DimensionError):
            CartooniserConfig(channel_mults=(1, 2, 4))
        with pytest.raises(DimensionError):
            CartooniserConfig(num_residual_blocks=3)


class TestForward:
    @pytest.mark.parametrize("res", [64, 256])
    def test_shape_preserved(self, res):
        model = tiny_model()
        img = torch.rand(3, res, res, generator=torch.Generator().manual_seed(2)) * 2 - 1
        out = cartoonise(model, img)
        assert out.shape == (3, res, res)

    def test_indivisible_resolution_rejected(self):
        model = tiny_model()
        with pytest.raises(DimensionError):
            model(torch.zeros(3, 50, 50))

    def test_output_in_declared_range(self):
        model = tiny_model(seed=3)
        img = torch.rand(3, 64, 64, generator=torch.Generator().manual_seed(3)) * 2 - 1
        out = model(img)
        assert out.min() >= -1 and out.max() <= 1

    def test_deterministic(self):
        model = tiny_model(seed=4)
        img = torch.rand(3, 64, 64, generator=torch.Generator().manual_seed(4)) * 2 - 1
        assert torch.equal(model(img), model(img))

    def test_skip_connections_toggle(self):
        img = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(5)) * 2 - 1
        out = tiny_model(seed=5, skip_connections=False)(img)
        assert out.shape == (3, 32, 32)

    def test_bilinear_upsampling_flag(self):
        img = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(6)) * 2 - 1
        out = tiny_model(seed=6, upsample_mode="bilinear")(img)
        assert out.shape == (3, 32, 32)

    def test_gradient_matches_finite_differences(self):
        model = tiny_model(seed=7).double()
        img = (torch.rand(3, 16, 16, dtype=torch.float64,
                          generator=torch.Generator().manual_seed(7)) * 1.6 - 0.8)
        img.requires_grad_(True)
        assert torch.autograd.gradcheck(lambda x: model(x).sum(), (img,),
                                        eps=1e-6, atol=1e-7, rtol=1e-3)
