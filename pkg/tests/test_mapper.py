import pytest
import torch

from cartoonforge.errors import DimensionError
from cartoonforge.mapper import MapperConfig, MapperMLP, fuse


def small_cfg(**kw):
    defaults = dict(pose_dim=5, identity_dim=3, hidden_layers=(8,))
    defaults.update(kw)
    return MapperConfig(**defaults)


class TestFuse:
    def test_pose_block_first(self):
        cfg = MapperConfig(pose_dim=3, identity_dim=2, hidden_layers=(4,))
        fused = fuse(cfg, torch.tensor([1.0, 2.0, 3.0]), torch.tensor([4.0, 5.0]))
        assert torch.equal(fused, torch.tensor([1.0, 2.0, 3.0, 4.0, 5.0]))

    def test_zero_blocks(self):
        cfg = MapperConfig(pose_dim=3, identity_dim=2, hidden_layers=(4,))
        assert torch.equal(fuse(cfg, torch.zeros(3), torch.zeros(2)), torch.zeros(5))

    def test_order_sensitivity(self):
        cfg = MapperConfig(pose_dim=2, identity_dim=2, hidden_layers=(4,))
        a, b = torch.tensor([1.0, 2.0]), torch.tensor([3.0, 4.0])
        assert not torch.equal(fuse(cfg, a, b), fuse(cfg, b, a))

    def test_dimension_mismatch(self):
        cfg = MapperConfig(pose_dim=3, identity_dim=2, hidden_layers=(4,))
        with pytest.raises(DimensionError):
            fuse(cfg, torch.zeros(4), torch.zeros(2))

    def test_optional_block_normalization(self):
        cfg = MapperConfig(pose_dim=3, identity_dim=2, hidden_layers=(4,),
                           normalize_blocks=True)
        fused = fuse(cfg, torch.tensor([3.0, 0.0, 0.0]), torch.tensor([0.0, 2.0]))
        assert torch.allclose(fused, torch.tensor([1.0, 0.0, 0.0, 0.0, 1.0]))


class TestMapperForward:
    def test_output_dimension_is_512(self):
        for hidden in ((8,), (16, 8), (32, 32, 32)):
            mlp = MapperMLP(small_cfg(hidden_layers=hidden), seed=0)
            assert mlp(torch.zeros(8)).shape == (512,)

    def test_deterministic_under_fixed_params(self):
        mlp = MapperMLP(small_cfg(), seed=1)
        x = torch.randn(8, generator=torch.Generator().manual_seed(0))
        assert torch.equal(mlp(x), mlp(x))

    def test_seeded_init_is_reproducible(self):
        a = MapperMLP(small_cfg(), seed=2)
        b = MapperMLP(small_cfg(), seed=2)
        x = torch.randn(8, generator=torch.Generator().manual_seed(1))
        assert torch.equal(a(x), b(x))

    def test_input_length_enforced(self):
        with pytest.raises(DimensionError):
            MapperMLP(small_cfg(), seed=0)(torch.zeros(9))

    def test_fixed_output_dim_enforced(self):
        with pytest.raises(DimensionError):
            MapperConfig(pose_dim=4, identity_dim=4, output_dim=256)

    def test_bounded_inputs_stay_finite(self):
        mlp = MapperMLP(small_cfg(), seed=3)
        for scale in (1.0, 10.0, 100.0):
            out = mlp(torch.full((8,), scale))
            assert torch.isfinite(out).all()
            out = mlp(torch.full((8,), -scale))
            assert torch.isfinite(out).all()

    def test_input_gradient_matches_finite_differences(self):
        mlp = MapperMLP(small_cfg(), seed=4).double()
        x = torch.randn(8, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(2)).requires_grad_(True)
        assert torch.autograd.gradcheck(lambda v: mlp(v).sum(), (x,),
                                        eps=1e-6, atol=1e-8, rtol=1e-4)

    def test_parameter_gradients_match_finite_differences(self):
        mlp = MapperMLP(small_cfg(hidden_layers=(6,)), seed=5).double()
        x = torch.randn(8, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(3))

        def wrt_first_weight(weight):
            h = torch.nn.functional.leaky_relu(weight @ x + mlp.layers[0].bias, 0.2)
            return (mlp.layers[1].weight @ h + mlp.layers[1].bias).sum()

        w0 = mlp.layers[0].weight.detach().clone().requires_grad_(True)
        assert torch.autograd.gradcheck(wrt_first_weight, (w0,),
                                        eps=1e-6, atol=1e-8, rtol=1e-4)
