import numpy as np
import pytest

from mixedplap.errors import InvalidOrder, InvalidSpec
from mixedplap.kernel import Kernel, fractional_kernel, normalization_check, stencil


@pytest.mark.parametrize("family", ["tent", "truncated_gaussian", "bump"])
@pytest.mark.parametrize("dim", [1, 2])
def test_unit_mass(family, dim):
    k = Kernel.make(family, 0.3, dim)
    value, flagged = normalization_check(k, 0.3 / 200)
    assert not flagged
    assert value == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("family", ["tent", "truncated_gaussian", "bump"])
def test_radially_decreasing_and_compact(family):
    k = Kernel.make(family, 0.5, 1)
    rho = np.linspace(0, 0.5, 200)
    vals = k.radial(rho)
    assert np.all(np.diff(vals) <= 1e-15)
    assert k.radial(0.6) == 0.0
    assert k.is_decreasing


def test_weight_scales_kernel():
    k = Kernel.make("tent", 0.2, 1)
    assert k.scaled(0.5).radial(0.05) == pytest.approx(0.5 * k.radial(0.05))
    assert k.scaled(0.5).describe() == "tent r=0.2 w=0.5"


def test_invalid_kernels():
    with pytest.raises(InvalidSpec):
        Kernel.make("tent", 0.0, 1)
    with pytest.raises(InvalidSpec):
        Kernel.make("cauchy", 1.0, 1)
    with pytest.raises(InvalidSpec):
        Kernel.make("tent", 1.0, 1, weight=-1)


def test_fractional_order_condition():
    # N > p s fails for N = 1, p = 2, s = 0.5
    with pytest.raises(InvalidOrder):
        fractional_kernel(0.5, 2.0, 0.01, 0.2, dim=1)
    k = fractional_kernel(0.4, 2.0, 0.01, 0.2, dim=1)
    assert not k.is_decreasing
    assert normalization_check(k, 0.2 / 100)[1]
    assert k.radial(0.005) == 0.0
    assert k.radial(0.1) == pytest.approx(0.1 ** -1.8)


def test_json_roundtrip():
    for k in (Kernel.make("bump", 0.3, 2, 0.75), fractional_kernel(0.3, 2.5, 0.02, 0.25, 2)):
        assert Kernel.from_json(k.to_json(), k.dim) == k


@pytest.mark.parametrize("dim", [1, 2])
def test_stencil_half_plane(dim):
    k = Kernel.make("tent", 0.2, dim)
    offs, w = stencil(k, 0.05)
    assert np.all(w > 0)
    # no offset together with its negation, and no zero offset
    keys = {tuple(o) for o in offs}
    assert not any(tuple(-np.array(o)) in keys for o in keys)
    assert (0,) * dim not in keys
    assert len(stencil(None, 0.05)[1]) == 0
    assert len(stencil(k.scaled(0.0), 0.05)[1]) == 0
