import pytest

from hoso_adapter import numerics as nm
from hoso_adapter.evaluation import SyntheticSpec, make_synthetic_bank

from shared_fixtures import OVERFIT_SPEC  # noqa: F401  (re-exported for fixtures)


@pytest.fixture(params=sorted(nm.get_backends()))
def kernels(request):
    """Run kernel-sensitive tests against every available backend."""
    return nm.get_backends()[request.param]


@pytest.fixture(scope="session")
def small_bank():
    """Tiny separable bank: 3 classes, dim 8, fast to train on."""
    spec = SyntheticSpec(num_classes=3, dim=8, within_class_noise=0.3,
                         domain_gap=0.1, train_per_class=24, test_per_class=24,
                         logit_scale=10.0, seed=11)
    return make_synthetic_bank(spec)


@pytest.fixture(scope="session")
def overfit_bank():
    return make_synthetic_bank(OVERFIT_SPEC)
