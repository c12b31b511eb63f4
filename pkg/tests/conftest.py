import numpy as np
import pytest

from drm import GroupedDataset, KernelSpec, group_by_label


def random_grouped(rng, n_max=40, p_max=8, g_choices=(2, 3)):
    """Random grouped dataset with entries in [-1, 1]."""
    g = int(rng.choice(g_choices))
    sizes = rng.integers(1, max(2, n_max // g), size=g) + 1
    n = int(sizes.sum())
    p = int(rng.integers(2, p_max + 1))
    X = rng.uniform(-1.0, 1.0, size=(p, n))
    labels = np.repeat(np.arange(1, g + 1), sizes)
    return group_by_label(X, labels)


def random_kernel(rng) -> KernelSpec:
    fam = rng.choice(["linear", "rbf", "poly"])
    if fam == "rbf":
        return KernelSpec(family="rbf", gamma=float(rng.choice([0.1, 0.5, 1.0, 2.0])))
    if fam == "poly":
        return KernelSpec(family="poly", degree=int(rng.choice([2, 3])))
    return KernelSpec(family="linear")


def scatter_within_definitional(ds: GroupedDataset, w: np.ndarray) -> float:
    """S_w(w) computed directly from weighted class means."""
    total = 0.0
    for i in range(ds.g):
        sl = ds.class_slice(i + 1)
        Xi = ds.features[:, sl]
        wi = w[sl]
        weighted = Xi * wi  # columns w_j^i x_j^i
        mu = weighted.mean(axis=1, keepdims=True)
        diff = weighted - mu
        total += 0.5 * float(np.sum(diff * diff))
    return total


def scatter_between_definitional(ds: GroupedDataset, w: np.ndarray) -> float:
    """S_b(w) from weighted class means around the weighted global mean."""
    weighted = ds.features * w
    mu = weighted.mean(axis=1, keepdims=True)
    total = 0.0
    for i in range(ds.g):
        sl = ds.class_slice(i + 1)
        mui = weighted[:, sl].mean(axis=1, keepdims=True)
        ni = ds.group_sizes[i]
        total += 0.5 * ni * float(np.sum((mui - mu) ** 2))
    return total


def scatter_total_definitional(ds: GroupedDataset, w: np.ndarray) -> float:
    """S_t(w) from weighted examples around the weighted global mean."""
    weighted = ds.features * w
    mu = weighted.mean(axis=1, keepdims=True)
    diff = weighted - mu
    return 0.5 * float(np.sum(diff * diff))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
