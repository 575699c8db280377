import pytest

from weibull_rul import dataset


def small_data(seed=4, n_runs=6, windows=12):
    """Six short synthetic runs split 2/2/2."""
    spec = dataset.SynthesisSpec(n_runs=n_runs, windows_per_run=windows, window_length=256, noise_level=0.1)
    runs = dataset.synthesize_runs(spec, seed)
    names = ["train", "train", "validation", "validation", "test", "test"]
    return dataset.assemble(runs, {r.id: names[i % 6] for i, r in enumerate(runs)}, bin_count=20)


@pytest.fixture(scope="session")
def tiny():
    return small_data()
