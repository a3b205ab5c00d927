import numpy as np
import pytest

from galactic.dataset import split
from galactic.importance import ImportanceIndex
from galactic.structure import build_subgroups
from galactic.surrogate import SurrogateModel, TrainConfig, train
from galactic.synthetic import bump_corpus, constant_corpus


@pytest.fixture(scope="session")
def bump():
    return bump_corpus(seed=0)


@pytest.fixture(scope="session")
def bump_split(bump):
    return split(bump, 0.8, 0)


@pytest.fixture(scope="session")
def bump_model(bump_split):
    return train(bump_split[0], TrainConfig(seed=0))


@pytest.fixture(scope="session")
def bump_index(bump, bump_split, bump_model):
    sgs = {
        k: build_subgroups(bump.X[bump.members(k)], seed=k, cluster_id=k, member_ids=bump.ids[bump.members(k)])
        for k in range(bump.K)
    }
    X_by_id = {int(i): x for i, x in zip(bump.ids, bump.X)}
    return ImportanceIndex(bump_model, sgs, X_by_id, B=5, seed=0, donors=bump_split[0].X)


@pytest.fixture(scope="session")
def const():
    return constant_corpus()


@pytest.fixture(scope="session")
def const_model(const):
    return train(const, TrainConfig(seed=0))


def random_model(T, K, H=8, seed=0, scale=1.0):
    m = SurrogateModel.init(T, K, H, seed)
    rng = np.random.default_rng(seed + 99)
    m.b1 = rng.normal(0, 0.5, m.b1.shape)
    m.b2 = rng.normal(0, 0.5, m.b2.shape)
    m.W1 = m.W1 * scale
    m.W2 = m.W2 * scale
    return m


def random_instance(rng, max_cand=8, max_inst=20, p_sz=None, T=64):
    """Random flip matrix plus perturbation statistics, as plain arrays."""
    n_cand = int(rng.integers(1, max_cand + 1))
    n_inst = int(rng.integers(1, max_inst + 1))
    density = rng.uniform(0.05, 0.6)
    flips = rng.random((n_inst, n_cand)) < density
    l0 = rng.integers(1, T + 1, n_cand)
    l1 = rng.uniform(0.01, 20.0, n_cand)
    costs = rng.uniform(0.01, 5.0, n_cand)
    p_sz = int(rng.integers(1, 65)) if p_sz is None else p_sz
    return flips, l0, l1, costs, p_sz


def gamma_len(n):
    # length of the Elias-gamma codeword of n, counted from its binary string
    return 2 * (len(format(int(n), "b")) - 1) + 1


def oracle_descs(l0, l1):
    return [gamma_len(a) + np.log2(b + 1.0) for a, b in zip(l0, l1)]


def oracle_total(flips, descs, p_sz, S, MC=None):
    """From-scratch description length of subset ``S`` straight from the flip matrix."""
    flips = np.asarray(flips, dtype=bool)
    MC = max(descs) + 2 * p_sz if MC is None else MC
    S = list(S)
    cov = int(flips[:, S].any(axis=1).sum()) if S else 0
    model = sum(descs[j] for j in S) + (cov + len(S)) * p_sz if S else 0.0
    return model + (flips.shape[0] - cov) * MC


def problem_of(inst):
    from galactic.globalcf import MdlProblem
    from galactic.globalcf.mdl import desc_bits

    flips, l0, l1, costs, p_sz = inst
    descs = [desc_bits(int(a), float(b)) for a, b in zip(l0, l1)]
    return MdlProblem.from_flip_matrix(flips, descs, p_sz=p_sz, costs=costs)
