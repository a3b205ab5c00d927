"""Candidate pool generation from local counterfactuals of MMD-Critic representatives."""

from __future__ import annotations

import numpy as np

from ..importance import ImportanceIndex
from ..local import LocalConfig, galactic_l
from ..structure import SubgroupModel
from .mdl import DEFAULT_PSZ, CandidatePool, Perturbation, snap
from .mmd import mmd_critic


def generate_candidates(
    X,
    instance_ids,
    cluster_id: int,
    model,
    index: ImportanceIndex | None,
    cfg: LocalConfig | None = None,
    subgroups: SubgroupModel | None = None,
    n_proto: int = 5,
    n_crit: int = 3,
    seed: int = 0,
    p_sz: int = DEFAULT_PSZ,
) -> CandidatePool:
    """Run the local search on each representative and keep snapped, still-flipping deltas.

    Representatives are picked among rows the surrogate assigns to
    ``cluster_id``. Candidate ids follow representative order.
    """
    cfg = cfg or LocalConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ids = np.asarray(instance_ids, dtype=int)
    notes = []
    ok = np.flatnonzero(model.predict(X) == cluster_id) if len(X) else np.array([], dtype=int)
    if len(ok) == 0:
        return CandidatePool(cluster_id, [], p_sz, ["no correctly assigned instances"])
    want_p, want_c = min(n_proto, len(ok)), min(n_crit, max(0, len(ok) - n_proto))
    reps = mmd_critic(X[ok], want_p, want_c)

    perts = []
    for pos in reps.all:
        row = ok[pos]
        iid = int(ids[row])
        cf = galactic_l(X[row], model, index, cfg, seed ^ iid, instance_id=iid)
        if cf is None:
            notes.append(f"instance {iid}: no counterfactual found")
            continue
        delta = snap(cf.delta, cfg.threshold)
        if cf.snap_reverted or not np.any(delta):
            notes.append(f"instance {iid}: flip lost after snapping, dropped")
            continue
        group = subgroups.group_of(iid) if subgroups is not None and iid in set(subgroups.member_ids.tolist()) else None
        perts.append(Perturbation(delta, cid=len(perts), source_id=iid, source_group=group))
    if not perts:
        notes.append("empty candidate pool")
    return CandidatePool(cluster_id, perts, p_sz, notes)
