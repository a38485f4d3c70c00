import numpy as np

from metadob.metalearn import MetaConfig, TrajectorySegment
from metadob.representation import init_params


def tiny_params(rng, m_delays=1, n=3, k=2, hidden=(6,), phi_max=5.0,
                affine_slots=False):
    return init_params(rng, m_delays=m_delays, n=n, k=k, hidden=hidden,
                       phi_max=phi_max, affine_slots=affine_slots)


def random_segment(rng, cfg: MetaConfig, n=3, scale=1.0):
    length = cfg.m_delays + cfg.support_len + cfg.query_len
    states = rng.normal(0.0, scale, size=(length, n))
    dist = rng.normal(0.0, scale, size=(length, n))
    return TrajectorySegment(states=states, disturbances=dist,
                             support_len=cfg.support_len,
                             query_len=cfg.query_len,
                             m_delays=cfg.m_delays)
