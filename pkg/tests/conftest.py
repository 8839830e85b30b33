"""Shared test helpers."""

import numpy as np

from dualdenoise.data import AspectAnnotation, MultimodalSample, Polarity


def make_sample(sid="s0", n=4, m=2, **overrides):
    fields = dict(
        id=sid,
        tokens=[f"t{i}" for i in range(n)],
        noun_flags=[i == 1 for i in range(n)],
        image_blocks=np.ones((m, 3)) * 0.5,
        text_embed=np.arange(1.0, 6.0),
        image_embed=np.arange(2.0, 7.0),
        dep_dist=np.abs(np.subtract.outer(np.arange(n), np.arange(n))),
        sentic=np.zeros(n),
        aspects=[AspectAnnotation(1, 1, Polarity.POSITIVE)],
        noise_flag=False,
    )
    fields.update(overrides)
    return MultimodalSample(**fields)
