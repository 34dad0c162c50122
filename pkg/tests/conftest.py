import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def conv_oracle(x, w, b, stride):
    """Nested-loop valid convolution. x (n_i, *sp), w (n_o, n_i, *k)."""
    n_o = w.shape[0]
    kernel = w.shape[2:]
    out_sp = tuple((n - k) // s + 1 for n, k, s in zip(x.shape[1:], kernel, stride))
    out = np.zeros((n_o, *out_sp))
    for o in range(n_o):
        for pos in np.ndindex(*out_sp):
            acc = float(b[o])
            for i in range(x.shape[0]):
                for d in np.ndindex(*kernel):
                    src = tuple(p * s + dd for p, s, dd in zip(pos, stride, d))
                    acc += float(w[(o, i) + d]) * float(x[(i,) + src])
            out[(o,) + pos] = acc
    return out
