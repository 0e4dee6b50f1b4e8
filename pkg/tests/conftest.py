import numpy as np
import pytest

from mmfbar.materials import EPS0, Layer, MaterialProps, Stack, default_stack, load_material_table
from mmfbar.mbvd import params_from_targets

# measured S1/S3 targets used to synthesize a realistic mBVD response
TARGETS = [(21.4e9, 0.070, 62.0), (55.4e9, 0.040, 19.0)]
C0 = 175e-15
RS, LS = 3.0, 50e-12


@pytest.fixture(scope="session")
def table():
    return load_material_table()


@pytest.fixture(scope="session")
def stack(table):
    return default_stack(table)


@pytest.fixture(scope="session")
def target_params():
    return params_from_targets(TARGETS, C0, RS, LS)


def symmetric_stack(top_nm=37.0, bottom_nm=37.0, lossless=True, table=None):
    table = table or load_material_table()
    s = Stack(
        (
            Layer(table["Al"], top_nm * 1e-9),
            Layer(table["ScAlN30"], 85e-9),
            Layer(table["Al"], bottom_nm * 1e-9),
        ),
        piezo_index=1,
        area=112e-12,
    )
    return s.lossless() if lossless else s


def random_material(rng, piezo=False, lossy=True):
    return MaterialProps(
        name="rand",
        density=rng.uniform(1500, 20000),
        c33=rng.uniform(50e9, 500e9),
        e33=rng.uniform(0.2, 3.0) if piezo else 0.0,
        eps33=rng.uniform(4, 20) * EPS0,
        mech_q=rng.uniform(5, 2000) if lossy else np.inf,
    )
