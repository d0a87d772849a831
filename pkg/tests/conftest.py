import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from risthz.perf_metrics import HardwareProfile, SystemModel, db_to_lin, ftr_from_db  # noqa: E402
from risthz.thz_channel import LinkGeometry, Misalignment  # noqa: E402


@pytest.fixture(scope="session")
def hops20():
    """Hop templates (K, m, Delta) = (5, 5, 0.6) and (6, 7, 0.4) at 20 dB mean power."""
    return ftr_from_db(5, 5, 0.6, 20), ftr_from_db(6, 7, 0.4, 20)


@pytest.fixture(scope="session")
def hops10():
    return ftr_from_db(5, 5, 0.6, 10), ftr_from_db(6, 7, 0.4, 10)


@pytest.fixture(scope="session")
def beam():
    return Misalignment.from_geometry()


@pytest.fixture(scope="session")
def link_model(hops20, beam):
    """Builds the 300 GHz, 30/20 m, 40 dBi link at 150 dBW with kappa = 0.1 per side."""
    def build(l_elements, power_dbw=150.0, kappa=0.1):
        return SystemModel.iid(l_elements, *hops20, beam, hw=HardwareProfile(kappa, kappa),
                               power_w=db_to_lin(power_dbw), noise_w=db_to_lin(1.0),
                               geom=LinkGeometry())
    return build
