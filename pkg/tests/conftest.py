import pytest

from src.geometry import heisenberg, quaternionic, radial_only
from src.heatkernel import HeatTable


@pytest.fixture(autouse=True)
def scratch_db(tmp_path, monkeypatch):
    """Keep kernel-table caching out of the repository's data/ directory."""
    path = str(tmp_path / "htype.db")
    monkeypatch.setattr("src.db.DB_PATH", path)
    return path


@pytest.fixture
def h1():
    return heisenberg(1)


@pytest.fixture
def h2():
    return heisenberg(2)


@pytest.fixture
def quat():
    return quaternionic(2)


@pytest.fixture
def radial_23():
    return radial_only(2, 3)


@pytest.fixture(scope="session")
def h1_table():
    """Coarse xi table on H^1 covering the default quadrature boxes."""
    return HeatTable.build(heisenberg(1), R_max=40.0, zeta_max=20.0, nodes=(48, 48), workers=1, use_db=False)
