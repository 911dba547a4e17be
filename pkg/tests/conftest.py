import numpy as np
import pytest
from faker import Faker
from faker.providers import BaseProvider
from fastapi.testclient import TestClient
from sqlmodel import Session, SQLModel, create_engine
from sqlmodel.pool import StaticPool

from app.db.database import get_session
from app.engine.fock import TruncatedFock
from app.engine.modespace import ModeSpace, nelson_preset, spin_toy_preset
from app.main import app


class ModeProvider(BaseProvider):
    def mode_vector(self, count: int = 2, scale: float = 0.5) -> np.ndarray:
        # Complex one-boson vector with entries of modulus below `scale`
        real = [self.generator.pyfloat(min_value=-scale, max_value=scale) for _ in range(count)]
        imag = [self.generator.pyfloat(min_value=-scale, max_value=scale) for _ in range(count)]
        return np.asarray(real) + 1j * np.asarray(imag)

    def position(self, nu: int = 1, radius: float = 2.0) -> np.ndarray:
        return np.asarray([self.generator.pyfloat(min_value=-radius, max_value=radius) for _ in range(nu)])

    def seed(self) -> int:
        return self.random_int(min=0, max=2 ** 32 - 1)


@pytest.fixture(name="faker")
def faker():
    fake = Faker()
    Faker.seed(1234)
    fake.add_provider(ModeProvider)
    return fake


@pytest.fixture(name="rng")
def rng_fixture():
    return np.random.default_rng(20240521)


@pytest.fixture(name="two_modes")
def two_modes_fixture() -> ModeSpace:
    return ModeSpace.from_modes([1.0, 0.5], [1.0, 2.0], [[0.0], [0.0]])


@pytest.fixture(name="fock")
def fock_fixture(two_modes: ModeSpace) -> TruncatedFock:
    return TruncatedFock(two_modes, 6)


@pytest.fixture(name="nelson_toy")
def nelson_toy_fixture():
    """One mode, omega = 1, |F| = 0.3, m = 0."""
    return nelson_preset([1.0], [1.0], [[0.0]], np.array([0.3 + 0j]))


@pytest.fixture(name="spin_toy")
def spin_toy_fixture():
    """Two modes, L = 2, Pauli-z spin matrix."""
    return spin_toy_preset([1.0, 1.0], [1.0, 1.5], np.array([0.3, 0.2], dtype=np.complex128))


@pytest.fixture(name="session")
def session_fixture():
    engine = create_engine(
        "sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool
    )
    SQLModel.metadata.create_all(engine)
    with Session(engine) as session:
        yield session


@pytest.fixture(name="client")
def client_fixture(session: Session):
    def override_get_session():
        return session

    app.dependency_overrides[get_session] = override_get_session
    client = TestClient(app)
    yield client
    app.dependency_overrides.clear()
