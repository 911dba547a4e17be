from datetime import datetime, timezone
from pathlib import Path
from typing import Annotated

from fastapi import Depends
from sqlalchemy import Engine, Text
from sqlmodel import Field, Session, SQLModel, create_engine, select  # type: ignore

from app.models.Command import Command
from app.settings.config import settings

# region engine
if "sqlite" in settings.DATABASE_URL:
    engine: Engine = create_engine(
        settings.DATABASE_URL,
        connect_args={"check_same_thread": False}
    )
else:
    engine: Engine = create_engine(
        settings.DATABASE_URL,
    )
# endregion


# region RunRecord
class RunRecordBase(SQLModel):
    """Base class for run records."""
    command: Command = Field(
        index=True,

        title="Command",
        description="Experiment command that produced the run",
    )
    config_hash: str = Field(
        index=True,
        min_length=64,
        max_length=64,

        title="Config Hash",
        description="sha256 of the canonical run configuration",
    )
    seed: int = Field(
        title="Seed",
        description="Master seed of the run",
    )
    workers: int = Field(
        ge=1,

        title="Workers",
        description="Worker processes used by the run",
    )
    status: str = Field(
        title="Status",
        description="PASS, FAIL or ERROR",
        schema_extra={"examples": ["PASS"]},
    )
    exit_code: int = Field(
        title="Exit Code",
        description="Process exit code of the run",
    )
    results_path: str | None = Field(
        default=None,

        title="Results Path",
        description="Location of results.json, absent when the run aborted",
    )


class RunRecord(RunRecordBase, table=True):
    """Run registry table."""
    id: int | None = Field(
        default=None,
        primary_key=True,

        title="ID",
        description="Run identifier",
    )
    created_at: datetime = Field(
        default_factory=lambda: datetime.now(timezone.utc),

        title="Created At",
        description="Registration time of the run",
    )
    summary: str = Field(
        default="{}",
        sa_type=Text,

        title="Summary",
        description="JSON summary of the check verdicts",
    )


class RunRecordPublic(RunRecordBase):
    """Public run record for API responses."""
    id: int = Field(
        title="ID",
        description="Run identifier",
    )
    created_at: datetime = Field(
        title="Created At",
        description="Registration time of the run",
    )
    summary: str = Field(
        title="Summary",
        description="JSON summary of the check verdicts",
    )
# endregion


def create_db_and_tables() -> None:
    """Creates database tables if they don't exist."""
    database = engine.url.database
    if engine.url.get_backend_name() == "sqlite" and database and database != ":memory:":
        Path(database).parent.mkdir(parents=True, exist_ok=True)
    SQLModel.metadata.create_all(engine)


def get_session():
    """Dependency to get database session."""
    with Session(engine) as session:
        yield session


def register_run(session: Session, record: RunRecord) -> RunRecord:
    """Stores a finished run and returns it with its identifier."""
    session.add(record)
    session.commit()
    session.refresh(record)
    return record


def runs_by_hash(session: Session, config_hash: str) -> list[RunRecord]:
    return list(session.exec(
        select(RunRecord)
        .where(RunRecord.config_hash == config_hash)
        .order_by(RunRecord.id)  # type: ignore
    ).all())


# region dependencies
SessionDependency = Annotated[Session, Depends(get_session)]
# endregion
