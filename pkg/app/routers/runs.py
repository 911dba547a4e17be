import json
from pathlib import Path as FilePath
from typing import Annotated, Any

from fastapi import APIRouter, HTTPException, Path, Query, status
from sqlmodel import select

from app.db.database import RunRecord, RunRecordPublic, SessionDependency, runs_by_hash
from app.models.Command import Command
from app.models.Tags import Tags

router = APIRouter(
    prefix="/runs",
    tags=[Tags.runs],
)


def _get_run_or_404(session: SessionDependency, run_id: int) -> RunRecord:
    if not (run := session.get(RunRecord, run_id)):
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail="Run not found",
        )
    return run


@router.get(
    "/",
    response_model=list[RunRecordPublic],

    summary="List registered runs",
    response_description="Runs ordered from the newest to the oldest",
)
async def list_runs(
    session: SessionDependency,
    command: Annotated[
        Command | None,
        Query(
            title="Command",
            description="Only return runs of this command.",
        )
    ] = None,
    limit: Annotated[
        int,
        Query(
            title="Limit",
            description="Largest number of runs to return.",
            ge=1,
            le=500,
        )
    ] = 50,
) -> list[RunRecord]:
    """
    Endpoint to list the registered runs.

    \f

    :param session: The database session dependency to interact with the database.
    :type session: SessionDependency

    :param command: Optional command filter.
    :type command: Command | None

    :param limit: Largest number of runs to return.
    :type limit: int
    """
    query = select(RunRecord)
    if command is not None:
        query = query.where(RunRecord.command == command)
    query = query.order_by(RunRecord.id.desc()).limit(limit)  # type: ignore
    return list(session.exec(query).all())


@router.get(
    "/by-hash/{config_hash}",
    response_model=list[RunRecordPublic],

    summary="Find runs of one configuration",
    response_description="Every run whose configuration has this content hash",
)
async def get_runs_by_hash(
    session: SessionDependency,
    config_hash: Annotated[
        str,
        Path(
            title="Config Hash",
            description="sha256 of the canonical run configuration.",
            min_length=64,
            max_length=64,
        )
    ],
) -> list[RunRecord]:
    """
    Endpoint to find the runs that share a configuration.

    \f

    :param session: The database session dependency to interact with the database.
    :type session: SessionDependency

    :param config_hash: Content hash of the configuration.
    :type config_hash: str
    """
    return runs_by_hash(session, config_hash)


@router.get(
    "/{run_id}",
    response_model=RunRecordPublic,

    summary="Get one run",
    response_description="The run record",
)
async def get_run(
    session: SessionDependency,
    run_id: Annotated[
        int,
        Path(
            title="Run ID",
            description="Identifier of the run.",
            ge=1,
        )
    ],
) -> RunRecord:
    """
    Endpoint to get a registered run.

    \f

    :param session: The database session dependency to interact with the database.
    :type session: SessionDependency

    :param run_id: Identifier of the run.
    :type run_id: int
    """
    return _get_run_or_404(session, run_id)


@router.get(
    "/{run_id}/results",

    summary="Get the results of one run",
    response_description="The content of the run's results.json",
)
async def get_run_results(
    session: SessionDependency,
    run_id: Annotated[
        int,
        Path(
            title="Run ID",
            description="Identifier of the run.",
            ge=1,
        )
    ],
) -> dict[str, Any]:
    """
    Endpoint to read the results.json written by a run.

    \f

    :param session: The database session dependency to interact with the database.
    :type session: SessionDependency

    :param run_id: Identifier of the run.
    :type run_id: int
    """
    run = _get_run_or_404(session, run_id)
    if run.results_path is None or not (results := FilePath(run.results_path)).is_file():
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail="Results not found",
        )
    return json.loads(results.read_text(encoding="utf-8"))
