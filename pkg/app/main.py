"""
This module contains the code that is necessary to run when the service starts.
And some endpoints that don't belong to any specific router.

This module contains the following things:

- lifespan: An async context manager that runs code before the server starts.
- app: A FastAPI application instance that contains the API's configuration.
- logfire: A logging configuration that sends logs to LogFire when a token is present.
- include_router: Where the routers are added to the FastAPI application.
- endpoint: Endpoint that doesn't belong to any specific router.
- Entrypoint: The main entrypoint for the application.

The service is read-only: runs are produced by `python -m app.cli` and only
browsed here.
"""
from typing import Any

import logfire
import uvicorn
from fastapi import FastAPI
from fastapi.concurrency import asynccontextmanager
from sqlmodel import func, select

from app.db.database import RunRecord, SessionDependency, create_db_and_tables, engine
from app.models.Tags import Tags, tags_metadata
from app.routers import runs
from app.settings.config import settings

# region FastAPI Configuration


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifespan event handler for the FastAPI application.
    It runs code before the server starts and after the server stops.

    In this case before the server starts do the following:
    - Create the run registry tables if they don't exist

    Args:
        app (FastAPI): The FastAPI application instance.
    Yields:
        None: This function yields control back to the FastAPI application.
    """
    create_db_and_tables()
    yield

app = FastAPI(
    title="Feynman-Kac Fiber Engine - Run Registry",
    summary="Read-only access to the runs of the Feynman-Kac experiment runner.",
    description="""
# Feynman-Kac Fiber Engine

Monte Carlo estimators for fiber Hamiltonians of translation-invariant
matter-boson models, checked against exact matrix-exponential oracles on
truncated Fock spaces.

Runs are started from the command line (`python -m app.cli <command>`); this
service lists them and serves their `results.json`.

## Useful links

* [Documentation in Swagger UI](http://127.0.0.1:8000/docs)
* [Documentation in ReDoc](http://127.0.0.1:8000/redoc)
""",
    version="0.1.0",
    license_info={
        "name": "Apache 2.0",
        "identifier": "Apache-2.0",
    },
    openapi_tags=tags_metadata,  # type: ignore

    lifespan=lifespan,
)
# endregion

logfire.configure(
    token=settings.LOGS_TOKEN,
    send_to_logfire="if-token-present",
    environment=settings.ENVIRONMENT,
)
logfire.instrument_fastapi(app, capture_headers=True)
logfire.instrument_sqlalchemy(engine=engine)


# region Routers
app.include_router(runs.router)
# endregion


@app.get("/", tags=[Tags.health])
async def read_main(session: SessionDependency) -> dict[str, Any]:
    """
    Health information of the service.
    It handles GET requests to the root path ("/") and returns the service
    status with the number of registered runs.

    \f

    :return: A JSON response with the status and the run count.
    :rtype: dict[str, Any]
    """
    count = session.exec(select(func.count()).select_from(RunRecord)).one()
    return {"status": "ok", "environment": settings.ENVIRONMENT, "runs": count}


# region Entrypoint
if __name__ == "__main__":
    uvicorn.run("app.main:app", host="127.0.0.1", port=8000, reload=settings.ENVIRONMENT == "development")
# endregion
