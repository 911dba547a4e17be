import json

from fastapi import status
from fastapi.testclient import TestClient
from sqlmodel import Session

from app.db.database import RunRecord, register_run
from app.models.Command import Command

CONFIG_HASH = "ab" * 32


def _record(command: Command = Command.VANHOVE, results_path: str | None = None, **fields) -> RunRecord:
    return RunRecord(
        command=command,
        config_hash=fields.pop("config_hash", CONFIG_HASH),
        seed=fields.pop("seed", 20240521),
        workers=1,
        status="PASS",
        exit_code=0,
        results_path=results_path,
        summary=json.dumps({"ground_energy_error": True}),
        **fields,
    )


def test_read_main(client: TestClient):
    """Test the root endpoint to check the service status.

    The curl command to test this endpoint is:

    curl -X 'GET' \\
      'http://127.0.0.1:8000/' \\
      -H 'accept: application/json'
    """
    response = client.get("/")
    assert response.status_code == status.HTTP_200_OK
    assert response.json()["status"] == "ok"
    assert response.json()["runs"] == 0


def test_list_runs(session: Session, client: TestClient):
    """Runs are listed from the newest to the oldest and can be filtered by command.

    The curl command to test this endpoint is:

    curl -X 'GET' \\
      'http://127.0.0.1:8000/runs/?command=vanhove&limit=50' \\
      -H 'accept: application/json'
    """
    register_run(session, _record())
    register_run(session, _record(Command.FIBER_MC, seed=7))

    response = client.get("/runs/")
    assert response.status_code == status.HTTP_200_OK
    assert [run["command"] for run in response.json()] == ["fiber-mc", "vanhove"]

    response = client.get("/runs/", params={"command": "vanhove"})
    assert response.status_code == status.HTTP_200_OK
    assert len(response.json()) == 1
    assert response.json()[0]["seed"] == 20240521

    assert client.get("/").json()["runs"] == 2


def test_list_runs_limit_is_validated(client: TestClient):
    response = client.get("/runs/", params={"limit": 0})
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY
    assert response.json()["detail"][0]["loc"] == ["query", "limit"]


def test_get_run(session: Session, client: TestClient):
    """Test getting one run by its identifier.

    The curl command to test this endpoint is:

    curl -X 'GET' \\
      'http://127.0.0.1:8000/runs/1' \\
      -H 'accept: application/json'
    """
    record = register_run(session, _record())

    response = client.get(f"/runs/{record.id}")
    assert response.status_code == status.HTTP_200_OK
    assert response.json()["config_hash"] == CONFIG_HASH
    assert json.loads(response.json()["summary"]) == {"ground_energy_error": True}


def test_get_missing_run(client: TestClient):
    response = client.get("/runs/1")
    assert response.status_code == status.HTTP_404_NOT_FOUND
    assert response.json() == {"detail": "Run not found"}


def test_runs_by_hash(session: Session, client: TestClient):
    """Test finding the runs that share one configuration.

    The curl command to test this endpoint is:

    curl -X 'GET' \\
      'http://127.0.0.1:8000/runs/by-hash/abab...ab' \\
      -H 'accept: application/json'
    """
    register_run(session, _record())
    register_run(session, _record(seed=11))
    register_run(session, _record(config_hash="cd" * 32))

    response = client.get(f"/runs/by-hash/{CONFIG_HASH}")
    assert response.status_code == status.HTTP_200_OK
    assert [run["seed"] for run in response.json()] == [20240521, 11]

    response = client.get("/runs/by-hash/short")
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY


def test_run_results(session: Session, client: TestClient, tmp_path):
    """Test reading the results.json of a run.

    The curl command to test this endpoint is:

    curl -X 'GET' \\
      'http://127.0.0.1:8000/runs/1/results' \\
      -H 'accept: application/json'
    """
    results = tmp_path / "results.json"
    results.write_text(json.dumps({"command": "vanhove", "passed": True}))
    record = register_run(session, _record(results_path=str(results)))

    response = client.get(f"/runs/{record.id}/results")
    assert response.status_code == status.HTTP_200_OK
    assert response.json() == {"command": "vanhove", "passed": True}


def test_run_results_missing_file(session: Session, client: TestClient, tmp_path):
    missing = register_run(session, _record(results_path=str(tmp_path / "gone.json")))
    failed = register_run(session, _record())

    for run_id in (missing.id, failed.id):
        response = client.get(f"/runs/{run_id}/results")
        assert response.status_code == status.HTTP_404_NOT_FOUND
        assert response.json() == {"detail": "Results not found"}
