"""Operator CLI: interactive consultation, persona batches, validation.

Exit codes: 0 success, 1 validation findings, 2 connectivity, 3 internal.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import click
import httpx

from .backends import BackendUnavailable, RemoteBackend, ScriptedBackend
from .catalog import validate_catalog
from .config import Config
from .orchestrator import Orchestrator, SessionEnded, compute_metrics
from .personas import Persona, PersonaBackend, run_personas
from .report import write_report
from .scenario import ScenarioState, transition_table
from .speech import load_profile
from .store import SessionStore, StorageError

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_CONNECT = 2
EXIT_INTERNAL = 3


class ConnectError(Exception):
    pass


def _load_config(config_path: str | None, **overrides) -> Config:
    config = Config.from_file(config_path) if config_path else Config.from_env()
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    return config


@click.group()
def main():
    """Travel-counter dialogue engine for two-spot Kyoto tours."""


# -- interactive ---------------------------------------------------------------


class _EmbeddedClient:
    def __init__(self, config: Config):
        self.orch = Orchestrator.from_config(config)

    def create_session(self) -> str:
        return self.orch.create_session()

    def resume(self, session_id: str) -> dict:
        return self.orch.session_view(session_id)

    def post_turn(self, session_id: str, text: str) -> dict:
        return self.orch.post_user_turn(session_id, text).to_dict()


class _HttpClient:
    def __init__(self, base_url: str):
        self.base_url = base_url.rstrip("/")
        self.client = httpx.Client(timeout=30.0)

    def _unwrap(self, response: httpx.Response) -> dict:
        if response.status_code >= 400:
            raise ConnectError(f"{response.status_code}: {response.text}")
        return response.json()

    def create_session(self) -> str:
        try:
            return self._unwrap(self.client.post(f"{self.base_url}/sessions"))["session_id"]
        except httpx.HTTPError as exc:
            raise ConnectError(str(exc)) from exc

    def resume(self, session_id: str) -> dict:
        try:
            return self._unwrap(self.client.get(f"{self.base_url}/sessions/{session_id}"))
        except httpx.HTTPError as exc:
            raise ConnectError(str(exc)) from exc

    def post_turn(self, session_id: str, text: str) -> dict:
        try:
            return self._unwrap(
                self.client.post(f"{self.base_url}/sessions/{session_id}/turns", json={"text": text})
            )
        except httpx.HTTPError as exc:
            raise ConnectError(str(exc)) from exc


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--backend", type=click.Choice(["scripted", "remote"]), default=None)
@click.option("--script", "script_file", type=click.Path(exists=True), default=None)
@click.option("--storage", "storage_dir", type=click.Path(), default=None)
@click.option("--service-url", default=None, help="Talk to a running service instead of embedding one.")
@click.option("--resume", "resume_id", default=None, help="Resume a stored session by id.")
def interactive(config_path, backend, script_file, storage_dir, service_url, resume_id):
    """Run a consultation in the terminal (one line per user turn)."""
    try:
        if service_url:
            client = _HttpClient(service_url)
        else:
            config = _load_config(
                config_path, backend=backend, script_file=script_file, storage_dir=storage_dir
            )
            client = _EmbeddedClient(config)

        if resume_id:
            session_id = resume_id
            view = client.resume(session_id)
            state = view["state"]
            click.echo(f"resumed session {session_id} in state {state}")
        else:
            session_id = client.create_session()
            state = ScenarioState.Icebreaker.value
            click.echo(f"session {session_id} started")

        click.echo(f"[{state}] ご用件をどうぞ (Ctrl-D で終了)")
        while state != ScenarioState.End.value:
            try:
                text = input("you> ")
            except EOFError:
                click.echo(f"\nsession {session_id} paused; resume with --resume {session_id}")
                return
            if not text.strip():
                continue
            try:
                turn = client.post_turn(session_id, text)
            except SessionEnded:
                break
            state = turn["state"]
            click.echo(f"sys> {turn['system_text']}")
            if turn["motions"]:
                kinds = ", ".join(m["kind"] for m in turn["motions"])
                click.echo(f"     (motions: {kinds})")
            for cand in turn["candidates"]:
                distance = ""
                if cand.get("distance_km") is not None:
                    distance = f" / 1か所目から {cand['distance_km']:.1f}km"
                click.echo(f"     - {cand['name']} ({cand['image_ref']}){distance}")
            click.echo(f"[{state}]")
            if turn.get("plan"):
                plan = turn["plan"]
                click.echo(
                    "plan: "
                    f"{plan['first_spot']} -> {plan['second_spot']} "
                    f"({plan['inter_spot_distance']:.2f} km)"
                )
        click.echo("ありがとうございました。")
    except ConnectError as exc:
        click.echo(f"connection failed: {exc}", err=True)
        sys.exit(EXIT_CONNECT)
    except BackendUnavailable as exc:
        click.echo(f"backend unavailable: {exc}", err=True)
        sys.exit(EXIT_CONNECT)
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)


# -- personas ------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--persona", "persona_file", type=click.Path(exists=True), default=None)
@click.option("--runs", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--threshold-km", type=float, default=None)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Write sessions.csv, metrics.csv and figures here.")
@click.option("--storage", "storage_dir", type=click.Path(), default=None,
              help="Store for the simulated sessions (default: a fresh subdir of --out-dir or temp).")
def personas(config_path, persona_file, runs, seed, threshold_km, out_dir, storage_dir):
    """Simulate scripted persona sessions and print the plan metric."""
    import tempfile

    try:
        config = _load_config(config_path, threshold_km=threshold_km)
        persona = Persona.from_file(persona_file) if persona_file else Persona()
        if storage_dir is None:
            storage_dir = (
                str(Path(out_dir) / "sessions") if out_dir
                else tempfile.mkdtemp(prefix="tourdesk-personas-")
            )
        config.storage_dir = storage_dir
        backend = PersonaBackend(persona, random.Random(seed))
        orch = Orchestrator.from_config(config, backend=backend)
        report, summaries = run_personas(orch, persona, runs, seed=seed)
        click.echo(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
        if out_dir:
            for path in write_report(summaries, report, out_dir):
                click.echo(f"wrote {path}")
    except (StorageError, OSError, ValueError) as exc:
        click.echo(f"persona run failed: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)


# -- metrics over an existing store --------------------------------------------


@main.command()
@click.option("--storage", "storage_dir", type=click.Path(exists=True), required=True)
@click.option("--threshold-km", type=float, default=10.0, show_default=True)
def metrics(storage_dir, threshold_km):
    """Compute the plan metric over a stored session directory."""
    try:
        report = compute_metrics(SessionStore(storage_dir), threshold_km)
    except StorageError as exc:
        click.echo(f"cannot read store: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)
    click.echo(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))


# -- validation -----------------------------------------------------------------


@main.command()
@click.option("--catalog", "catalog_file", type=click.Path(), default=None)
@click.option("--profile", "profile_file", type=click.Path(), default=None)
@click.option("--keyword-lexicon", "lexicon_file", type=click.Path(), default=None)
def validate(catalog_file, profile_file, lexicon_file):
    """Check data files; exit 1 when any finding is reported."""
    config = Config.from_env()
    findings = validate_catalog(catalog_file or config.catalog_file)
    findings += _validate_profile(profile_file)
    findings += _validate_lexicon(lexicon_file)
    for finding in findings:
        click.echo(f"finding: {finding}")
    click.echo(f"{len(findings)} finding(s)")
    sys.exit(EXIT_FINDINGS if findings else EXIT_OK)


def _validate_profile(path: str | None) -> list[str]:
    try:
        profile = load_profile(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return [f"emphasis profile: {exc}"]
    findings = []
    for level in (1, 2, 3):
        if level not in profile.levels:
            findings.append(f"emphasis profile: missing level {level}")
    if not findings:
        for low, high in ((1, 2), (2, 3)):
            a, b = profile.for_level(low), profile.for_level(high)
            if not (abs(b.volume_delta) > abs(a.volume_delta)):
                findings.append(f"emphasis profile: |volume_delta| must grow from level {low} to {high}")
            if not (b.pause_before_ms > a.pause_before_ms and b.pause_after_ms > a.pause_after_ms):
                findings.append(f"emphasis profile: pauses must grow from level {low} to {high}")
    return findings


def _validate_lexicon(path: str | None) -> list[str]:
    from .generation import load_keyword_lexicon

    try:
        lexicon = load_keyword_lexicon(path)
    except (OSError, ValueError) as exc:
        return [f"keyword lexicon: {exc}"]
    findings = []
    if not isinstance(lexicon, dict) or not lexicon:
        findings.append("keyword lexicon: must be a non-empty object")
        return findings
    for surface, genre in lexicon.items():
        if not isinstance(genre, str) or not genre:
            findings.append(f"keyword lexicon: entry {surface!r} must map to a genre name")
        if not surface.strip():
            findings.append("keyword lexicon: empty surface form")
    return findings


# -- misc -----------------------------------------------------------------------


@main.command("export-transitions")
@click.option("-o", "--output", type=click.Path(), default=None)
def export_transitions(output):
    """Write the scenario transition table as JSON."""
    doc = json.dumps(transition_table(), ensure_ascii=False, indent=2)
    if output:
        Path(output).write_text(doc + "\n", encoding="utf-8")
        click.echo(f"wrote {output}")
    else:
        click.echo(doc)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--frontend-dir", type=click.Path(), default=None)
def serve(config_path, host, port, frontend_dir):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = _load_config(config_path)
    app = create_app(config=config, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
