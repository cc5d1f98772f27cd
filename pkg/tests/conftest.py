import json

import pytest

from tourdesk.backends import ScriptedBackend
from tourdesk.catalog import load_catalog
from tourdesk.config import DATA_DIR, Config
from tourdesk.orchestrator import Orchestrator
from tourdesk.store import SessionStore

CATALOG_FILE = DATA_DIR / "kyoto_spots.json"
DEMO_SCRIPT_FILE = DATA_DIR / "demo_script.json"

# The canonical happy path: 12 user turns against the demo script, ending with
# a kinkakuji + shimogamo plan.
HAPPY_PATH_TURNS = [
    "こんにちは",
    "あはは、楽しみにしてきました",
    "お寺が見たいです",
    "静かで庭がきれいなところがいいです",
    "お願いします",
    "金閣寺について詳しく",
    "金閣寺にします",
    "神社がいいです",
    "静かにお参りできるところで",
    "お願いします",
    "下鴨神社にします",
    "それでお願いします",
]


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(CATALOG_FILE)


@pytest.fixture()
def demo_backend():
    return ScriptedBackend.from_file(DEMO_SCRIPT_FILE)


@pytest.fixture()
def make_orchestrator(tmp_path, catalog):
    """Factory for orchestrators with an isolated store and a given backend."""
    counter = {"n": 0}

    def factory(backend=None, config=None, table=None):
        counter["n"] += 1
        cfg = config or Config()
        cfg.storage_dir = str(tmp_path / f"store{counter['n']}")
        if backend is None:
            backend = (
                ScriptedBackend(table) if table is not None
                else ScriptedBackend.from_file(DEMO_SCRIPT_FILE)
            )
        return Orchestrator(
            catalog=catalog,
            store=SessionStore(cfg.storage_dir),
            backend=backend,
            config=cfg,
        )

    return factory


def load_demo_table() -> dict[str, str]:
    return json.loads(DEMO_SCRIPT_FILE.read_text(encoding="utf-8"))
