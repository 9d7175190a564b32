from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest
from referencing import Registry, Resource

from brbo.syntax import parse_program

CORPUS = sorted(f.name for f in (resources.files("brbo") / "corpus").iterdir() if f.name.endswith(".brbo"))


def corpus_text(name: str) -> str:
    return (resources.files("brbo") / "corpus" / name).read_text()


def load(name: str):
    return parse_program(corpus_text(name))


SCHEMAS = Path(__file__).resolve().parent.parent / "docs" / "schemas"


def _registry() -> Registry:
    reg = Registry()
    for f in sorted(SCHEMAS.glob("*.schema.json")):
        reg = reg.with_resource(f.name, Resource.from_contents(json.loads(f.read_text())))
    return reg


REGISTRY = _registry()


def validate(data, schema_name: str) -> None:
    """Validate ``data`` against a shipped schema, resolving cross-file refs."""
    schema = REGISTRY.contents(schema_name)
    jsonschema.Draft202012Validator(schema, registry=REGISTRY).validate(data)


FIG2A_INPUTS = ("#ts", "#text", "#tags", "ts#rep", "#sep")


@pytest.fixture(scope="session")
def fig2a():
    return load("fig2a.brbo")


@pytest.fixture(scope="session")
def fig2b():
    return load("fig2b.brbo")


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
