# tests/test_fixtures.py
from __future__ import annotations

from pathlib import Path

import pytest

from skewlab.config import validate_config
from skewlab.fixtures import fixture_names, fixture_text, get_fixture, write_fixture
from skewlab.settings import parse_yaml_text


def test_every_fixture_is_a_valid_config() -> None:
    assert fixture_names() == ["product", "coupled", "isometric-control"]
    for name in fixture_names():
        cfg = parse_yaml_text(fixture_text(name), f"<fixture:{name}>")
        validate_config(cfg)
        assert "system-settings" in cfg.data


def test_fixture_parameters() -> None:
    product = parse_yaml_text(fixture_text("product"), "product").data
    isometric = parse_yaml_text(fixture_text("isometric-control"), "iso").data

    assert product["system-settings"]["delta"] == 0.0
    assert isometric["system-settings"]["kappa"] == 0.0
    assert 0.0 < isometric["system-settings"]["alpha"] < 1.0


def test_unknown_fixture() -> None:
    with pytest.raises(ValueError, match="unknown fixture"):
        get_fixture("chaotic")


def test_write_fixture_refuses_to_overwrite(tmp_path: Path) -> None:
    target = tmp_path / "nested" / "skewlab.yml"

    first = write_fixture("coupled", target)
    assert first.created and not first.overwritten
    assert target.read_text(encoding="utf-8") == fixture_text("coupled")

    with pytest.raises(FileExistsError, match="already exists"):
        write_fixture("product", target)

    again = write_fixture("product", target, force=True)
    assert again.overwritten and not again.created
    assert "fixture: product" in target.read_text(encoding="utf-8")
