# tests/test_cli_main.py
from __future__ import annotations

import json
import logging
from pathlib import Path

import pytest

import skewlab.cli as cli_mod
import skewlab.settings as settings


def _reset_runtime() -> None:
    settings._CTX = settings.RuntimeContext()  # type: ignore[attr-defined]
    settings._CONFIG_CACHE.clear()  # type: ignore[attr-defined]


def _main(argv: list[str]) -> int:
    try:
        return cli_mod.main(argv)
    finally:
        # handlers bind the captured stderr of the current test
        root = logging.getLogger("skewlab")
        for h in [h for h in root.handlers if getattr(h, "_skewlab", False)]:
            root.removeHandler(h)


def _config(tmp_path: Path, extra: str = "") -> Path:
    yml = tmp_path / "skewlab.yml"
    yml.write_text(
        f"""
partition-settings:
  verify_samples: 2000
run-settings:
  seed: 5
  output_dir: out
{extra}
""".strip()
        + "\n",
        encoding="utf-8",
    )
    return yml


def test_list_fixtures(capsys: pytest.CaptureFixture[str]) -> None:
    assert _main(["list-fixtures"]) == 0
    out = capsys.readouterr().out
    assert "product" in out
    assert "isometric-control" in out


def test_init_respects_force(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    target = tmp_path / "skewlab.yml"

    assert _main(["init", "coupled", "--path", str(target)]) == 0
    assert "Created config file" in capsys.readouterr().out

    assert _main(["init", "product", "--path", str(target)]) == 2
    err = capsys.readouterr().err
    assert "already exists" in err
    assert "--force" in err

    assert _main(["init", "product", "--path", str(target), "--force"]) == 0
    assert "Overwrote config file" in capsys.readouterr().out


def test_invalid_system_exits_with_2(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _reset_runtime()
    yml = _config(tmp_path, "system-settings:\n  kappa: 1.5")

    assert _main(["properties", "--config", str(yml), "--quiet"]) == 2
    assert "skewlab: error: fiber not diffeo" in capsys.readouterr().err


def test_bad_config_exits_with_2(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _reset_runtime()
    yml = _config(tmp_path, "system-settings:\n  kapa: 0.5")

    assert _main(["verify-partition", "--config", str(yml), "--quiet"]) == 2
    assert "unknown key 'kapa'" in capsys.readouterr().err


def test_bad_seed_exits_with_2(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _reset_runtime()
    yml = _config(tmp_path)

    assert _main(["verify-partition", "--config", str(yml), "--seed", "-3", "--quiet"]) == 2
    assert "unsigned 64-bit" in capsys.readouterr().err


@pytest.mark.integration
def test_verify_partition_writes_deterministic_results(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _reset_runtime()
    yml = _config(tmp_path)

    assert _main(["verify-partition", "--config", str(yml), "--quiet"]) == 0
    assert "verify-partition: passed" in capsys.readouterr().out
    first = tmp_path / "out" / "verify-partition"
    assert sorted(p.name for p in first.iterdir()) == [
        "provenance.json",
        "rectangles.csv",
        "summary.json",
        "transitions.csv",
    ]

    assert _main(["verify-partition", "--config", str(yml), "--quiet", "--output-dir", str(tmp_path / "again")]) == 0
    second = tmp_path / "again" / "verify-partition"
    for name in ("summary.json", "rectangles.csv", "transitions.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()

    prov = json.loads((first / "provenance.json").read_text(encoding="utf-8"))
    assert prov["seed"] == 5
    assert prov["config_source"] == "skewlab.yml"
    assert prov["config"]["partition-settings"]["verify_samples"] == 2000


@pytest.mark.integration
def test_failed_check_exits_with_1(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _reset_runtime()
    yml = tmp_path / "skewlab.yml"
    yml.write_text(
        "partition-settings:\n  refine: 0\n  verify_samples: 2000\nrun-settings:\n  output_dir: out\n",
        encoding="utf-8",
    )

    assert _main(["verify-partition", "--config", str(yml), "--quiet"]) == 1
    out = capsys.readouterr().out
    assert "verify-partition: FAILED" in out
    assert "FAIL markov" in out


@pytest.mark.parametrize("lab", ["hitting", "ldp"])
def test_isometric_control_is_rejected_before_any_output(
    lab: str, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    _reset_runtime()
    out = tmp_path / "out"

    assert _main([lab, "--fixture", "isometric-control", "--output-dir", str(out), "--quiet"]) == 2
    assert "skewlab: error: system is not c-mostly contracting" in capsys.readouterr().err
    assert not (out / lab).exists()


_SMALL_COUPLED = """
system-settings:
  kappa: 0.5
  delta: 0.05
  alpha: 0.0
sampling-settings:
  n_particles: 20000
  n_iterates: 20
  burn_in: 10
  chunks: 2
hitting-settings:
  exact_n: [4, 5, 6, 7, 8]
  mc_n: [10, 12]
  n_samples: 20000
ldp-settings:
  n_values: [5, 10, 20]
  n_samples: 20000
  stride: 1
  iid_control: false
  reference_tail: false
  cumulant_n_max: 4
""".strip()


def _summary(tmp_path: Path, lab: str) -> dict:
    return json.loads((tmp_path / "out" / lab / "summary.json").read_text(encoding="utf-8"))


@pytest.mark.integration
def test_hitting_on_the_coupled_system_fits_a_rate(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _reset_runtime()
    yml = _config(tmp_path, _SMALL_COUPLED)

    code = _main(["hitting", "--config", str(yml), "--quiet"])
    summary = _summary(tmp_path, "hitting")

    assert code == (0 if summary["passed"] else 1)
    assert summary["values"]["center_exponent"]["mostly_contracting"] is True
    assert summary["values"]["center_exponent"]["fiber"] < 0.0
    assert summary["values"]["markov"]["violations"] == 0
    assert "rate_fit" in summary["values"]
    assert (tmp_path / "out" / "hitting" / "series.csv").is_file()


@pytest.mark.integration
def test_ldp_on_the_coupled_system_splits_the_cumulant_rows(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _reset_runtime()
    yml = _config(tmp_path, _SMALL_COUPLED)

    code = _main(["ldp", "--config", str(yml), "--quiet"])
    summary = _summary(tmp_path, "ldp")

    assert code == (0 if summary["passed"] else 1)
    assert summary["values"]["center_exponent"]["mostly_contracting"] is True
    cumulant = summary["values"]["cumulant"]
    assert cumulant["fit_depth"] == 2
    assert cumulant["beyond_fit"] == 2
    assert cumulant["observable"].startswith("cos_theta")
    assert "cumulant_bound" in summary["checks"]

    table = (tmp_path / "out" / "ldp" / "cumulant.csv").read_text(encoding="utf-8").splitlines()
    assert table[0] == "n,lhs,bound,holds,cylinders,in_fit"
    assert len(table) == 5
