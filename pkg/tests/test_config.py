import pytest

from sfcodel.config import ConfigError, load_config, load_text, parse_override, preset_names

BASE = """\
run: {duration_s: 2, seed: 3}
workload: {request_size: 4096, queue_depth: 16}
backend: {}
admission: {kind: unlimited}
"""


def test_defaults_fill_in():
    cfg = load_text(BASE)
    assert cfg["run"]["warmup_s"] == pytest.approx(0.2)
    assert cfg["backend"]["batch_max"] == 64
    assert cfg["workload"]["phases"] == [{"duration_s": 2.0, "request_size": 4096, "queue_depth": 16}]
    assert cfg.duration_us == 2_000_000


def test_missing_backend_section():
    with pytest.raises(ConfigError, match="backend"):
        load_text(BASE.replace("backend: {}\n", ""))


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        load_text(BASE.replace("backend: {}", "backend: {bogus: 1}"), source="s.yaml")
    assert exc.value.line == 3
    assert "s.yaml:3" in str(exc.value)


def test_parse_error_reports_line():
    with pytest.raises(ConfigError) as exc:
        load_text(BASE + "output: [unclosed\n")
    assert exc.value.line is not None


@pytest.mark.parametrize("edit", [
    ("duration_s: 2", "duration_s: 2, warmup_s: 2"),
    ("kind: unlimited", "kind: sf_codel"),
    ("kind: unlimited", "kind: static"),
    ("kind: unlimited", "kind: magic"),
    ("queue_depth: 16", "queue_depth: 0"),
    ("request_size: 4096", "request_size: big"),
])
def test_validation_errors(edit):
    with pytest.raises(ConfigError):
        load_text(BASE.replace(*edit))


def test_overrides_reresolve_derived_defaults():
    cfg = load_text(BASE.replace("kind: unlimited", "kind: qba_codel"))
    assert cfg["admission"]["budget_min"] == 4096
    cfg2 = cfg.with_overrides({"workload.request_size": 65536})
    assert cfg2["admission"]["budget_min"] == 65536
    assert cfg2["workload"]["phases"][0]["request_size"] == 65536
    with pytest.raises(ConfigError):
        cfg.with_overrides({"admission.nope": 1})


def test_parse_override_types():
    assert parse_override("a.b=5") == ("a.b", 5)
    assert parse_override("a.b=0.5") == ("a.b", 0.5)
    assert parse_override("a.b=sf_codel") == ("a.b", "sf_codel")
    with pytest.raises(ConfigError):
        parse_override("nothing")


def test_output_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SFCODEL_OUTPUT_DIR", str(tmp_path))
    assert load_text(BASE)["output"]["dir"] == str(tmp_path)


def test_presets_load():
    names = preset_names()
    assert set(names) >= {"bloat_probe", "4k_baseline", "4k_sfcodel", "64k_sfcodel", "workload_switch", "slope_sweep"}
    for n in names:
        assert load_config(f"presets/{n}")["run"]["duration_s"] > 0


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("does/not/exist.yaml")
