import sys

import pytest

from envalign.config import ENV_VAR, ConfigError, ToolConfig, load_config, parse_config_text
from envalign.executor import DEFAULT_LAUNCH_CMD, Phase


def test_defaults_without_file():
    cfg = load_config(environ={})
    assert cfg == ToolConfig()
    loop = cfg.loop_config()
    assert loop.budget == 4 and loop.reviser_cmd is None and loop.normalizer_cmd is None
    assert loop.exec.launch_cmd == list(DEFAULT_LAUNCH_CMD)
    assert [p for p in loop.exec.enabled_phases] == [Phase.INSTALL, Phase.LAUNCH, Phase.TEST]


def test_default_install_is_offline():
    install = ToolConfig().exec_config().install_cmd
    assert install[install.index("--local-index") + 1] == "bundled"
    online = ToolConfig(online_install=True).exec_config().install_cmd
    assert "--local-index" not in online


def test_file_values(tmp_path):
    p = tmp_path / "envalign.toml"
    p.write_text('budget = 6\ntimeout = 30\nphases = ["install", "launch"]\n'
                 'reviser_cmd = "{python} fix.py --fast"\ntest_cmd = false\n')
    cfg = load_config(str(p), environ={})
    assert cfg.budget == 6 and cfg.timeout == 30.0 and cfg.phases == ("install", "launch")
    loop = cfg.loop_config()
    assert loop.reviser_cmd == ["{python}", "fix.py", "--fast"]
    assert loop.exec.enabled_phases == [Phase.INSTALL, Phase.LAUNCH]


def test_environment_variable_is_used(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("budget = 2\n")
    assert load_config(environ={ENV_VAR: str(p)}).budget == 2


def test_flags_override_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("budget = 2\ntimeout = 9.5\n")
    cfg = load_config(str(p), environ={}).with_overrides(budget=7, timeout=None)
    assert cfg.budget == 7 and cfg.timeout == 9.5


@pytest.mark.parametrize("text", [
    "bugdet = 3\n",                # unknown key
    "budget = \"three\"\n",        # wrong type
    "budget = 0\n",                # out of range
    "phases = [\"deploy\"]\n",     # unknown phase
    "[loop]\nbudget = 3\n",        # nested table
    "workspace_policy = \"elsewhere\"\n",
    "budget = \n",                 # not TOML
])
def test_invalid_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_file_is_an_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.toml"), environ={})


def test_unknown_override_rejected():
    with pytest.raises(ConfigError):
        ToolConfig().with_overrides(colour="red")


def test_name_table_overrides(tmp_path):
    stdlib = tmp_path / "stdlib.txt"
    stdlib.write_text("# tiny\nos\nsys\n")
    aliases = tmp_path / "aliases.json"
    aliases.write_text('{"fancy": "fancy-dist"}')
    loop = ToolConfig(stdlib_override=str(stdlib), alias_table=str(aliases)).loop_config()
    assert loop.stdlib == frozenset({"os", "sys"})
    assert loop.aliases["fancy"] == "fancy-dist" and loop.aliases["yaml"] == "pyyaml"


def test_argv_list_command(tmp_path):
    cfg = parse_config_text(f'launch_cmd = ["{sys.executable}", "run.py"]\n')
    assert cfg.exec_config().launch_cmd == [sys.executable, "run.py"]
