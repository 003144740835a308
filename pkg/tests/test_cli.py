import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from bedwatch.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def write_compose(path: Path, workdir: Path, duration=8, fault_lines="", control_lines=""):
    key_hex = bytes(range(32)).hex()
    path.write_text(f"""
[compose]
workdir = "{workdir}"
duration_s = {duration}

[[cart]]
cart_id = "c1"
room_id = "R1"
key_id = "key-c1"
key_hex = "{key_hex}"

[[cart.sensor]]
sensor_id = "noise0"
modality = "NOISE"
seed = 5

[[cart.sensor]]
sensor_id = "light0"
modality = "LIGHT"
seed = 6

{fault_lines}
{control_lines}
""")


class TestConfigErrors:
    def test_missing_config_exit_2(self, runner):
        result = runner.invoke(main, ["edge", "run", "--config", "/nope/cart.toml"])
        assert result.exit_code == 2
        assert "not found" in result.output

    def test_bad_field_named_in_message(self, runner, tmp_path):
        cfg = tmp_path / "cart.toml"
        cfg.write_text("[cart]\ncart_id = \"c1\"\n")
        result = runner.invoke(main, ["edge", "run", "--config", str(cfg)])
        assert result.exit_code == 2
        assert "cart.room_id" in result.output

    def test_bad_key_hex_named(self, runner, tmp_path):
        cfg = tmp_path / "broker.toml"
        cfg.write_text("[broker]\nport = 1\ndata_dir = \"d\"\n[tls]\ncreds_dir = \"x\"\n")
        result = runner.invoke(main, ["broker", "run", "--config", str(cfg)])
        # creds dir missing -> runtime fault, not config parse error
        assert result.exit_code == 3

    def test_bad_compose_fault_kind(self, runner, tmp_path):
        cfg = tmp_path / "compose.toml"
        write_compose(cfg, tmp_path / "w", fault_lines="""
[[fault]]
kind = "meteor-strike"
cart_id = "c1"
at_s = 1
""")
        result = runner.invoke(main, ["simrun", "--config", str(cfg)])
        assert result.exit_code != 0

    def test_unknown_accept_criterion(self, runner):
        result = runner.invoke(main, ["accept", "--criterion", "99"])
        assert result.exit_code == 2


class TestSimrunCommand:
    def test_simrun_reports_zero_loss(self, runner, tmp_path):
        cfg = tmp_path / "compose.toml"
        write_compose(cfg, tmp_path / "work", duration=10, fault_lines="""
[[fault]]
kind = "net-down"
cart_id = "c1"
at_s = 2
duration_s = 3
""")
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["simrun", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert report["zero_loss"] is True
        assert report["enqueued"] == report["stored"] > 0
        assert report["manifest_duplicates"] == 0

    def test_simrun_with_controls_pause_gap(self, runner, tmp_path):
        cfg = tmp_path / "compose.toml"
        write_compose(cfg, tmp_path / "work", duration=12, control_lines="""
[[control]]
at_s = 4
cart_id = "c1"
command = "pause"

[[control]]
at_s = 8
cart_id = "c1"
command = "start"
""")
        result = runner.invoke(main, ["simrun", "--config", str(cfg)])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        # roughly 4 of 12 seconds are paused, for two sensors
        assert report["enqueued"] <= 2 * 9


class TestKeygen:
    def test_writes_ca_and_identities(self, runner, tmp_path):
        out = tmp_path / "creds"
        result = runner.invoke(
            main, ["keygen", "--out", str(out), "--identities", "broker,server,c1"]
        )
        assert result.exit_code == 0
        for name in ("ca.pem", "broker.pem", "broker.key", "server.pem", "c1.pem"):
            assert (out / name).exists()

    def test_empty_identities_config_error(self, runner, tmp_path):
        result = runner.invoke(main, ["keygen", "--out", str(tmp_path), "--identities", " , "])
        assert result.exit_code == 2


class TestSignalShutdown:
    def test_broker_run_sigterm_exits_zero(self, runner, tmp_path):
        import signal
        import subprocess
        import sys
        import time

        from bedwatch.transport import generate_credentials

        creds = tmp_path / "creds"
        generate_credentials(creds, ["broker"])
        cfg = tmp_path / "broker.toml"
        cfg.write_text(f"""
[broker]
host = "127.0.0.1"
port = 0
data_dir = "{tmp_path / 'data'}"
[tls]
creds_dir = "{creds}"
""")
        proc = subprocess.Popen(
            [sys.executable, "-m", "bedwatch.cli", "broker", "run", "--config", str(cfg)],
            stderr=subprocess.PIPE,
        )
        deadline = time.time() + 15
        while time.time() < deadline and not (tmp_path / "data" / "queues").exists():
            time.sleep(0.1)
        time.sleep(0.3)
        proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=10) == 0


class TestScaffold:
    def test_scaffold_layout(self, runner, tmp_path):
        out = tmp_path / "deploy"
        result = runner.invoke(main, ["scaffold", "--out", str(out), "--carts", "2"])
        assert result.exit_code == 0, result.output
        for name in ("broker.toml", "server.toml", "cart_c1.toml", "cart_c2.toml",
                     "clinical_feed.jsonl", "creds/ca.pem"):
            assert (out / name).exists(), name

    def test_scaffolded_configs_parse(self, runner, tmp_path):
        from bedwatch.config import BrokerConfig, CartConfig, ServerConfig

        out = tmp_path / "deploy"
        runner.invoke(main, ["scaffold", "--out", str(out), "--carts", "1"])
        assert BrokerConfig.load(out / "broker.toml").port > 0
        assert CartConfig.load(out / "cart_c1.toml").cart_id == "c1"
        server = ServerConfig.load(out / "server.toml")
        assert server.key_table() and server.carts[0].cart_id == "c1"
