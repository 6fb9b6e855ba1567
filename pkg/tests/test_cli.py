import json
import math
from pathlib import Path

import pytest

from optolqg.cli import main
from optolqg.sweep import read_rows


def write_config(path, body):
    path.write_text(body)
    return str(path)


def parse_fields(out):
    fields = {}
    for line in out.splitlines():
        if " = " in line or line.endswith(" ="):
            key, _, val = line.partition(" =")
            fields[key] = val[1:] if val.startswith(" ") else val
    return fields


BASE_CONFIG = """
[params]
omega_m = 1.0e6
q_m = 1.0e8
kappa = 1.0e8
g = 1.0e5
eta = 1.0
theta = 1.5707963267948966
temperature = 300.0
model = "nonrwa"

[cost]
kind = "cooling"
p = 1.0e10
q = 1.0
"""


class TestPoint:
    def test_prints_row(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", BASE_CONFIG)
        assert main(["point", "--config", cfg]) == 0
        fields = parse_fields(capsys.readouterr().out)
        assert float(fields["n_conditional"]) > 0
        assert fields["model"] == "nonrwa"
        assert fields["error"] == ""

    def test_flag_overrides(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", BASE_CONFIG)
        assert main(["point", "--config", cfg, "--g", "0"]) == 0
        fields = parse_fields(capsys.readouterr().out)
        assert float(fields["g"]) == 0.0
        assert float(fields["n_conditional"]) == pytest.approx(
            float(fields["nbar"]), rel=1e-9)

    def test_cyclic_hz_conversion(self, capsys):
        assert main(["point", "--omega-m", "1.139e6", "--cyclic-hz",
                     "--g", "3.1e5", "--g0", "127"]) == 0
        fields = parse_fields(capsys.readouterr().out)
        assert float(fields["omega_m"]) == pytest.approx(2 * math.pi * 1.139e6)
        assert float(fields["g"]) == 3.1e5  # coupling stays verbatim
        assert "eps_probe" in fields

    def test_defaults_without_config(self, capsys):
        assert main(["point"]) == 0

    def test_csv_output(self, tmp_path):
        out = tmp_path / "row.csv"
        assert main(["point", "--output", str(out)]) == 0
        meta, rows = read_rows(out)
        assert len(rows) == 1 and rows[0].ok


class TestOptimize:
    def test_theta_weak_coupling(self, capsys):
        assert main(["optimize", "--which", "theta", "--g", "1e3",
                     "--objective", "conditional_phonon"]) == 0
        out = capsys.readouterr().out
        angle = float(out.splitlines()[0].split("=")[1])
        assert angle == pytest.approx(math.pi / 2, abs=0.02)


class TestSweep:
    def test_sweep_and_check(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", BASE_CONFIG + """
[sweep]
objective = "unconditional_phonon"
output = "unused.csv"

[sweep.grids]
g = { start = 1.0e4, stop = 1.0e6, num = 3, spacing = "log" }
""")
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", cfg, "--output", str(out)]) == 0
        _, rows = read_rows(out)
        assert len(rows) == 3
        assert main(["check", str(out)]) == 0
        capsys.readouterr()

    def test_check_flags_unphysical_rows(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", BASE_CONFIG + """
[sweep]
[sweep.grids]
g = [1.0e5]
""")
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", cfg, "--output", str(out)]) == 0
        doctored = out.read_text().replace(
            ",1,1,", ",0,1,", 1)  # clear physical_conditional on the row
        out.write_text(doctored)
        assert main(["check", str(out)]) == 3
        capsys.readouterr()


class TestTrajectory:
    def test_summary_and_dump(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", BASE_CONFIG + """
[trajectory]
ensemble = 120
seed = 3
sample_relaxations = 4.0
""")
        dump = tmp_path / "records.bin"
        out = tmp_path / "summary.json"
        assert main(["trajectory", "--config", cfg, "--dump", str(dump),
                     "--output", str(out)]) == 0
        summary = json.loads(out.read_text())
        assert summary["ensemble"] == 120
        assert "excess_covariance" in summary
        assert dump.exists()
        capsys.readouterr()


class TestExitCodes:
    def test_missing_config_is_config_error(self, capsys):
        assert main(["point", "--config", "/nonexistent.toml"]) == 2
        capsys.readouterr()

    def test_malformed_toml_is_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "bad.toml", "[params\nomega_m = ")
        assert main(["point", "--config", cfg]) == 2
        capsys.readouterr()

    def test_invalid_value_is_config_error(self, capsys):
        assert main(["point", "--eta", "2.0"]) == 2
        capsys.readouterr()

    def test_unknown_model_is_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml",
                           BASE_CONFIG.replace("nonrwa", "exact"))
        assert main(["point", "--config", cfg]) == 2
        capsys.readouterr()

    def test_bad_subcommand_usage(self):
        with pytest.raises(SystemExit) as err:
            main(["optimize"])  # --which is required
        assert err.value.code == 2


class TestShippedConfigs:
    def test_benchmark_sweep_config_parses_and_runs(self, tmp_path, capsys):
        cfg = Path(__file__).parent.parent / "configs" / \
            "fig8_feedback_strength.toml"
        out = tmp_path / "fig8.csv"
        assert main(["sweep", "--config", str(cfg), "--output", str(out)]) == 0
        _, rows = read_rows(out)
        assert len(rows) == 13
        sigmas = [r["sigma_fb"] for r in rows]
        assert all(b >= a for a, b in zip(sigmas, sigmas[1:]))
        capsys.readouterr()
