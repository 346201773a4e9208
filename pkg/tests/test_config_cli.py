import json
import math
from pathlib import Path

import numpy as np
import pytest

from optocool.cli import main
from optocool.config import (
    parse_override,
    parse_value,
    physical_from_section,
    read_config,
    sweep_from_config,
)
from optocool.model import ValidationError
from optocool.sweep import fig2_physical

CONFIGS = Path(__file__).resolve().parents[1] / "docs" / "configs"


class TestParseValue:
    def test_plain(self):
        assert parse_value("2.5") == 2.5
        assert parse_value("1, 2,3") == [1.0, 2.0, 3.0]

    def test_units(self):
        assert parse_value("1 Hz", "freq") == pytest.approx(2 * math.pi)
        assert parse_value("20 MHz", "freq") == pytest.approx(2 * math.pi * 20e6)
        assert parse_value("4 uW", "power") == pytest.approx(4e-6)
        assert parse_value("0.5 pi", "angle") == pytest.approx(0.5 * math.pi)
        assert parse_value("1, 2 kHz", "freq") == pytest.approx([2e3 * math.pi, 4e3 * math.pi])

    def test_single_element_list(self):
        assert parse_value("3,") == [3.0]

    @pytest.mark.parametrize("text,kind", [("1 uW", "freq"), ("1 furlong", None),
                                           ("abc", None), ("1 Hz", "w1")])
    def test_rejects(self, text, kind):
        with pytest.raises(ValidationError):
            parse_value(text, kind)


class TestConfigFiles:
    def test_fig2_file_matches_builtin(self):
        p = physical_from_section(read_config(str(CONFIGS / "fig2_meanfield.ini")))
        ref = fig2_physical()
        for k, v in ref.__dict__.items():
            np.testing.assert_allclose(getattr(p, k), v, rtol=1e-12, err_msg=k)

    def test_sweep_file(self):
        spec = sweep_from_config(read_config(str(CONFIGS / "fig5_chi10.ini")))
        assert not spec.required
        assert spec.base.kappa1 == 20.0 and spec.base.chi_mag == 10.0
        assert spec.axis1.values[0] == 0.2 and spec.axis1.values.size == 61
        assert "xi" in spec.outputs

    def test_unknown_key(self):
        with pytest.raises(ValidationError) as info:
            physical_from_section(read_config("[physical]\nomegaa = 1\n"))
        assert info.value.field == "omegaa"

    def test_missing_key(self):
        with pytest.raises(ValidationError):
            physical_from_section(read_config("[physical]\nomega = 1, 1\n"))

    def test_overrides(self):
        assert parse_override("Lambda[3]=0.08") == ("Lambda[3]", 0.08)
        assert parse_override("kappa1=1 MHz", "physical")[1] == pytest.approx(2e6 * math.pi)
        with pytest.raises(ValidationError):
            parse_override("kappa1")
        with pytest.raises(ValidationError):
            parse_override("bogus=1")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCLI:
    def test_preset_list(self, capsys):
        code, out, _ = run(capsys, "preset", "list")
        assert code == 0
        assert [l.split("\t")[0] for l in out.splitlines()] == \
            ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7"]

    def test_preset_show(self, capsys):
        code, out, _ = run(capsys, "preset", "show", "fig6")
        rec = json.loads(out)
        assert code == 0 and rec["required"] == ["kappa1", "chi_mag"]
        code, out, _ = run(capsys, "preset", "show", "fig2")
        assert code == 0 and json.loads(out)["physical"]["P1"] == 4e-6

    def test_cool_config(self, capsys):
        code, out, _ = run(capsys, "cool", "--config", str(CONFIGS / "three_modes.ini"),
                           "--format", "json", "--darkmode")
        rec = json.loads(out)
        assert code == 0 and rec["stable"]
        assert rec["darkmode"]["dark_pairs"] == [[2, 3]]

    def test_sweep_csv(self, capsys, tmp_path):
        out = tmp_path / "s.csv"
        code, _, _ = run(capsys, "sweep", "--preset", "fig5", "--set", "kappa1=20",
                         "--set", "chi_mag=10", "--grid", "5", "--out", str(out))
        lines = out.read_text().splitlines()
        assert code == 0 and len(lines) == 6
        assert lines[0].startswith("Lambda[2]/Lambda[1],stable")

    def test_sweep_config_file(self, capsys):
        code, out, _ = run(capsys, "sweep", "--config", str(CONFIGS / "fig5_chi10.ini"),
                           "--grid", "5")
        assert code == 0 and len(out.splitlines()) == 62

    def test_missing_required_is_validation_error(self, capsys):
        code, _, err = run(capsys, "sweep", "--preset", "fig6")
        assert code == 2 and "kappa1" in err

    def test_bad_override(self, capsys):
        assert run(capsys, "cool", "--preset", "fig5", "--set", "kappa1=-1",
                   "--set", "chi_mag=0")[0] == 2

    def test_unstable_strict(self, capsys):
        args = ("cool", "--preset", "fig5", "--set", "kappa1=2", "--set", "chi_mag=3")
        assert run(capsys, *args)[0] == 0
        assert run(capsys, *args, "--strict")[0] == 3
        sweep = ("sweep", "--preset", "fig5", "--set", "kappa1=2", "--set", "chi_mag=3",
                 "--grid", "3", "--strict")
        assert run(capsys, *sweep)[0] == 3

    def test_meanfield_default(self, capsys):
        code, out, _ = run(capsys, "meanfield", "--preset", "fig2", "--format", "json")
        rec = json.loads(out)
        assert code == 0 and rec["converged"] and rec["residual_norm"] <= 1e-8
        assert rec["effective"]["omega"] == [1.0, 1.0]

    def test_meanfield_power_sweep(self, capsys):
        code, out, _ = run(capsys, "meanfield", "--preset", "fig2", "--powers", "0,4e-6,5")
        lines = out.splitlines()
        assert code == 0 and len(lines) == 6
        assert lines[1].startswith("0,0,0")

    def test_meanfield_nonconvergence_exit(self, capsys, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text((CONFIGS / "fig2_meanfield.ini").read_text()
                       + "max_iterations = 1\n")
        code, _, _ = run(capsys, "meanfield", "--config", str(cfg))
        assert code == 4

    def test_darkmode_csv(self, capsys):
        code, out, _ = run(capsys, "darkmode", "--format", "csv", "--preset", "fig7",
                           "--set", "kappa1=0.1",
                           "--set", "chi_mag=0", "--set", "Lambda[4]=0.18")
        rows = out.splitlines()
        assert code == 0 and len(rows) == 7
        dark = [r.split(",")[:2] for r in rows[1:] if r.endswith("true")]
        assert dark == [["3", "4"]]

    def test_module_entry(self):
        import subprocess
        import sys
        r = subprocess.run([sys.executable, "-m", "optocool", "preset", "list"],
                           capture_output=True, text=True)
        assert r.returncode == 0 and "fig7" in r.stdout
