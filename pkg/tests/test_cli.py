import json

import pytest

from renewlab import cli


def test_constants_exit_zero(tmp_path, capsys):
    assert cli.main(["constants", "--outdir", str(tmp_path)]) == 0
    assert "[PASS]" in capsys.readouterr().out
    d = json.loads((tmp_path / "constants.json").read_text())
    assert d["schema_version"] == 1 and d["status"] == "PASS"


def test_config_error_exit(tmp_path, capsys):
    assert cli.main(["srt", "-s", "c1=1.5", "--outdir", str(tmp_path)]) == 3
    assert "c1" in capsys.readouterr().err
    assert cli.main(["srt", "-s", "novalue", "--outdir", str(tmp_path)]) == 3
    assert cli.main(["srt", "--mode", "iid", "-s", "beta=0.4", "--outdir",
                     str(tmp_path)]) == 3


def test_env_outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path / "env"))
    assert cli.main(["constants", "--quiet", "--outdir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "constants.json").exists()
    assert not (tmp_path / "flag").exists()


def test_config_file_and_shards(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("mode = iid\nN = 2000\nt_ladder = 100, 1000, 3\n")
    out = []
    for shards in ("1", "8"):
        d = tmp_path / shards
        cli.main(["srt", "-c", str(cfg), "--shards", shards, "--quiet", "--outdir", str(d)])
        rep = json.loads((d / "srt.json").read_text())
        rep.pop("timings")
        rep["config"].pop("shards"), rep["config"].pop("outdir"), rep["provenance"].pop("shards")
        out.append(rep)
    assert out[0] == out[1]


def test_unknown_command():
    with pytest.raises(SystemExit):
        cli.main(["bogus"])
