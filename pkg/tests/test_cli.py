import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weylband.cli import SUBCOMMANDS, build_parser, main
from weylband.config import dump_config, parse_config, parse_eps
from weylband.errors import ConfigError
from weylband.harness import ScenarioConfig


def write(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return str(p)


def test_help_lists_flags(capsys):
    for cmd in SUBCOMMANDS:
        with pytest.raises(SystemExit) as info:
            main([cmd, "--help"])
        assert info.value.code == 0
        out = capsys.readouterr().out
        for flag in ("--config", "--h", "--h-list", "--eps-exponent", "--grid-n", "--output-dir", "--verbose"):
            assert flag in out


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as info:
        main(["count", "--frobnicate"])
    assert info.value.code == 2


def test_missing_config(tmp_path, capsys):
    assert main(["volume", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_bad_config_key(tmp_path):
    assert main(["volume", "--config", write(tmp_path, "[band]\nwidth = 3\n")]) == 2
    assert main(["volume", "--config", write(tmp_path, "[surface]\nfamily = 'cone'\n")]) == 2
    assert main(["volume", "--config", write(tmp_path, "not toml [")]) == 2


def test_tangent_level_exit_1(tmp_path, capsys):
    code = main(["volume", "--config", write(tmp_path, "[band]\nF1 = 0.5\n"), "--output-dir", str(tmp_path / "o")])
    assert code == 1
    assert "transversality" in capsys.readouterr().err


def test_singular_leaf_exit_1(tmp_path, capsys):
    code = main(["volume", "--config", write(tmp_path, "[band]\nF3 = 0.0\n"), "--output-dir", str(tmp_path / "o")])
    assert code == 1
    assert "singular-leaf" in capsys.readouterr().err


def test_count_writes_outputs(tmp_path):
    out = tmp_path / "o"
    code = main(["count", "--h-list", "0.1,0.08", "--grid-n", "256", "--output-dir", str(out)])
    assert code == 0
    body = json.loads((out / "report.json").read_text())
    assert [r["h"] for r in body["rows"]] == [0.1, 0.08]
    echoed = parse_config((out / "effective_config.toml").read_text())
    assert echoed.h_list == (0.1, 0.08) and echoed.grid_n == 256


def test_flags_override_config(tmp_path):
    path = write(tmp_path, "[numerics]\nh_list = [0.2, 0.1]\ngrid_n = 512\n[band]\neps = 'h^0.5'\n")
    args = build_parser().parse_args(["count", "--config", path, "--h", "0.05", "--eps-exponent", "0.66"])
    from weylband.cli import effective_config

    cfg = effective_config(args)
    assert cfg.h_list == (0.05,) and cfg.grid_n == 512 and cfg.eps_exponent == 0.66


def test_classical_and_dampedwave(tmp_path):
    out = tmp_path / "o"
    assert main(["classical", "--output-dir", str(out)]) == 0
    assert (out / "classical.csv").read_text().startswith("a,omega,iota")
    cfg = write(tmp_path, "[dampedwave]\ndamping = 'cos2s'\nbox = [8.0, 12.0, 0.2, 0.4]\ngrid_n = 256\n")
    assert main(["dampedwave", "--config", cfg, "--output-dir", str(out)]) == 0
    res = json.loads((out / "dampedwave.json").read_text())
    assert res["count"] == res["mirror_count"]


def test_parse_eps():
    assert parse_eps("h^0.5") == (0.5, None)
    assert parse_eps("h**0.6666") == (0.6666, None)
    assert parse_eps(0.1) == (None, 0.1)
    with pytest.raises(ConfigError):
        parse_eps("sqrt(h)")


@given(
    c=st.floats(-0.3, 1 / 6),
    e2=st.floats(0.1, 1.0),
    width=st.floats(0.01, 1.0),
    expo=st.one_of(st.none(), st.floats(0.1, 1.0)),
    hs=st.lists(st.floats(0.005, 0.5), min_size=1, max_size=4, unique=True),
    grid=st.integers(128, 4096),
)
@settings(max_examples=50, deadline=None)
def test_config_round_trip(c, e2, width, expo, hs, grid):
    cfg = ScenarioConfig(
        surface="perturbed_sphere",
        surface_params={"c": c},
        observable="bump",
        observable_params={"beta": 2.0, "s1": 1.0},
        E2=e2,
        E4=e2 + width,
        eps_exponent=expo,
        eps=None if expo is not None else 0.05,
        h_list=tuple(sorted(hs, reverse=True)),
        grid_n=grid,
    )
    assert parse_config(dump_config(cfg)) == cfg
