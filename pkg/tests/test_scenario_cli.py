"""Scene-file parsing and the command-line front end."""

import textwrap

import pytest

from cwbench import cli
from cwbench.scenario import ParseError, parse_scenario

GOOD = textwrap.dedent(
    """\
    name: tiny_line
    description: Nadel period of a flat line
    chart:
      grid: [16]
    bundles:
      trivial: {rank: 1}
      twisted:
        rank: 1
        connection:
          - [[0], [0], 0.3j]
    computations:
      - op: nadel_class
        label: line
        E: trivial
        F: twisted
        expect: {dx1: EXPECTED}
    """
)


def scene(tmp_path, expected="-0.0477464829275686", name="tiny_line", fname="tiny.yaml"):
    p = tmp_path / fname
    p.write_text(GOOD.replace("EXPECTED", expected).replace("tiny_line", name))
    return p


def test_parse_good_scene():
    sc = parse_scenario(GOOD.replace("EXPECTED", "0.0"))
    assert sc.name == "tiny_line" and sc.seed == 0 and not sc.fibered
    assert set(sc.bundles) == {"trivial", "twisted"}
    assert [c.label for c in sc.computations] == ["line"]


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("name: a\nname: b\n", 2, "duplicate key"),
        ("name: a\nchart: {grid: [16]\n", None, ""),
        ("name: a\nchart:\n  grid: [2]\ncomputations: [{op: flatness, bundle: x}]\n", 3, "chart.grid"),
        ("name: a\nchart: {grid: [8]}\nbogus: 1\ncomputations: [{op: flatness}]\n", 3, "unknown top-level"),
        ("name: a\nchart: {grid: [8]}\ncomputations:\n  - op: nope\n", 4, "unknown operation"),
    ],
)
def test_parse_errors_carry_positions(text, line, fragment):
    with pytest.raises(ParseError) as ei:
        parse_scenario(text, "scene.yaml")
    err = ei.value
    assert err.line is not None and err.column is not None
    if line is not None:
        assert err.line == line
    assert fragment in err.message
    assert str(err).startswith("scene.yaml:")


def test_unknown_bundle_reference():
    text = GOOD.replace("EXPECTED", "0").replace("F: twisted", "F: missing")
    with pytest.raises(ParseError, match="unknown bundle"):
        parse_scenario(text)


def test_list_is_sorted_and_includes_custom_dir(tmp_path, capsys):
    scene(tmp_path)
    assert cli.main(["list", "--dir", str(tmp_path)]) == cli.EXIT_PASS
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == sorted(names) and "tiny_line" in names and "flat_line_nadel" in names


def test_duplicate_scenario_names_rejected(tmp_path, capsys):
    scene(tmp_path, fname="a.yaml")
    scene(tmp_path, fname="b.yaml")
    assert cli.main(["list", "--dir", str(tmp_path)]) == cli.EXIT_USAGE
    assert "duplicate scenario name" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys, monkeypatch):
    assert cli.main(["run", str(scene(tmp_path))]) == cli.EXIT_PASS
    wrong = scene(tmp_path, expected="0.5", name="wrong", fname="wrong.yaml")
    assert cli.main(["run", str(wrong)]) == cli.EXIT_FAIL
    assert "status = fail" in capsys.readouterr().out
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: [unclosed\n")
    assert cli.main(["run", str(bad)]) == cli.EXIT_USAGE
    assert cli.main(["run", "no_such_scenario"]) == cli.EXIT_USAGE
    assert cli.main(["run", "flat_line_nadel", "--grid-scale", "0"]) == cli.EXIT_USAGE
    assert cli.main(["run", "flat_line_nadel", "--seed", str(2**64)]) == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as ei:
        cli.main(["frobnicate"])
    assert ei.value.code == cli.EXIT_USAGE

    def boom(*a, **k):
        raise RuntimeError("bug")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["run", str(scene(tmp_path))]) == cli.EXIT_INTERNAL


def test_strict_turns_warnings_into_failures(capsys):
    assert cli.main(["run", "identity_suite_t2"]) == cli.EXIT_PASS
    out = capsys.readouterr().out
    assert "warning" in out
    assert cli.main(["run", "identity_suite_t2", "--strict"]) == cli.EXIT_FAIL


def test_seed_grid_scale_and_out(tmp_path, capsys):
    cli.main(["run", "identity_suite_t2"])
    base = capsys.readouterr().out
    cli.main(["run", "identity_suite_t2", "--seed", "11"])
    reseeded = capsys.readouterr().out
    assert "seed = 11" in reseeded and reseeded != base.replace("seed = 7", "seed = 11")
    out = tmp_path / "report.txt"
    assert cli.main(["run", "flat_line_nadel", "--grid-scale", "2", "--out", str(out)]) == cli.EXIT_PASS
    printed = capsys.readouterr().out
    assert out.read_text() == printed and "grid_scale = 2" in printed


def test_reruns_are_byte_identical_without_timing(capsys):
    runs = []
    for _ in range(2):
        cli.main(["run", "flat_line_nadel"])
        runs.append(capsys.readouterr().out)
    assert runs[0] == runs[1]
    cli.main(["run", "flat_line_nadel", "--timing"])
    assert "time" in capsys.readouterr().out
