import numpy as np
import pytest

from tspn.cli import EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main
from tspn.geometry import Tour
from tspn.instance import read_instance, read_sidecar, read_tour, write_tour


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_random_and_solve(tmp_path, capsys):
    inst = tmp_path / "d.txt"
    assert run(capsys, "gen", "random", "--groups", 3, "--points", 6, "--out", inst)[0] == EXIT_OK
    tour = tmp_path / "t.txt"
    code, out, _ = run(capsys, "solve", "tspn", inst, "--shifts", 1, "--out", tour, "--svg", tmp_path / "t.svg")
    assert code == EXIT_OK and "feasible = True" in out
    assert read_sidecar(str(tour) + ".meta")["mode"] == "tspn"
    assert (tmp_path / "t.svg").read_text().startswith("<svg")
    assert run(capsys, "verify", "tour", inst, tour)[0] == EXIT_OK
    assert run(capsys, "solve", "oracle", inst, "--out", tmp_path / "o.txt")[0] == EXIT_OK
    assert run(capsys, "solve", "tsp", inst, "--shifts", 1)[0] == EXIT_OK


def test_verify_infeasible_tour(tmp_path, capsys):
    inst = tmp_path / "d.txt"
    run(capsys, "gen", "random", "--groups", 3, "--points", 3, "--out", inst)
    far = tmp_path / "far.txt"
    write_tour(Tour(np.array([[100.0, 100.0]])), far)
    assert run(capsys, "verify", "tour", inst, far)[0] == EXIT_INFEASIBLE


def test_usage_and_io_errors(tmp_path, capsys):
    assert run(capsys, "verify", "instance", tmp_path / "missing.txt")[0] == EXIT_IO
    with pytest.raises(SystemExit) as exc:
        main(["solve", "bogus", "x"])
    assert exc.value.code == EXIT_IO
    lines = tmp_path / "l.txt"
    run(capsys, "gen", "random", "--lines", "--groups", 3, "--out", lines)
    assert run(capsys, "solve", "tsp", lines)[0] == EXIT_IO
    assert run(capsys, "gen", "cube")[0] == EXIT_IO


def test_gen_cube_and_report(tmp_path, capsys):
    out = tmp_path / "cube.txt"
    code, text, _ = run(capsys, "gen", "cube", "--classes", 1, 1, 1, "--edges", "1.1-2.1", "--no-gadgets",
                        "--out", out)
    assert code == EXIT_OK and "Q_size" in text
    inst = read_instance(out)
    assert inst.n == 1
    code, text, _ = run(capsys, "report", str(out) + ".meta")
    assert code == EXIT_OK and "delta" in text.splitlines()[0]
    assert run(capsys, "gen", "cube", "--classes", 1, 1, 1, "--edges", "1.1-1.1", "--out", out)[0] == EXIT_IO


def test_gen_highdim_lift_discretize(tmp_path, capsys):
    hd = tmp_path / "hd.txt"
    assert run(capsys, "gen", "highdim", "--vertices", 2, "--edges", "0-1", "--alpha", 2, "--out", hd)[0] == EXIT_OK
    assert read_instance(hd).n == 4
    lines = tmp_path / "l.txt"
    run(capsys, "gen", "random", "--lines", "--groups", 3, "--out", lines)
    flats = tmp_path / "f.txt"
    assert run(capsys, "gen", "lift", lines, "--k", 2, "--dim", 4, "--out", flats)[0] == EXIT_OK
    assert run(capsys, "verify", "instance", flats)[0] == EXIT_OK
    disc = tmp_path / "disc.txt"
    assert run(capsys, "discretize", lines, "--out", disc)[0] == EXIT_OK
    assert read_instance(disc).n == 3


def test_caps_exit_two(tmp_path, capsys):
    inst = tmp_path / "d.txt"
    run(capsys, "gen", "random", "--groups", 15, "--points", 15, "--out", inst)
    assert run(capsys, "solve", "oracle", inst)[0] == EXIT_INFEASIBLE
    assert run(capsys, "gen", "highdim", "--vertices", 2, "--edges", "0-1", "--alpha", 2, "--dim", 2,
               "--out", tmp_path / "x.txt")[0] == EXIT_INFEASIBLE
